#pragma once

#include "gkf/experiment.hpp"
#include "gkf/model.hpp"

#include <charconv>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gkf::io {

/// Malformed input file.
class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(std::string(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

/// Parses a double written by format_double (also accepts inf / nan).
inline double parse_double(std::string_view s) {
  const std::string t = trim(s);
  if (t == "inf") return std::numeric_limits<double>::infinity();
  if (t == "-inf") return -std::numeric_limits<double>::infinity();
  if (t == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto* first = t.data();
  const auto* last = t.data() + t.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (t.empty() || ec != std::errc() || ptr != last) {
    throw FormatError("not a number: '" + t + "'");
  }
  return v;
}

// ---------------------------------------------------------------------------
// trajectory CSV
//
// Row t carries x_t, u_t (empty on the last row) and y_t, the measurement of
// x_t (empty on row 0).

inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  if (traj.states.empty()) throw std::invalid_argument("write_trajectory_csv: empty trajectory");
  const auto n = traj.states.front().size();
  const auto k = traj.controls.empty() ? 0 : traj.controls.front().size();
  const auto m = traj.observations.empty() ? 0 : traj.observations.front().size();
  os << "t";
  for (Eigen::Index i = 0; i < n; ++i) os << ",x_" << i;
  for (Eigen::Index i = 0; i < k; ++i) os << ",u_" << i;
  for (Eigen::Index i = 0; i < m; ++i) os << ",y_" << i;
  os << "\n";
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    os << t;
    for (Eigen::Index i = 0; i < n; ++i) os << "," << format_double(traj.states[t][i]);
    for (Eigen::Index i = 0; i < k; ++i) {
      os << ",";
      if (t < traj.controls.size()) os << format_double(traj.controls[t][i]);
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      os << ",";
      if (t > 0) os << format_double(traj.observations[t - 1][i]);
    }
    os << "\n";
  }
}

inline Trajectory read_trajectory_csv(std::istream& is, std::uint64_t seed = 0) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("trajectory CSV: missing header");
  const auto header = split(trim(line), ',');
  if (header.empty() || header[0] != "t") throw FormatError("trajectory CSV: first column must be t");
  Eigen::Index n = 0, k = 0, m = 0;
  int group = 0;
  for (std::size_t c = 1; c < header.size(); ++c) {
    const std::string& h = header[c];
    const int g = h.rfind("x_", 0) == 0 ? 0 : h.rfind("u_", 0) == 0 ? 1 : h.rfind("y_", 0) == 0 ? 2 : -1;
    if (g < 0) throw FormatError("trajectory CSV: unknown column '" + h + "'");
    Eigen::Index* count = g == 0 ? &n : g == 1 ? &k : &m;
    if (g < group || h != h.substr(0, 2) + std::to_string(*count)) {
      throw FormatError("trajectory CSV: column '" + h + "' out of order");
    }
    group = g;
    ++*count;
  }
  if (static_cast<std::size_t>(1 + n + k + m) != header.size() || n == 0 || k == 0 || m == 0) {
    throw FormatError("trajectory CSV: need x_*, u_* and y_* columns in that order");
  }

  Trajectory traj;
  traj.seed = seed;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    auto cells = split(trim(line), ',');
    if (cells.size() != header.size()) {
      throw FormatError("trajectory CSV: row " + std::to_string(rows.size()) + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(header.size()));
    }
    rows.push_back(std::move(cells));
  }
  if (rows.size() < 2) throw FormatError("trajectory CSV: need at least two rows");
  auto read_block = [&](const std::vector<std::string>& cells, Eigen::Index offset,
                        Eigen::Index size) {
    Vec v(size);
    for (Eigen::Index i = 0; i < size; ++i) {
      v[i] = parse_double(cells[static_cast<std::size_t>(1 + offset + i)]);
    }
    if (!v.allFinite()) throw FormatError("trajectory CSV: non-finite value");
    return v;
  };
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (rows[t][0] != std::to_string(t)) {
      throw FormatError("trajectory CSV: expected t = " + std::to_string(t) + ", got '" +
                        rows[t][0] + "'");
    }
    traj.states.push_back(read_block(rows[t], 0, n));
    if (t + 1 < rows.size()) traj.controls.push_back(read_block(rows[t], n, k));
    if (t > 0) traj.observations.push_back(read_block(rows[t], n + k, m));
  }
  return traj;
}

// ---------------------------------------------------------------------------
// experiment outputs

inline std::string results_file_name(const ExperimentConfig& cfg) {
  return "results_" + std::string(to_string(cfg.scenario)) + "_seed" + std::to_string(cfg.seed) +
         "_n" + std::to_string(cfg.inference.n_steps) + ".csv";
}

inline void write_results_csv(std::ostream& os, const ExperimentResult& r) {
  if (r.records.empty()) throw std::invalid_argument("write_results_csv: no records");
  const auto n = r.records.front().x_true.size();
  const auto m = r.records.front().y.size();
  os << "t";
  for (Eigen::Index i = 0; i < n; ++i) os << ",x_true_" << i;
  for (Eigen::Index i = 0; i < m; ++i) os << ",y_" << i;
  for (Eigen::Index i = 0; i < n; ++i) os << ",mu_kf_" << i;
  for (Eigen::Index i = 0; i < n; ++i) os << ",mu_gkf_" << i;
  os << ",loss\n";
  for (const auto& rec : r.records) {
    os << rec.t;
    for (const Vec* v : {&rec.x_true, &rec.y, &rec.mu_kf, &rec.mu_gkf}) {
      for (Eigen::Index i = 0; i < v->size(); ++i) os << "," << format_double((*v)[i]);
    }
    os << "," << format_double(rec.loss) << "\n";
  }
}

/// Baseline means aligned with the results CSV; a diverged baseline leaves its
/// cells empty.
inline void write_baselines_csv(std::ostream& os, const ExperimentResult& r) {
  const auto n = r.records.empty() ? 0 : r.records.front().x_true.size();
  os << "t";
  for (const auto& b : r.baselines) {
    for (Eigen::Index i = 0; i < n; ++i) os << ",mu_" << b.name << "_" << i;
  }
  os << "\n";
  for (std::size_t t = 0; t < r.records.size(); ++t) {
    os << r.records[t].t;
    for (const auto& b : r.baselines) {
      for (Eigen::Index i = 0; i < n; ++i) {
        os << ",";
        if (t < b.means.size()) os << format_double(b.means[t][i]);
      }
    }
    os << "\n";
  }
}

struct NamedMatrix {
  std::string name;
  Mat value;
};

/// Blocks of `name rows cols` followed by `rows` lines of row-major values.
inline void write_matrices(std::ostream& os, const std::vector<NamedMatrix>& ms) {
  for (const auto& nm : ms) {
    os << nm.name << " " << nm.value.rows() << " " << nm.value.cols() << "\n";
    for (Eigen::Index r = 0; r < nm.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < nm.value.cols(); ++c) {
        os << (c ? " " : "") << format_double(nm.value(r, c));
      }
      os << "\n";
    }
  }
}

inline std::vector<NamedMatrix> snapshot_matrices(const ExperimentResult& r) {
  std::vector<NamedMatrix> out;
  for (const auto& s : r.matrices) {
    out.push_back({s.name + "_initial", s.initial});
    out.push_back({s.name + "_final", s.final});
  }
  return out;
}

inline std::vector<NamedMatrix> read_matrices(std::istream& is) {
  std::vector<NamedMatrix> out;
  std::string name;
  while (is >> name) {
    long rows = 0, cols = 0;
    if (!(is >> rows >> cols) || rows < 1 || cols < 1) {
      throw FormatError("matrix dump: bad header for '" + name + "'");
    }
    Mat m(rows, cols);
    for (long r = 0; r < rows; ++r) {
      for (long c = 0; c < cols; ++c) {
        std::string tok;
        if (!(is >> tok)) throw FormatError("matrix dump: truncated block '" + name + "'");
        m(r, c) = parse_double(tok);
      }
    }
    out.push_back({name, std::move(m)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// key = value files (config, metrics, manifest)

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// `key = value` per line, `#` starts a comment, blank lines ignored. Keys are
/// returned as written.
inline KeyValues parse_key_values(std::istream& is) {
  KeyValues out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw FormatError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw FormatError("line " + std::to_string(lineno) + ": empty key");
    out.emplace_back(std::move(key), trim(std::string_view(body).substr(eq + 1)));
  }
  return out;
}

inline void write_key_values(std::ostream& os, const KeyValues& kv) {
  for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
}

}  // namespace gkf::io
