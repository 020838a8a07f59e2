// Command-line front end: simulate, compare, learn, selftest.
//
// Exit codes: 0 success, 1 runtime failure (I/O, divergence, failed
// selftest), 2 usage error.

#include "CLI11.hpp"
#include "gkf/gkf.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  gkf::ExperimentConfig defaults;

  std::size_t horizon = defaults.horizon;
  double dt = defaults.dt;
  double q_std = defaults.q_std;
  double r_std = defaults.r_std;
  std::string c_mode = "identity";
  double u0 = defaults.u0;
  double decay = defaults.decay;
  std::uint64_t seed = defaults.seed;

  std::vector<int> n_steps;
  int learn_n_steps = defaults.inference.n_steps;
  std::string eta_mu = "auto";
  std::string precision = "auto";
  std::string init = "prediction";
  double window_fraction = defaults.window_fraction;
  std::optional<double> filter_q_std;
  std::optional<double> filter_r_std;
  std::string traj;
  int jobs = 1;

  std::string scenario;
  double lr = defaults.inference.lr_A;
  bool interleave_learning = false;

  int instances = 50;
  bool inject_grad_mu_sign_flip = false;

  std::string out = "gkf_out";
  std::string config;
};

struct Commands {
  CLI::App* simulate = nullptr;
  CLI::App* compare = nullptr;
  CLI::App* learn = nullptr;
  CLI::App* selftest = nullptr;
};

// Options whose presence counts as "simulation parameters given" for compare.
const std::set<std::string> simulation_flags = {"--horizon", "--dt", "--q-std", "--r-std",
                                                "--c-mode", "--u0", "--decay", "--seed"};

const std::set<std::string> manifest_meta_keys = {"tool_version", "command", "outputs",
                                                  "wall_clock_seconds"};

const CLI::Validator eta_validator(
    [](std::string& s) -> std::string {
      if (s == "auto") return {};
      try {
        const double v = gkf::io::parse_double(s);
        if (v > 0.0 && std::isfinite(v)) return {};
      } catch (const std::exception&) {
      }
      return "must be 'auto' or a positive number";
    },
    "auto|ETA");

void add_simulation_flags(CLI::App* sub, Options& o) {
  sub->add_option("--horizon", o.horizon, "number of timesteps")->check(CLI::PositiveNumber);
  sub->add_option("--dt", o.dt, "integration step")->check(CLI::PositiveNumber);
  sub->add_option("--q-std", o.q_std, "process noise std")->check(CLI::NonNegativeNumber);
  sub->add_option("--r-std", o.r_std, "observation noise std")->check(CLI::NonNegativeNumber);
  sub->add_option("--c-mode", o.c_mode, "observation matrix")
      ->check(CLI::IsMember({"identity", "random"}));
  sub->add_option("--u0", o.u0, "initial control amplitude");
  sub->add_option("--decay", o.decay, "control decay per step")->check(CLI::NonNegativeNumber);
  sub->add_option("--seed", o.seed, "run seed");
  sub->add_option("--out", o.out, "output directory");
  sub->add_option("--config", o.config, "key = value file (flags override it)");
}

void add_filter_flags(CLI::App* sub, Options& o) {
  sub->add_option("--eta-mu", o.eta_mu, "step size on mu, or auto (1/lambda_max)")
      ->check(eta_validator);
  sub->add_option("--precision", o.precision, "precision weighting")
      ->check(CLI::IsMember({"auto", "fixed", "projected"}));
  sub->add_option("--init", o.init, "start of the gradient iterations")
      ->check(CLI::IsMember({"prediction", "previous"}));
  sub->add_option("--window-fraction", o.window_fraction, "fraction of steps per metric window")
      ->check(CLI::Range(1e-9, 0.5));
  sub->add_option("--filter-q-std", o.filter_q_std, "process noise std assumed by the filters")
      ->check(CLI::PositiveNumber);
  sub->add_option("--filter-r-std", o.filter_r_std, "observation noise std assumed by the filters")
      ->check(CLI::PositiveNumber);
  sub->add_option("--traj", o.traj, "trajectory CSV to filter instead of simulating")
      ->check(CLI::ExistingFile);
}

Commands build_app(CLI::App& app, Options& o) {
  app.require_subcommand(1);
  Commands c;
  c.simulate = app.add_subcommand("simulate", "simulate the kinematic task, write a trajectory CSV");
  add_simulation_flags(c.simulate, o);

  c.compare = app.add_subcommand("compare", "run the Kalman and gradient filters on one trajectory");
  add_simulation_flags(c.compare, o);
  add_filter_flags(c.compare, o);
  c.compare->add_option("--n-steps", o.n_steps, "gradient steps per timestep (repeatable)")
      ->check(CLI::PositiveNumber);
  c.compare->add_option("--jobs", o.jobs, "parallel runs")->check(CLI::PositiveNumber);

  c.learn = app.add_subcommand("learn", "online Hebbian learning of A, B or C");
  add_simulation_flags(c.learn, o);
  add_filter_flags(c.learn, o);
  // Required, but checked after config values are applied.
  c.learn->add_option("--scenario", o.scenario, "which matrices to learn (required)")
      ->check(CLI::IsMember({"a", "b", "ab", "c"}));
  c.learn->add_option("--n-steps", o.learn_n_steps, "gradient steps per timestep")
      ->check(CLI::PositiveNumber);
  c.learn->add_option("--lr", o.lr, "learning rate of the learned matrices")
      ->check(CLI::NonNegativeNumber);
  c.learn->add_flag("--interleave-learning", o.interleave_learning,
                    "update weights after every gradient step");

  c.selftest = app.add_subcommand("selftest", "run the embedded oracle checks");
  c.selftest->add_option("--instances", o.instances, "random instances per check")
      ->check(CLI::PositiveNumber);
  c.selftest->add_flag("--inject-grad-mu-sign-flip", o.inject_grad_mu_sign_flip)->group("");
  return c;
}

CLI::App* active(const Commands& c) {
  for (CLI::App* s : {c.simulate, c.compare, c.learn, c.selftest}) {
    if (s->parsed()) return s;
  }
  return nullptr;
}

std::string key_to_flag(std::string key) {
  for (char& ch : key) {
    if (ch == '_') ch = '-';
  }
  return "--" + key;
}

/// Flags derived from the config file for every option not already given on
/// the command line.
std::vector<std::string> config_arguments(const std::string& path, CLI::App* sub) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file '" + path + "'");
  gkf::io::KeyValues kv;
  try {
    kv = gkf::io::parse_key_values(in);
  } catch (const gkf::io::FormatError& e) {
    throw UsageError("config file '" + path + "': " + e.what());
  }
  std::vector<std::string> args;
  for (const auto& [key, value] : kv) {
    if (manifest_meta_keys.count(key)) continue;
    const std::string flag = key_to_flag(key);
    CLI::Option* opt = flag == "--config" ? nullptr : sub->get_option_no_throw(flag);
    if (!opt) throw UsageError("config file '" + path + "': unknown key '" + key + "'");
    if (opt->count() > 0) continue;
    if (key == "n_steps") {
      for (const auto& item : gkf::io::split(value, ',')) {
        args.push_back(flag + "=" + gkf::io::trim(item));
      }
    } else {
      args.push_back(flag + "=" + value);
    }
  }
  return args;
}

gkf::Scenario scenario_of(const std::string& s) {
  if (s == "a") return gkf::Scenario::learn_A;
  if (s == "b") return gkf::Scenario::learn_B;
  if (s == "ab") return gkf::Scenario::learn_AB;
  if (s == "c") return gkf::Scenario::learn_C;
  return gkf::Scenario::none;
}

gkf::ExperimentConfig make_config(const Options& o, int n_steps, gkf::Scenario scenario) {
  gkf::ExperimentConfig cfg;
  cfg.horizon = o.horizon;
  cfg.dt = o.dt;
  cfg.q_std = o.q_std;
  cfg.r_std = o.r_std;
  cfg.c_mode = o.c_mode == "random" ? gkf::ObservationMode::random() : gkf::ObservationMode::identity();
  cfg.u0 = o.u0;
  cfg.decay = o.decay;
  cfg.seed = o.seed;
  cfg.scenario = scenario;
  cfg.window_fraction = o.window_fraction;
  cfg.filter_q_std = o.filter_q_std;
  cfg.filter_r_std = o.filter_r_std;
  cfg.precision = o.precision == "fixed"       ? gkf::PrecisionChoice::fixed
                  : o.precision == "projected" ? gkf::PrecisionChoice::projected
                                               : gkf::PrecisionChoice::automatic;
  cfg.inference.n_steps = n_steps;
  if (o.eta_mu != "auto") cfg.inference.eta_mu = gkf::io::parse_double(o.eta_mu);
  cfg.inference.init = o.init == "previous" ? gkf::InitPolicy::previous_estimate
                                            : gkf::InitPolicy::prediction;
  cfg.inference.lr_A = cfg.inference.lr_B = cfg.inference.lr_C = o.lr;
  cfg.inference.interleave_learning = o.interleave_learning;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s;
}

/// Resolved configuration as `key = value` entries, readable back by --config.
gkf::io::KeyValues config_entries(const std::string& command, const Options& o) {
  using gkf::format_double;
  gkf::io::KeyValues kv = {
      {"horizon", std::to_string(o.horizon)}, {"dt", format_double(o.dt)},
      {"q_std", format_double(o.q_std)},      {"r_std", format_double(o.r_std)},
      {"c_mode", o.c_mode},                   {"u0", format_double(o.u0)},
      {"decay", format_double(o.decay)},      {"seed", std::to_string(o.seed)},
      {"out", o.out},
  };
  if (command == "simulate") return kv;
  if (command == "learn") {
    kv.emplace_back("scenario", o.scenario);
    kv.emplace_back("n_steps", std::to_string(o.learn_n_steps));
    kv.emplace_back("lr", format_double(o.lr));
    kv.emplace_back("interleave_learning", o.interleave_learning ? "true" : "false");
  } else {
    kv.emplace_back("n_steps", join_ints(o.n_steps));
    kv.emplace_back("jobs", std::to_string(o.jobs));
  }
  kv.emplace_back("eta_mu", o.eta_mu);
  kv.emplace_back("precision", o.precision);
  kv.emplace_back("init", o.init);
  kv.emplace_back("window_fraction", format_double(o.window_fraction));
  if (o.filter_q_std) kv.emplace_back("filter_q_std", format_double(*o.filter_q_std));
  if (o.filter_r_std) kv.emplace_back("filter_r_std", format_double(*o.filter_r_std));
  if (!o.traj.empty()) kv.emplace_back("traj", o.traj);
  return kv;
}

/// Files written under the output directory; rollback() removes them (and the
/// directory, if this run created it).
class OutputDir {
public:
  explicit OutputDir(fs::path root) : root_(std::move(root)) {}

  void write(const std::string& name, const std::string& content) {
    if (!fs::exists(root_)) {
      created_ = !root_.empty();
      fs::create_directories(root_);
    }
    const fs::path p = root_ / name;
    written_.push_back(p);
    std::ofstream f(p, std::ios::binary);
    f << content;
    f.close();
    if (!f) throw std::runtime_error("cannot write '" + p.string() + "'");
    names_.push_back(name);
  }

  void rollback() noexcept {
    std::error_code ec;
    for (const auto& p : written_) fs::remove(p, ec);
    if (created_ && fs::is_empty(root_, ec)) fs::remove(root_, ec);
  }

  const std::vector<std::string>& names() const { return names_; }

private:
  fs::path root_;
  bool created_ = false;
  std::vector<fs::path> written_;
  std::vector<std::string> names_;
};

template <typename F>
std::string render(F&& f) {
  std::ostringstream os;
  f(os);
  return os.str();
}

void write_manifest(OutputDir& out, const std::string& command, const Options& o,
                    std::chrono::steady_clock::time_point start) {
  gkf::io::KeyValues kv = {{"tool_version", gkf::version}, {"command", command}};
  for (auto& e : config_entries(command, o)) kv.push_back(std::move(e));
  std::string outputs;
  for (const auto& n : out.names()) outputs += (outputs.empty() ? "" : ", ") + n;
  kv.emplace_back("outputs", outputs);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  kv.emplace_back("wall_clock_seconds", gkf::format_double(secs));
  out.write("manifest.txt", render([&](std::ostream& os) { gkf::io::write_key_values(os, kv); }));
}

std::optional<gkf::Trajectory> load_trajectory(const Options& o) {
  if (o.traj.empty()) return std::nullopt;
  std::ifstream in(o.traj);
  if (!in) throw std::runtime_error("cannot read trajectory '" + o.traj + "'");
  return gkf::io::read_trajectory_csv(in, o.seed);
}

std::string describe(const gkf::ExperimentConfig& c) {
  return "scenario=" + std::string(gkf::to_string(c.scenario)) + " seed=" + std::to_string(c.seed) +
         " n_steps=" + std::to_string(c.inference.n_steps) + " eta_mu=" +
         (c.inference.eta_mu ? gkf::format_double(*c.inference.eta_mu) : std::string("auto")) +
         " lr=" + gkf::format_double(c.inference.lr_A) + " dt=" + gkf::format_double(c.dt) +
         " q_std=" + gkf::format_double(c.q_std) + " r_std=" + gkf::format_double(c.r_std);
}

void write_run_outputs(OutputDir& out, const gkf::ExperimentResult& r) {
  const std::string stem = gkf::io::results_file_name(r.config);
  const std::string tag = stem.substr(std::string("results_").size(),
                                      stem.size() - std::string("results_.csv").size());
  out.write(stem, render([&](std::ostream& os) { gkf::io::write_results_csv(os, r); }));
  if (!r.baselines.empty()) {
    out.write("baselines_" + tag + ".csv",
              render([&](std::ostream& os) { gkf::io::write_baselines_csv(os, r); }));
    out.write("matrices_" + tag + ".txt", render([&](std::ostream& os) {
                gkf::io::write_matrices(os, gkf::io::snapshot_matrices(r));
              }));
  }
  out.write("metrics_" + tag + ".txt", gkf::summarize(r));
}

int cmd_simulate(const Options& o, OutputDir& out, std::chrono::steady_clock::time_point start) {
  const gkf::ExperimentConfig cfg = make_config(o, 5, gkf::Scenario::none);
  const gkf::Trajectory traj = gkf::simulate_experiment(cfg);
  out.write("trajectory.csv", render([&](std::ostream& os) { gkf::io::write_trajectory_csv(os, traj); }));
  write_manifest(out, "simulate", o, start);
  return 0;
}

int cmd_compare(Options o, const CLI::App* sub, OutputDir& out,
                std::chrono::steady_clock::time_point start) {
  bool simulation_given = false;
  for (const auto& f : simulation_flags) {
    simulation_given = simulation_given || sub->get_option(f)->count() > 0;
  }
  if (o.traj.empty() && !simulation_given) {
    throw UsageError("compare needs --traj or simulation flags (e.g. --seed, --horizon)");
  }
  if (o.n_steps.empty()) o.n_steps = {o.defaults.inference.n_steps};

  std::optional<gkf::Trajectory> traj = load_trajectory(o);
  std::vector<gkf::ExperimentConfig> cfgs;
  for (int n : o.n_steps) cfgs.push_back(make_config(o, n, gkf::Scenario::none));
  if (!traj) traj = gkf::simulate_experiment(cfgs.front());

  std::vector<std::optional<gkf::ExperimentResult>> results(cfgs.size());
  std::vector<std::string> errors(cfgs.size());
  auto run_one = [&](std::size_t i) {
    try {
      results[i] = gkf::run_tracking(cfgs[i], *traj);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  };
  const std::size_t jobs = static_cast<std::size_t>(std::max(1, o.jobs));
  for (std::size_t begin = 0; begin < cfgs.size(); begin += jobs) {
    std::vector<std::future<void>> batch;
    for (std::size_t i = begin; i < std::min(cfgs.size(), begin + jobs); ++i) {
      batch.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred, run_one, i));
    }
    for (auto& f : batch) f.get();
  }
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    if (!errors[i].empty()) {
      throw std::runtime_error("compare failed for " + describe(cfgs[i]) + ": " + errors[i]);
    }
  }
  for (const auto& r : results) write_run_outputs(out, *r);
  write_manifest(out, "compare", o, start);
  return 0;
}

int cmd_learn(const Options& o, OutputDir& out, std::chrono::steady_clock::time_point start) {
  if (o.scenario.empty()) throw UsageError("learn needs --scenario (a, b, ab or c)");
  const gkf::ExperimentConfig cfg = make_config(o, o.learn_n_steps, scenario_of(o.scenario));
  gkf::ExperimentResult r;
  try {
    r = gkf::run_experiment(cfg, load_trajectory(o));
  } catch (const gkf::DivergenceError& e) {
    throw std::runtime_error("numerical divergence (" + describe(cfg) + "): " + e.what() +
                             "\nuse a smaller --lr; learning is stable around 1e-5");
  }
  write_run_outputs(out, r);
  write_manifest(out, "learn", o, start);
  return 0;
}

int cmd_selftest(const Options& o) {
  gkf::selftest::Options so;
  so.instances = o.instances;
  so.flip_grad_mu_sign = o.inject_grad_mu_sign_flip;
  const auto results = gkf::selftest::run(so);
  std::size_t failed = 0;
  for (const auto& r : results) {
    std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.detail << "\n";
    failed += !r.passed;
  }
  std::cout << (results.size() - failed) << "/" << results.size() << " checks passed\n";
  if (failed) {
    std::cerr << "gkf: selftest failed:";
    for (const auto& r : results) {
      if (!r.passed) std::cerr << " [" << r.name << "]";
    }
    std::cerr << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::string> args(argv + 1, argv + argc);

  Options o;
  CLI::App app{"Kalman filtering by gradient descent: simulation and benchmarks", "gkf"};
  app.set_version_flag("--version", std::string(gkf::version));
  Commands cmds = build_app(app, o);
  try {
    // First pass finds the subcommand, the config file and the flags given
    // explicitly; the second pass applies config values under those flags.
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
    CLI::App* sub = active(cmds);
    if (!o.config.empty()) {
      std::vector<std::string> full = args;
      for (auto& a : config_arguments(o.config, sub)) full.push_back(std::move(a));
      o = Options{};
      app.clear();
      std::vector<std::string> rev2(full.rbegin(), full.rend());
      app.parse(rev2);
    }
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "gkf: usage error: " << e.what() << "\n";
    return 2;
  }

  CLI::App* sub = active(cmds);
  if (sub == cmds.selftest) return cmd_selftest(o);

  OutputDir out(o.out);
  try {
    if (sub == cmds.simulate) return cmd_simulate(o, out, start);
    if (sub == cmds.compare) return cmd_compare(o, sub, out, start);
    return cmd_learn(o, out, start);
  } catch (const UsageError& e) {
    out.rollback();
    std::cerr << "gkf: usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    out.rollback();
    std::cerr << "gkf: error: " << e.what() << "\n";
    return 1;
  }
}
