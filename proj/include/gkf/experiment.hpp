#pragma once

#include "gkf/analytic_filter.hpp"
#include "gkf/gradient_filter.hpp"
#include "gkf/model.hpp"
#include "gkf/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gkf {

enum class Scenario { none, learn_A, learn_B, learn_AB, learn_C };

/// Which precision weighting the gradient filter uses. `automatic` picks
/// projected for tracking and fixed for the learning scenarios.
enum class PrecisionChoice { automatic, fixed, projected };

inline std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::none: return "none";
    case Scenario::learn_A: return "learn_A";
    case Scenario::learn_B: return "learn_B";
    case Scenario::learn_AB: return "learn_AB";
    case Scenario::learn_C: return "learn_C";
  }
  return "none";
}

inline MatrixFlags learned_matrices(Scenario s) {
  switch (s) {
    case Scenario::learn_A: return {true, false, false};
    case Scenario::learn_B: return {false, true, false};
    case Scenario::learn_AB: return {true, true, false};
    case Scenario::learn_C: return {false, false, true};
    case Scenario::none: break;
  }
  return {};
}

struct ExperimentConfig {
  std::size_t horizon = 2000;
  double dt = 0.001;
  double q_std = 0.7;
  double r_std = 1.0;
  ObservationMode c_mode = ObservationMode::identity();
  double u0 = 50.0;
  double decay = 1.0;
  InferenceConfig inference;
  Scenario scenario = Scenario::none;
  /// Matrices replaced by standard-normal draws before filtering. Unset means
  /// exactly the learned ones.
  std::optional<MatrixFlags> randomized;
  PrecisionChoice precision = PrecisionChoice::automatic;
  std::uint64_t seed = 1;
  double window_fraction = 0.1;
  /// Noise model assumed by both filters; defaults to the simulation's. Lets
  /// a noiseless simulation still be filtered with a non-degenerate model.
  std::optional<double> filter_q_std;
  std::optional<double> filter_r_std;

  MatrixFlags learned() const { return learned_matrices(scenario); }
  MatrixFlags randomized_matrices() const { return randomized.value_or(learned()); }

  PrecisionMode precision_mode() const {
    switch (precision) {
      case PrecisionChoice::fixed: return PrecisionMode::fixed;
      case PrecisionChoice::projected: return PrecisionMode::projected;
      case PrecisionChoice::automatic: break;
    }
    return scenario == Scenario::none ? PrecisionMode::projected : PrecisionMode::fixed;
  }

  /// The inference settings with learn flags taken from the scenario.
  InferenceConfig effective_inference() const {
    InferenceConfig c = inference;
    c.learn = learned();
    return c;
  }

  std::size_t window() const {
    const auto w = static_cast<std::size_t>(std::llround(window_fraction * static_cast<double>(horizon)));
    return std::max<std::size_t>(1, std::min(w, horizon));
  }

  void validate() const {
    if (horizon < 1) throw std::invalid_argument("ExperimentConfig: horizon must be >= 1");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("ExperimentConfig: dt must be > 0");
    if (!(q_std >= 0.0) || !(r_std >= 0.0) || !std::isfinite(q_std) || !std::isfinite(r_std)) {
      throw std::invalid_argument("ExperimentConfig: noise standard deviations must be >= 0");
    }
    for (const auto& s : {filter_q_std, filter_r_std}) {
      if (s && !(*s > 0.0 && std::isfinite(*s))) {
        throw std::invalid_argument("ExperimentConfig: filter noise standard deviations must be > 0");
      }
    }
    if (!std::isfinite(u0)) throw std::invalid_argument("ExperimentConfig: u0 must be finite");
    if (!(decay >= 0.0) || !std::isfinite(decay)) {
      throw std::invalid_argument("ExperimentConfig: decay must be >= 0");
    }
    if (!(window_fraction > 0.0 && window_fraction <= 0.5)) {
      throw std::invalid_argument("ExperimentConfig: window_fraction must be in (0, 0.5]");
    }
    inference.validate();
    const MatrixFlags l = learned();
    const MatrixFlags r = randomized_matrices();
    if ((l.A && !r.A) || (l.B && !r.B) || (l.C && !r.C)) {
      throw std::invalid_argument(
          "ExperimentConfig: a learned matrix must also be randomized (scenario " +
          std::string(to_string(scenario)) + ")");
    }
  }
};

/// One row of the per-timestep trace. `t` indexes the true state x_t, so the
/// first record has t = 1.
struct TimestepRecord {
  std::size_t t = 0;
  Vec x_true;
  Vec y;
  Vec mu_kf;
  Vec mu_gkf;
  double loss = 0.0;
};

struct MatrixSnapshot {
  std::string name;
  Mat initial;
  Mat final;
};

/// A gradient-filter run on the shared trajectory other than the main one.
struct BaselineTrace {
  std::string name;
  std::vector<Vec> means;  ///< empty after divergence
  std::optional<std::size_t> diverged_at;
  double final_window_rmse = std::numeric_limits<double>::infinity();
};

struct Metrics {
  Vec rmse_gradient_vs_truth;
  Vec rmse_analytic_vs_truth;
  Vec rmse_gradient_vs_analytic;
  double rmse_gradient_vs_truth_overall = 0.0;
  double rmse_analytic_vs_truth_overall = 0.0;
  double rmse_pseudo_inverse_vs_truth_overall = 0.0;
  /// rmse_gradient_vs_truth_overall / rmse_analytic_vs_truth_overall
  double rmse_ratio = 0.0;
  double loss_initial_window_mean = 0.0;
  double loss_final_window_mean = 0.0;
  std::size_t descent_violations = 0;
  double max_descent_increase = 0.0;
  double eta_mu_min = 0.0;
  double eta_mu_max = 0.0;
  Vec increment_autocorr_gradient;
  Vec increment_autocorr_analytic;
  double final_window_rmse_learned = 0.0;
  std::optional<double> final_window_rmse_frozen;
  std::optional<double> final_window_rmse_true_matrices;
  std::optional<std::size_t> frozen_diverged_at;
  std::uint64_t observation_hash_kf = 0;
  std::uint64_t observation_hash_gkf = 0;
};

struct ExperimentResult {
  ExperimentConfig config;
  Trajectory trajectory;
  std::vector<TimestepRecord> records;
  std::vector<MatrixSnapshot> matrices;
  std::vector<BaselineTrace> baselines;
  Metrics metrics;
};

// ---------------------------------------------------------------------------
// metric helpers

/// Per-dimension root-mean-square difference over records [begin, end).
inline Vec rmse(const std::vector<Vec>& a, const std::vector<Vec>& b, std::size_t begin = 0,
                std::size_t end = std::numeric_limits<std::size_t>::max()) {
  end = std::min(end, a.size());
  if (a.size() != b.size()) throw DimensionError("rmse: sequences differ in length");
  if (begin >= end) throw std::invalid_argument("rmse: empty range");
  Vec acc = Vec::Zero(a[begin].size());
  for (std::size_t i = begin; i < end; ++i) acc += (a[i] - b[i]).cwiseAbs2();
  return (acc / static_cast<double>(end - begin)).cwiseSqrt();
}

/// Root-mean-square over all dimensions pooled.
inline double rmse_overall(const std::vector<Vec>& a, const std::vector<Vec>& b,
                           std::size_t begin = 0,
                           std::size_t end = std::numeric_limits<std::size_t>::max()) {
  const Vec per_dim = rmse(a, b, begin, end);
  return std::sqrt(per_dim.squaredNorm() / static_cast<double>(per_dim.size()));
}

inline double window_mean(const std::vector<double>& v, std::size_t begin, std::size_t end) {
  if (begin >= end || end > v.size()) throw std::invalid_argument("window_mean: bad range");
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += v[i];
  return s / static_cast<double>(end - begin);
}

/// Lag-1 autocorrelation of the increments mu_t - mu_{t-1}, per dimension.
/// Higher means a smoother estimate. Zero for constant increments.
inline Vec increment_autocorrelation(const std::vector<Vec>& means) {
  if (means.empty()) return Vec();
  const auto n = means.front().size();
  Vec out = Vec::Zero(n);
  if (means.size() < 4) return out;
  const std::size_t k = means.size() - 1;
  for (Eigen::Index d = 0; d < n; ++d) {
    std::vector<double> inc(k);
    for (std::size_t i = 0; i < k; ++i) inc[i] = means[i + 1][d] - means[i][d];
    double mean = 0.0;
    for (double x : inc) mean += x;
    mean /= static_cast<double>(k);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      den += (inc[i] - mean) * (inc[i] - mean);
      if (i + 1 < k) num += (inc[i] - mean) * (inc[i + 1] - mean);
    }
    out[d] = den > 0.0 ? num / den : 0.0;
  }
  return out;
}

/// FNV-1a over the raw bytes of every observation, in order.
inline std::uint64_t hash_observations(const std::vector<Vec>& obs) {
  std::uint64_t h = fnv1a({});
  for (const Vec& y : obs) {
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(y.data()),
                               sizeof(double) * static_cast<std::size_t>(y.size())),
              h);
  }
  return h;
}

// ---------------------------------------------------------------------------
// runners

struct FilterModels {
  LinearGaussianModel truth;
  LinearGaussianModel assumed;  ///< what both filters believe, noise possibly overridden
};

inline FilterModels build_models(const ExperimentConfig& cfg) {
  LinearGaussianModel truth = kinematic_model(cfg.dt, cfg.q_std, cfg.r_std, cfg.c_mode, cfg.seed);
  const double fq = cfg.filter_q_std.value_or(cfg.q_std);
  const double fr = cfg.filter_r_std.value_or(cfg.r_std);
  LinearGaussianModel assumed(truth.A(), truth.B(), truth.C(), fq * fq * Mat::Identity(3, 3),
                              fr * fr * Mat::Identity(truth.obs_dim(), truth.obs_dim()));
  return {std::move(truth), std::move(assumed)};
}

inline Trajectory simulate_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const LinearGaussianModel truth = build_models(cfg).truth;
  return simulate(truth, Vec::Zero(truth.state_dim()),
                  control_schedule(cfg.u0, cfg.decay, cfg.horizon), cfg.seed);
}

struct GradientRun {
  std::vector<Vec> means;
  std::vector<double> losses;
  std::vector<double> etas;
  std::size_t descent_violations = 0;
  double max_descent_increase = 0.0;
  GradientFilterState final_state;
  std::uint64_t observation_hash = 0;
};

/// Relative slack allowed before a loss increase counts as a descent violation.
inline constexpr double descent_slack = 1e-12;

/// Runs the gradient filter over a whole trajectory. Divergence is rethrown
/// with the timestep at which it happened.
inline GradientRun run_gradient_filter(GradientFilterState state, const Trajectory& traj,
                                       const InferenceConfig& cfg) {
  GradientRun run;
  run.means.reserve(traj.horizon());
  run.losses.reserve(traj.horizon());
  run.etas.reserve(traj.horizon());
  for (std::size_t t = 0; t < traj.horizon(); ++t) {
    try {
      StepResult r = step(std::move(state), traj.controls[t], traj.observations[t], cfg);
      if (!std::isfinite(r.diagnostics.loss_after)) {
        throw DivergenceError("non-finite loss", 0);
      }
      const auto& il = r.diagnostics.iteration_losses;
      for (std::size_t k = 1; k < il.size(); ++k) {
        const double inc = il[k] - il[k - 1];
        if (inc > descent_slack * std::max(1.0, std::abs(il[k - 1]))) ++run.descent_violations;
        run.max_descent_increase = std::max(run.max_descent_increase, inc);
      }
      run.means.push_back(r.diagnostics.mu);
      run.losses.push_back(r.diagnostics.loss_after);
      run.etas.push_back(r.diagnostics.eta);
      state = std::move(r.state);
    } catch (const DivergenceError& e) {
      throw DivergenceError("gradient filter diverged at timestep " + std::to_string(t + 1) +
                                ": " + e.what(),
                            t + 1);
    } catch (const NumericalError& e) {
      throw DivergenceError("gradient filter failed at timestep " + std::to_string(t + 1) + ": " +
                                e.what(),
                            t + 1);
    }
  }
  run.observation_hash = hash_observations(traj.observations);
  run.final_state = std::move(state);
  return run;
}

inline GradientFilterState make_filter_state(const ExperimentConfig& cfg, const LinearGaussianModel& m,
                                             Mat a, Mat b, Mat c, const Vec& mu0,
                                             const Mat& cov0) {
  if (cfg.precision_mode() == PrecisionMode::projected) {
    return GradientFilterState::projected(std::move(a), std::move(b), std::move(c),
                                          m.sigma_omega(), m.sigma_z(), mu0, cov0);
  }
  return GradientFilterState::fixed(std::move(a), std::move(b), std::move(c), m.sigma_omega(),
                                    m.sigma_z(), mu0);
}

namespace detail {

inline std::vector<Vec> future_states(const Trajectory& traj) {
  return {traj.states.begin() + 1, traj.states.end()};
}

inline std::vector<Vec> pseudo_inverse_estimates(const Mat& c, const std::vector<Vec>& obs) {
  const Mat pinv = c.completeOrthogonalDecomposition().pseudoInverse();
  std::vector<Vec> out;
  out.reserve(obs.size());
  for (const Vec& y : obs) out.push_back(pinv * y);
  return out;
}

inline void check_trajectory(const Trajectory& traj, const LinearGaussianModel& m) {
  if (traj.horizon() == 0 || traj.states.size() != traj.horizon() + 1 ||
      traj.observations.size() != traj.horizon()) {
    throw DimensionError("experiment: trajectory lengths are inconsistent");
  }
  for (const Vec& x : traj.states) {
    require_dims(x.size() == m.state_dim(), "experiment trajectory state", shape_of(x), shape_of(m.A()));
  }
  for (const Vec& u : traj.controls) {
    require_dims(u.size() == m.control_dim(), "experiment trajectory control", shape_of(u), shape_of(m.B()));
  }
  for (const Vec& y : traj.observations) {
    require_dims(y.size() == m.obs_dim(), "experiment trajectory observation", shape_of(y), shape_of(m.C()));
  }
}

}  // namespace detail

/// Simulates (unless a trajectory is supplied), runs the Kalman filter and the
/// gradient filter on the same data and, for learning scenarios, the
/// frozen-random and true-matrix baselines too.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       std::optional<Trajectory> supplied = std::nullopt) {
  cfg.validate();
  const FilterModels models = build_models(cfg);
  const LinearGaussianModel& assumed = models.assumed;
  ExperimentResult res;
  res.config = cfg;
  res.trajectory = supplied ? std::move(*supplied) : simulate_experiment(cfg);
  const Trajectory& traj = res.trajectory;
  detail::check_trajectory(traj, assumed);
  const std::size_t horizon = traj.horizon();
  const std::size_t w = std::min(cfg.window(), horizon);
  const std::vector<Vec> truth = detail::future_states(traj);

  const Vec mu0 = Vec::Zero(assumed.state_dim());
  const Mat cov0 = assumed.sigma_omega();
  std::vector<BeliefState> kf;
  try {
    kf = filter_trajectory(assumed, {mu0, cov0}, traj);
  } catch (const NumericalError& e) {
    throw DivergenceError(std::string("analytic filter: ") + e.what(), 0);
  }
  std::vector<Vec> kf_means;
  kf_means.reserve(horizon);
  for (const auto& b : kf) kf_means.push_back(b.mean);

  const MatrixFlags rnd = cfg.randomized_matrices();
  Mat a0 = rnd.A ? NormalStream(cfg.seed, stream::a_init).matrix(3, 3) : assumed.A();
  Mat b0 = rnd.B ? NormalStream(cfg.seed, stream::b_init).matrix(3, 1) : assumed.B();
  Mat c0 = rnd.C ? NormalStream(cfg.seed, stream::c_init).matrix(assumed.obs_dim(), 3) : assumed.C();

  const InferenceConfig icfg = cfg.effective_inference();
  GradientRun main = run_gradient_filter(make_filter_state(cfg, assumed, a0, b0, c0, mu0, cov0),
                                         traj, icfg);

  Metrics& m = res.metrics;
  if (cfg.scenario != Scenario::none || rnd.any()) {
    InferenceConfig frozen_cfg = icfg;
    frozen_cfg.learn = {};
    BaselineTrace frozen{"frozen_random", {}, std::nullopt,
                         std::numeric_limits<double>::infinity()};
    try {
      GradientRun fr = run_gradient_filter(make_filter_state(cfg, assumed, a0, b0, c0, mu0, cov0),
                                           traj, frozen_cfg);
      frozen.final_window_rmse = rmse_overall(fr.means, truth, horizon - w, horizon);
      frozen.means = std::move(fr.means);
    } catch (const DivergenceError& e) {
      frozen.diverged_at = e.step();
    }
    BaselineTrace exact{"true_matrices", {}, std::nullopt, 0.0};
    GradientRun ex = run_gradient_filter(
        make_filter_state(cfg, assumed, assumed.A(), assumed.B(), assumed.C(), mu0, cov0), traj,
        frozen_cfg);
    exact.final_window_rmse = rmse_overall(ex.means, truth, horizon - w, horizon);
    exact.means = std::move(ex.means);
    m.final_window_rmse_frozen = frozen.final_window_rmse;
    m.frozen_diverged_at = frozen.diverged_at;
    m.final_window_rmse_true_matrices = exact.final_window_rmse;
    res.baselines.push_back(std::move(frozen));
    res.baselines.push_back(std::move(exact));
  }

  res.matrices = {{"A_hat", a0, main.final_state.A_hat},
                  {"B_hat", b0, main.final_state.B_hat},
                  {"C_hat", c0, main.final_state.C_hat}};

  res.records.reserve(horizon);
  for (std::size_t t = 0; t < horizon; ++t) {
    res.records.push_back({t + 1, truth[t], traj.observations[t], kf_means[t], main.means[t],
                           main.losses[t]});
  }

  m.rmse_gradient_vs_truth = rmse(main.means, truth);
  m.rmse_analytic_vs_truth = rmse(kf_means, truth);
  m.rmse_gradient_vs_analytic = rmse(main.means, kf_means);
  m.rmse_gradient_vs_truth_overall = rmse_overall(main.means, truth);
  m.rmse_analytic_vs_truth_overall = rmse_overall(kf_means, truth);
  m.rmse_pseudo_inverse_vs_truth_overall =
      rmse_overall(detail::pseudo_inverse_estimates(assumed.C(), traj.observations), truth);
  m.rmse_ratio = m.rmse_gradient_vs_truth_overall / m.rmse_analytic_vs_truth_overall;
  m.loss_initial_window_mean = window_mean(main.losses, 0, w);
  m.loss_final_window_mean = window_mean(main.losses, horizon - w, horizon);
  m.descent_violations = main.descent_violations;
  m.max_descent_increase = main.max_descent_increase;
  m.eta_mu_min = *std::min_element(main.etas.begin(), main.etas.end());
  m.eta_mu_max = *std::max_element(main.etas.begin(), main.etas.end());
  m.increment_autocorr_gradient = increment_autocorrelation(main.means);
  m.increment_autocorr_analytic = increment_autocorrelation(kf_means);
  m.final_window_rmse_learned = rmse_overall(main.means, truth, horizon - w, horizon);
  m.observation_hash_kf = hash_observations(traj.observations);
  m.observation_hash_gkf = main.observation_hash;
  return res;
}

/// Tracking with the true matrices (scenario none).
inline ExperimentResult run_tracking(ExperimentConfig cfg,
                                     std::optional<Trajectory> traj = std::nullopt) {
  if (cfg.scenario != Scenario::none) {
    throw std::invalid_argument("run_tracking: scenario must be none");
  }
  return run_experiment(cfg, std::move(traj));
}

/// Online learning of A and/or B from random initial matrices.
inline ExperimentResult run_learning(ExperimentConfig cfg,
                                     std::optional<Trajectory> traj = std::nullopt) {
  if (cfg.scenario != Scenario::learn_A && cfg.scenario != Scenario::learn_B &&
      cfg.scenario != Scenario::learn_AB) {
    throw std::invalid_argument("run_learning: scenario must be learn_A, learn_B or learn_AB");
  }
  return run_experiment(cfg, std::move(traj));
}

/// Learning C from a random initial matrix with the true A and B.
inline ExperimentResult run_c_failure(ExperimentConfig cfg,
                                      std::optional<Trajectory> traj = std::nullopt) {
  if (cfg.scenario != Scenario::learn_C) {
    throw std::invalid_argument("run_c_failure: scenario must be learn_C");
  }
  return run_experiment(cfg, std::move(traj));
}

// ---------------------------------------------------------------------------
// summary

/// Shortest decimal form that reads back to the same double (17 significant
/// digits), or inf / -inf / nan.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// `key = value` lines, one metric per line, per-dimension values suffixed
/// with the dimension index. Same result, same bytes.
inline std::string summarize(const ExperimentResult& r) {
  const Metrics& m = r.metrics;
  std::string out;
  auto put = [&](std::string_view key, const std::string& value) {
    out.append(key).append(" = ").append(value).append("\n");
  };
  auto put_vec = [&](std::string_view key, const Vec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      put(std::string(key) + "_" + std::to_string(i), format_double(v[i]));
    }
  };
  put("scenario", std::string(to_string(r.config.scenario)));
  put("seed", std::to_string(r.config.seed));
  put("horizon", std::to_string(r.records.size()));
  put("n_steps", std::to_string(r.config.inference.n_steps));
  put("precision", r.config.precision_mode() == PrecisionMode::projected ? "projected" : "fixed");
  put_vec("rmse_gradient_vs_truth", m.rmse_gradient_vs_truth);
  put_vec("rmse_analytic_vs_truth", m.rmse_analytic_vs_truth);
  put_vec("rmse_gradient_vs_analytic", m.rmse_gradient_vs_analytic);
  put("rmse_gradient_vs_truth_overall", format_double(m.rmse_gradient_vs_truth_overall));
  put("rmse_analytic_vs_truth_overall", format_double(m.rmse_analytic_vs_truth_overall));
  put("rmse_pseudo_inverse_vs_truth_overall", format_double(m.rmse_pseudo_inverse_vs_truth_overall));
  put("rmse_ratio", format_double(m.rmse_ratio));
  put("loss_initial_window_mean", format_double(m.loss_initial_window_mean));
  put("loss_final_window_mean", format_double(m.loss_final_window_mean));
  put("descent_violations", std::to_string(m.descent_violations));
  put("max_descent_increase", format_double(m.max_descent_increase));
  put("eta_mu_min", format_double(m.eta_mu_min));
  put("eta_mu_max", format_double(m.eta_mu_max));
  put_vec("increment_autocorr_gradient", m.increment_autocorr_gradient);
  put_vec("increment_autocorr_analytic", m.increment_autocorr_analytic);
  put("final_window_rmse_learned", format_double(m.final_window_rmse_learned));
  if (m.final_window_rmse_frozen) {
    put("final_window_rmse_frozen", format_double(*m.final_window_rmse_frozen));
  }
  if (m.frozen_diverged_at) put("frozen_diverged_at", std::to_string(*m.frozen_diverged_at));
  if (m.final_window_rmse_true_matrices) {
    put("final_window_rmse_true_matrices", format_double(*m.final_window_rmse_true_matrices));
  }
  char hash[24];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(m.observation_hash_kf));
  put("observation_hash_kf", hash);
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(m.observation_hash_gkf));
  put("observation_hash_gkf", hash);
  return out;
}

}  // namespace gkf
