#pragma once

#include "gkf/analytic_filter.hpp"
#include "gkf/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gkf {

// Gradient-descent approximation to the Kalman correction. The posterior mean
// minimises the per-step objective
//
//   L(m) = eps_z^T Pz eps_z + eps_x^T Px eps_x,
//   eps_z = y - C m,   eps_x = m - A mu_prev - B u,
//
// and every gradient below is the gradient of L / 2. Each one is a
// precision-weighted prediction error times an activity vector, so the matrix
// gradients are outer products (Hebbian form).

struct MatrixFlags {
  bool A = false;
  bool B = false;
  bool C = false;

  bool any() const noexcept { return A || B || C; }
  friend bool operator==(const MatrixFlags&, const MatrixFlags&) = default;
};

/// Starting point of the gradient iterations within a timestep.
enum class InitPolicy {
  prediction,         ///< A mu_prev + B u
  previous_estimate,  ///< mu_prev (warm start, ablation)
};

enum class PrecisionMode {
  fixed,      ///< Px, Pz constant (inverse noise covariances)
  projected,  ///< Px recomputed each step from the propagated covariance
};

struct InferenceConfig {
  int n_steps = 5;
  /// Step size on mu. Unset means 1 / lambda_max of the objective's
  /// curvature; a set value is still clamped to that bound.
  std::optional<double> eta_mu;
  double lr_A = 1e-5;
  double lr_B = 1e-5;
  double lr_C = 1e-5;
  MatrixFlags learn;
  InitPolicy init = InitPolicy::prediction;
  /// Apply the weight updates after every gradient step instead of once at
  /// the converged estimate (ablation).
  bool interleave_learning = false;
  int power_iterations = 20;

  void validate() const {
    if (n_steps < 1) throw std::invalid_argument("InferenceConfig: n_steps must be >= 1");
    if (eta_mu && !(*eta_mu > 0.0 && std::isfinite(*eta_mu))) {
      throw std::invalid_argument("InferenceConfig: eta_mu must be > 0");
    }
    for (double lr : {lr_A, lr_B, lr_C}) {
      if (!(lr >= 0.0) || !std::isfinite(lr)) {
        throw std::invalid_argument("InferenceConfig: learning rates must be finite and >= 0");
      }
    }
    if (power_iterations < 1) {
      throw std::invalid_argument("InferenceConfig: power_iterations must be >= 1");
    }
  }
};

/// Noise model and running posterior covariance used by the projected
/// precision mode.
struct CovarianceTrack {
  Mat sigma_omega;
  Mat sigma_z;
  Mat posterior;
};

struct GradientFilterState {
  Mat A_hat;
  Mat B_hat;
  Mat C_hat;
  Mat pi_x;
  Mat pi_z;
  Vec mu;
  std::optional<CovarianceTrack> track;

  PrecisionMode mode() const noexcept {
    return track ? PrecisionMode::projected : PrecisionMode::fixed;
  }

  Eigen::Index state_dim() const noexcept { return A_hat.rows(); }
  Eigen::Index control_dim() const noexcept { return B_hat.cols(); }
  Eigen::Index obs_dim() const noexcept { return C_hat.rows(); }

  void validate() const {
    const auto n = A_hat.rows();
    require_dims(A_hat.cols() == n, "GradientFilterState A_hat", shape_of(A_hat), "square");
    require_dims(B_hat.rows() == n, "GradientFilterState B_hat", shape_of(B_hat), shape_of(A_hat));
    require_dims(C_hat.cols() == n, "GradientFilterState C_hat", shape_of(C_hat), shape_of(A_hat));
    require_dims(pi_x.rows() == n && pi_x.cols() == n, "GradientFilterState pi_x", shape_of(pi_x),
                 shape_of(A_hat));
    require_dims(pi_z.rows() == C_hat.rows() && pi_z.cols() == C_hat.rows(),
                 "GradientFilterState pi_z", shape_of(pi_z), shape_of(C_hat));
    require_dims(mu.size() == n, "GradientFilterState mu", shape_of(mu), shape_of(A_hat));
    if (!is_psd(pi_x, 1e-8)) throw NumericalError("GradientFilterState: pi_x is not symmetric PSD");
    if (!is_psd(pi_z, 1e-8)) throw NumericalError("GradientFilterState: pi_z is not symmetric PSD");
  }

  /// Precisions fixed at the inverse noise covariances.
  static GradientFilterState fixed(Mat a, Mat b, Mat c, const Mat& sigma_omega,
                                   const Mat& sigma_z, Vec mu0) {
    GradientFilterState s{std::move(a), std::move(b), std::move(c), spd_inverse(sigma_omega),
                          spd_inverse(sigma_z), std::move(mu0), std::nullopt};
    s.validate();
    return s;
  }

  /// Px tracks the inverse of the projected covariance, starting from the
  /// posterior covariance `initial_cov` of mu0.
  static GradientFilterState projected(Mat a, Mat b, Mat c, const Mat& sigma_omega,
                                       const Mat& sigma_z, Vec mu0, const Mat& initial_cov) {
    GradientFilterState s{std::move(a), std::move(b), std::move(c), Mat(), spd_inverse(sigma_z),
                          std::move(mu0), CovarianceTrack{sigma_omega, sigma_z, initial_cov}};
    s.pi_x = spd_inverse(detail::projected_covariance(s.A_hat, initial_cov, sigma_omega));
    s.validate();
    return s;
  }
};

struct PredictionErrors {
  Vec eps_x;  ///< dynamical: mu_next - A mu_prev - B u
  Vec eps_z;  ///< sensory: y - C mu_next
};

inline PredictionErrors compute_errors(const GradientFilterState& state, const Vec& mu_next,
                                       const Vec& mu_prev, const Vec& u, const Vec& y) {
  require_dims(mu_next.size() == state.state_dim(), "compute_errors mu_next", shape_of(mu_next),
               shape_of(state.A_hat));
  require_dims(y.size() == state.obs_dim(), "compute_errors y", shape_of(y), shape_of(state.C_hat));
  return {mu_next - matvec(state.A_hat, mu_prev) - matvec(state.B_hat, u),
          y - matvec(state.C_hat, mu_next)};
}

/// Objective value from precomputed errors.
inline double loss(const GradientFilterState& state, const PredictionErrors& e) {
  require_dims(e.eps_x.size() == state.pi_x.rows(), "loss eps_x", shape_of(e.eps_x),
               shape_of(state.pi_x));
  require_dims(e.eps_z.size() == state.pi_z.rows(), "loss eps_z", shape_of(e.eps_z),
               shape_of(state.pi_z));
  return e.eps_z.dot(state.pi_z * e.eps_z) + e.eps_x.dot(state.pi_x * e.eps_x);
}

inline double loss(const GradientFilterState& state, const Vec& mu_next, const Vec& mu_prev,
                   const Vec& u, const Vec& y) {
  return loss(state, compute_errors(state, mu_next, mu_prev, u, y));
}

/// -C^T Pz eps_z + Px eps_x
inline Vec grad_mu(const GradientFilterState& state, const PredictionErrors& e) {
  require_dims(e.eps_z.size() == state.obs_dim(), "grad_mu eps_z", shape_of(e.eps_z),
               shape_of(state.C_hat));
  require_dims(e.eps_x.size() == state.state_dim(), "grad_mu eps_x", shape_of(e.eps_x),
               shape_of(state.A_hat));
  return -state.C_hat.transpose() * (state.pi_z * e.eps_z) + state.pi_x * e.eps_x;
}

/// -(Px eps_x) mu_prev^T
inline Mat grad_A(const GradientFilterState& state, const PredictionErrors& e, const Vec& mu_prev) {
  require_dims(mu_prev.size() == state.state_dim(), "grad_A mu_prev", shape_of(mu_prev),
               shape_of(state.A_hat));
  require_dims(e.eps_x.size() == state.state_dim(), "grad_A eps_x", shape_of(e.eps_x),
               shape_of(state.A_hat));
  return -(state.pi_x * e.eps_x) * mu_prev.transpose();
}

/// -(Px eps_x) u^T
inline Mat grad_B(const GradientFilterState& state, const PredictionErrors& e, const Vec& u) {
  require_dims(u.size() == state.control_dim(), "grad_B u", shape_of(u), shape_of(state.B_hat));
  require_dims(e.eps_x.size() == state.state_dim(), "grad_B eps_x", shape_of(e.eps_x),
               shape_of(state.A_hat));
  return -(state.pi_x * e.eps_x) * u.transpose();
}

/// -(Pz eps_z) mu_next^T
inline Mat grad_C(const GradientFilterState& state, const PredictionErrors& e, const Vec& mu_next) {
  require_dims(mu_next.size() == state.state_dim(), "grad_C mu_next", shape_of(mu_next),
               shape_of(state.A_hat));
  require_dims(e.eps_z.size() == state.obs_dim(), "grad_C eps_z", shape_of(e.eps_z),
               shape_of(state.C_hat));
  return -(state.pi_z * e.eps_z) * mu_next.transpose();
}

/// Hessian of L / 2 in mu: C^T Pz C + Px.
inline Mat curvature(const GradientFilterState& state) {
  return symmetrize(state.C_hat.transpose() * state.pi_z * state.C_hat + state.pi_x);
}

/// Step size actually used: eta_mu (or +inf when unset) clamped to
/// 1 / lambda_max, with lambda_max from power iteration.
inline double effective_step_size(const GradientFilterState& state, const InferenceConfig& cfg) {
  const double lambda = power_iteration_max_eigenvalue(curvature(state), cfg.power_iterations);
  if (!(lambda > 0.0)) throw NumericalError("effective_step_size: objective has zero curvature");
  const double bound = 1.0 / lambda;
  return cfg.eta_mu ? std::min(*cfg.eta_mu, bound) : bound;
}

struct InferenceTrace {
  Vec mu;
  std::vector<double> losses;  ///< losses[k] is the objective after k gradient steps
  double eta = 0.0;
};

inline Vec initial_estimate(const GradientFilterState& state, const Vec& mu_prev, const Vec& u,
                            InitPolicy policy) {
  if (policy == InitPolicy::previous_estimate) return mu_prev;
  return matvec(state.A_hat, mu_prev) + matvec(state.B_hat, u);
}

/// Gradient descent on the objective from the configured starting point;
/// returns the final iterate and the loss after every step.
inline InferenceTrace infer_traced(const GradientFilterState& state, const Vec& mu_prev,
                                   const Vec& u, const Vec& y, const InferenceConfig& cfg) {
  cfg.validate();
  require_dims(mu_prev.size() == state.state_dim(), "infer mu_prev", shape_of(mu_prev),
               shape_of(state.A_hat));
  require_dims(u.size() == state.control_dim(), "infer u", shape_of(u), shape_of(state.B_hat));
  require_dims(y.size() == state.obs_dim(), "infer y", shape_of(y), shape_of(state.C_hat));

  InferenceTrace trace;
  trace.eta = effective_step_size(state, cfg);
  trace.mu = initial_estimate(state, mu_prev, u, cfg.init);
  trace.losses.reserve(static_cast<std::size_t>(cfg.n_steps) + 1);
  PredictionErrors e = compute_errors(state, trace.mu, mu_prev, u, y);
  trace.losses.push_back(loss(state, e));
  for (int k = 0; k < cfg.n_steps; ++k) {
    trace.mu -= trace.eta * grad_mu(state, e);
    if (!trace.mu.allFinite()) {
      throw DivergenceError("infer: non-finite estimate at gradient step " + std::to_string(k + 1),
                            static_cast<std::size_t>(k + 1));
    }
    e = compute_errors(state, trace.mu, mu_prev, u, y);
    trace.losses.push_back(loss(state, e));
  }
  return trace;
}

inline Vec infer(const GradientFilterState& state, const Vec& mu_prev, const Vec& u, const Vec& y,
                 const InferenceConfig& cfg) {
  return infer_traced(state, mu_prev, u, y, cfg).mu;
}

struct StepDiagnostics {
  Vec mu;
  double loss_before = 0.0;
  double loss_after = 0.0;
  PredictionErrors errors;
  std::vector<double> iteration_losses;
  double eta = 0.0;
};

struct StepResult {
  GradientFilterState state;
  StepDiagnostics diagnostics;
};

namespace detail {

inline void apply_learning(GradientFilterState& s, const PredictionErrors& e, const Vec& mu_prev,
                           const Vec& u, const Vec& mu_next, const InferenceConfig& cfg) {
  if (!cfg.learn.any()) return;
  // All three gradients are taken at the same (pre-update) matrices.
  Mat da, db, dc;
  if (cfg.learn.A) da = grad_A(s, e, mu_prev);
  if (cfg.learn.B) db = grad_B(s, e, u);
  if (cfg.learn.C) dc = grad_C(s, e, mu_next);
  if (cfg.learn.A) s.A_hat -= cfg.lr_A * da;
  if (cfg.learn.B) s.B_hat -= cfg.lr_B * db;
  if (cfg.learn.C) s.C_hat -= cfg.lr_C * dc;
  if (!s.A_hat.allFinite() || !s.B_hat.allFinite() || !s.C_hat.allFinite()) {
    throw DivergenceError("step: non-finite weight update (learning rate too large)", 0);
  }
}

}  // namespace detail

/// One filtering timestep: inference of mu_{t+1}, then the Hebbian updates of
/// the enabled matrices at the inferred estimate, then (projected mode) the
/// covariance bookkeeping for the next step's Px.
inline StepResult step(GradientFilterState state, const Vec& u, const Vec& y,
                       const InferenceConfig& cfg) {
  cfg.validate();
  const Vec mu_prev = state.mu;
  Mat predicted_cov;
  if (state.track) {
    predicted_cov =
        detail::projected_covariance(state.A_hat, state.track->posterior, state.track->sigma_omega);
    state.pi_x = spd_inverse(predicted_cov);
  }
  const Mat c_used = state.C_hat;

  StepDiagnostics diag;
  if (!cfg.interleave_learning) {
    InferenceTrace trace = infer_traced(state, mu_prev, u, y, cfg);
    diag.errors = compute_errors(state, trace.mu, mu_prev, u, y);
    diag.loss_before = trace.losses.front();
    diag.loss_after = trace.losses.back();
    diag.iteration_losses = std::move(trace.losses);
    diag.eta = trace.eta;
    diag.mu = std::move(trace.mu);
    detail::apply_learning(state, diag.errors, mu_prev, u, diag.mu, cfg);
  } else {
    require_dims(y.size() == state.obs_dim(), "step y", shape_of(y), shape_of(state.C_hat));
    diag.eta = effective_step_size(state, cfg);
    Vec mu = initial_estimate(state, mu_prev, u, cfg.init);
    PredictionErrors e = compute_errors(state, mu, mu_prev, u, y);
    diag.iteration_losses.push_back(loss(state, e));
    for (int k = 0; k < cfg.n_steps; ++k) {
      mu -= diag.eta * grad_mu(state, e);
      if (!mu.allFinite()) {
        throw DivergenceError("infer: non-finite estimate at gradient step " + std::to_string(k + 1),
                              static_cast<std::size_t>(k + 1));
      }
      e = compute_errors(state, mu, mu_prev, u, y);
      diag.iteration_losses.push_back(loss(state, e));
      detail::apply_learning(state, e, mu_prev, u, mu, cfg);
      e = compute_errors(state, mu, mu_prev, u, y);
    }
    diag.errors = e;
    diag.loss_before = diag.iteration_losses.front();
    diag.loss_after = diag.iteration_losses.back();
    diag.mu = std::move(mu);
  }

  if (state.track) {
    const Mat k = detail::gain(c_used, predicted_cov, state.track->sigma_z);
    state.track->posterior = detail::corrected_covariance(k, c_used, predicted_cov);
  }
  state.mu = diag.mu;
  return {std::move(state), std::move(diag)};
}

}  // namespace gkf
