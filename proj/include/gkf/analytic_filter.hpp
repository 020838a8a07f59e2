#pragma once

#include "gkf/model.hpp"
#include "gkf/numerics.hpp"

#include <vector>

namespace gkf {

/// Gaussian belief over the state: mean and covariance.
struct BeliefState {
  Vec mean;
  Mat covariance;
};

namespace detail {

inline Mat projected_covariance(const Mat& a, const Mat& cov, const Mat& sigma_omega) {
  return symmetrize(matmul(matmul(a, cov), a.transpose()) + sigma_omega);
}

// K solves K S = P C^T with S = C P C^T + sigma_z. S is SPD, so
// K^T = S^{-1} C P, computed by a Cholesky solve rather than an inverse.
inline Mat gain(const Mat& c, const Mat& predicted_cov, const Mat& sigma_z) {
  require_dims(c.cols() == predicted_cov.rows(), "kalman_gain", shape_of(c),
               shape_of(predicted_cov));
  const Mat cp = matmul(c, predicted_cov);
  const Mat innovation_cov = symmetrize(matmul(cp, c.transpose()) + sigma_z);
  try {
    return solve_spd(innovation_cov, cp).transpose();
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("kalman_gain: innovation covariance is not positive "
                                     "definite (degenerate observation noise): ") +
                         e.what());
  }
}

inline Mat corrected_covariance(const Mat& k, const Mat& c, const Mat& predicted_cov) {
  const auto n = predicted_cov.rows();
  return symmetrize(matmul(Mat::Identity(n, n) - matmul(k, c), predicted_cov));
}

}  // namespace detail

/// Prediction step: mean A mu + B u, covariance A Sigma A^T + sigma_omega.
inline BeliefState project(const LinearGaussianModel& model, const BeliefState& belief,
                           const Vec& u) {
  require_dims(belief.mean.size() == model.state_dim(), "project mean", shape_of(belief.mean),
               shape_of(model.A()));
  require_dims(belief.covariance.rows() == model.state_dim() &&
                   belief.covariance.cols() == model.state_dim(),
               "project covariance", shape_of(belief.covariance), shape_of(model.A()));
  require_dims(u.size() == model.control_dim(), "project u", shape_of(u), shape_of(model.B()));
  return {matvec(model.A(), belief.mean) + matvec(model.B(), u),
          detail::projected_covariance(model.A(), belief.covariance, model.sigma_omega())};
}

inline Mat kalman_gain(const LinearGaussianModel& model, const Mat& predicted_cov) {
  require_dims(predicted_cov.rows() == model.state_dim() &&
                   predicted_cov.cols() == model.state_dim(),
               "kalman_gain", shape_of(predicted_cov), shape_of(model.A()));
  return detail::gain(model.C(), predicted_cov, model.sigma_z());
}

/// Measurement update. The covariance is (I - K C) P, re-symmetrised.
inline BeliefState correct(const LinearGaussianModel& model, const BeliefState& predicted,
                           const Vec& y) {
  require_dims(y.size() == model.obs_dim(), "correct y", shape_of(y), shape_of(model.C()));
  require_dims(predicted.mean.size() == model.state_dim(), "correct mean",
               shape_of(predicted.mean), shape_of(model.A()));
  const Mat k = kalman_gain(model, predicted.covariance);
  const Vec innovation = y - matvec(model.C(), predicted.mean);
  return {predicted.mean + matvec(k, innovation),
          detail::corrected_covariance(k, model.C(), predicted.covariance)};
}

/// Runs project/correct over the whole trajectory. Element t of the result is
/// the posterior after observations[t], i.e. the belief about states[t + 1].
inline std::vector<BeliefState> filter_trajectory(const LinearGaussianModel& model,
                                                  const BeliefState& initial,
                                                  const Trajectory& traj) {
  if (traj.observations.size() != traj.controls.size()) {
    throw DimensionError("filter_trajectory: controls and observations differ in length");
  }
  std::vector<BeliefState> out;
  out.reserve(traj.horizon());
  BeliefState belief = initial;
  for (std::size_t t = 0; t < traj.horizon(); ++t) {
    belief = correct(model, project(model, belief, traj.controls[t]), traj.observations[t]);
    if (!belief.mean.allFinite()) {
      throw DivergenceError("filter_trajectory: non-finite mean at timestep " + std::to_string(t),
                            t);
    }
    out.push_back(belief);
  }
  return out;
}

/// Exact minimiser of the per-step objective
///
///   (y - C m)^T R (y - C m) + (m - A mu - B u)^T P (m - A mu - B u)
///
/// by the normal equations (C^T R C + P) m = C^T R y + P (A mu + B u), where
/// P is the prior precision and R the observation precision.
inline Vec map_solve(const Mat& a, const Mat& b, const Mat& c, const Vec& mu_prev, const Vec& u,
                     const Mat& prior_precision, const Mat& obs_precision, const Vec& y) {
  const Mat ct_r = matmul(c.transpose(), obs_precision);
  const Mat normal = symmetrize(matmul(ct_r, c) + prior_precision);
  const Vec prior_mean = matvec(a, mu_prev) + matvec(b, u);
  const Vec rhs = matvec(ct_r, y) + matvec(prior_precision, prior_mean);
  try {
    return solve_spd(normal, rhs);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("map_solve: normal-equations matrix is not positive "
                                     "definite: ") +
                         e.what());
  }
}

inline Vec map_solve(const LinearGaussianModel& model, const Vec& mu_prev, const Vec& u,
                     const Mat& prior_precision, const Mat& obs_precision, const Vec& y) {
  return map_solve(model.A(), model.B(), model.C(), mu_prev, u, prior_precision, obs_precision,
                   y);
}

}  // namespace gkf
