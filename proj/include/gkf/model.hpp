#pragma once

#include "gkf/numerics.hpp"
#include "gkf/random.hpp"

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace gkf {

/// Linear-Gaussian state-space model
///
///   x_{t+1} = A x_t + B u_t + w,   w ~ N(0, sigma_omega)
///   y_{t+1} = C x_{t+1} + z,       z ~ N(0, sigma_z)
///
/// Shapes and covariance validity are checked on construction; instances are
/// immutable afterwards.
class LinearGaussianModel {
public:
  LinearGaussianModel(Mat a, Mat b, Mat c, Mat sigma_omega, Mat sigma_z)
      : a_(std::move(a)), b_(std::move(b)), c_(std::move(c)),
        sigma_omega_(std::move(sigma_omega)), sigma_z_(std::move(sigma_z)) {
    validate();
  }

  const Mat& A() const noexcept { return a_; }
  const Mat& B() const noexcept { return b_; }
  const Mat& C() const noexcept { return c_; }
  const Mat& sigma_omega() const noexcept { return sigma_omega_; }
  const Mat& sigma_z() const noexcept { return sigma_z_; }

  Eigen::Index state_dim() const noexcept { return a_.rows(); }
  Eigen::Index control_dim() const noexcept { return b_.cols(); }
  Eigen::Index obs_dim() const noexcept { return c_.rows(); }

private:
  void validate() const {
    for (const Mat* m : {&a_, &b_, &c_, &sigma_omega_, &sigma_z_}) {
      require_nonempty(*m, "LinearGaussianModel");
      require_finite(*m, "LinearGaussianModel");
    }
    const auto n = a_.rows();
    require_dims(a_.cols() == n, "LinearGaussianModel A", shape_of(a_), "square");
    require_dims(b_.rows() == n, "LinearGaussianModel B", shape_of(b_), shape_of(a_));
    require_dims(c_.cols() == n, "LinearGaussianModel C", shape_of(c_), shape_of(a_));
    require_dims(sigma_omega_.rows() == n && sigma_omega_.cols() == n,
                 "LinearGaussianModel sigma_omega", shape_of(sigma_omega_), shape_of(a_));
    require_dims(sigma_z_.rows() == c_.rows() && sigma_z_.cols() == c_.rows(),
                 "LinearGaussianModel sigma_z", shape_of(sigma_z_), shape_of(c_));
    if (!is_psd(sigma_omega_, 1e-10)) throw NumericalError("sigma_omega is not symmetric PSD");
    if (!is_psd(sigma_z_, 1e-10)) throw NumericalError("sigma_z is not symmetric PSD");
  }

  Mat a_, b_, c_, sigma_omega_, sigma_z_;
};

/// Ground truth of one simulated run. states[t] is x_t (t = 0..T),
/// controls[t] is u_t (t = 0..T-1), observations[t] is y_{t+1}, the
/// measurement of states[t + 1].
struct Trajectory {
  std::vector<Vec> states;
  std::vector<Vec> controls;
  std::vector<Vec> observations;
  std::uint64_t seed = 0;

  std::size_t horizon() const noexcept { return controls.size(); }
};

inline Vec step_dynamics(const LinearGaussianModel& model, const Vec& x, const Vec& u,
                         const Vec& noise) {
  require_dims(x.size() == model.state_dim(), "step_dynamics x", shape_of(x),
               shape_of(model.A()));
  require_dims(u.size() == model.control_dim(), "step_dynamics u", shape_of(u),
               shape_of(model.B()));
  require_dims(noise.size() == model.state_dim(), "step_dynamics noise", shape_of(noise),
               shape_of(model.A()));
  return matvec(model.A(), x) + matvec(model.B(), u) + noise;
}

inline Vec observe(const LinearGaussianModel& model, const Vec& x, const Vec& noise) {
  require_dims(x.size() == model.state_dim(), "observe x", shape_of(x), shape_of(model.C()));
  require_dims(noise.size() == model.obs_dim(), "observe noise", shape_of(noise),
               shape_of(model.C()));
  return matvec(model.C(), x) + noise;
}

/// Rolls the model forward under `controls` with seeded Gaussian noise.
/// Process and observation noise come from separate labelled streams of
/// `seed`; the same arguments always give a bit-identical Trajectory.
inline Trajectory simulate(const LinearGaussianModel& model, const Vec& x0,
                           const std::vector<Vec>& controls, std::uint64_t seed) {
  if (controls.empty()) throw std::invalid_argument("simulate: controls must be non-empty");
  require_dims(x0.size() == model.state_dim(), "simulate x0", shape_of(x0), shape_of(model.A()));
  GaussianSampler process(model.sigma_omega(), seed, stream::process);
  GaussianSampler sensor(model.sigma_z(), seed, stream::observation);

  Trajectory traj;
  traj.seed = seed;
  traj.controls = controls;
  traj.states.reserve(controls.size() + 1);
  traj.observations.reserve(controls.size());
  traj.states.push_back(x0);
  for (const Vec& u : controls) {
    Vec next = step_dynamics(model, traj.states.back(), u, process.draw());
    traj.observations.push_back(observe(model, next, sensor.draw()));
    traj.states.push_back(std::move(next));
  }
  return traj;
}

/// Observation matrix choice for the kinematic task.
struct ObservationMode {
  enum class Kind { identity, random };
  Kind kind = Kind::identity;

  static ObservationMode identity() { return {Kind::identity}; }
  static ObservationMode random() { return {Kind::random}; }

  friend bool operator==(const ObservationMode&, const ObservationMode&) = default;
};

/// Constant-acceleration kinematics, state (position, velocity, acceleration),
/// scalar control driving the acceleration. A random observation matrix is
/// drawn entrywise from N(0, 1) on the c_matrix stream of `seed`.
inline LinearGaussianModel kinematic_model(double dt, double q_std, double r_std,
                                           ObservationMode c_mode, std::uint64_t seed = 0) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("kinematic_model: dt must be > 0");
  if (!(q_std >= 0.0) || !(r_std >= 0.0)) {
    throw std::invalid_argument("kinematic_model: noise standard deviations must be >= 0");
  }
  Mat a(3, 3);
  a << 1.0, dt, 0.5 * dt * dt,
       0.0, 1.0, dt,
       0.0, 0.0, 1.0;
  Mat b(3, 1);
  b << 0.0, 0.0, 1.0;
  Mat c = Mat::Identity(3, 3);
  if (c_mode.kind == ObservationMode::Kind::random) {
    c = NormalStream(seed, stream::c_matrix).matrix(3, 3);
  }
  return LinearGaussianModel(std::move(a), std::move(b), std::move(c),
                             q_std * q_std * Mat::Identity(3, 3),
                             r_std * r_std * Mat::Identity(3, 3));
}

/// u_t = u0 * exp(-decay * t), t = 0..horizon-1, as 1-vectors.
inline std::vector<Vec> control_schedule(double u0, double decay, std::size_t horizon) {
  if (horizon < 1) throw std::invalid_argument("control_schedule: horizon must be >= 1");
  if (!(decay >= 0.0)) throw std::invalid_argument("control_schedule: decay must be >= 0");
  std::vector<Vec> out;
  out.reserve(horizon);
  for (std::size_t t = 0; t < horizon; ++t) {
    Vec u(1);
    u[0] = u0 * std::exp(-decay * static_cast<double>(t));
    out.push_back(std::move(u));
  }
  return out;
}

}  // namespace gkf
