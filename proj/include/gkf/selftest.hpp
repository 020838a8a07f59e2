#pragma once

#include "gkf/analytic_filter.hpp"
#include "gkf/experiment.hpp"
#include "gkf/gradient_filter.hpp"
#include "gkf/numerics.hpp"
#include "gkf/random.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace gkf::selftest {

struct Options {
  int instances = 50;
  std::uint64_t seed = 20240611;
  /// Test hook: negates grad_mu before it is compared, so the gradient check
  /// must fail. Used to show the suite can detect a broken gradient.
  bool flip_grad_mu_sign = false;
};

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// A random, well-conditioned filtering step: n = m = 3, k = 1.
struct Instance {
  GradientFilterState state;
  Mat predicted_cov;  ///< inverse of state.pi_x
  Mat sigma_z;        ///< inverse of state.pi_z
  Vec mu_prev, u, y, mu_next;
};

namespace detail {

inline Mat random_spd(NormalStream& g, Eigen::Index n, double lo, double hi) {
  const Mat q = g.matrix(n, n).householderQr().householderQ();
  Vec d(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d[i] = lo + (hi - lo) * (0.5 + 0.5 * std::tanh(g.next()));
  }
  return symmetrize(q * d.asDiagonal() * q.transpose());
}

inline double condition_number(const Mat& spd) {
  Eigen::SelfAdjointEigenSolver<Mat> es(spd, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();
}

}  // namespace detail

/// Draws instances until the normal-equations matrix C^T Pz C + Px has
/// condition number <= 20, so 500 gradient steps reach 1e-6.
inline Instance random_instance(NormalStream& g) {
  for (;;) {
    Mat a = g.matrix(3, 3) / std::sqrt(3.0);
    Mat b = g.matrix(3, 1);
    Mat c = Mat::Identity(3, 3) + 0.3 * g.matrix(3, 3);
    Mat p = detail::random_spd(g, 3, 0.5, 2.0);
    Mat sz = detail::random_spd(g, 3, 0.5, 2.0);
    Instance in{GradientFilterState{a, b, c, spd_inverse(p), spd_inverse(sz), Vec::Zero(3), std::nullopt},
                p, sz, g.vector(3), g.vector(1), g.vector(3), g.vector(3)};
    if (detail::condition_number(curvature(in.state)) <= 20.0) return in;
  }
}

inline std::vector<CheckResult> run(const Options& opt = {}) {
  std::vector<CheckResult> out;
  NormalStream g(opt.seed, "selftest");
  std::vector<Instance> inst;
  for (int i = 0; i < opt.instances; ++i) inst.push_back(random_instance(g));

  auto worst = [&](const std::string& name, double tol, auto&& measure) {
    double w = 0.0;
    for (const auto& in : inst) w = std::max(w, measure(in));
    out.push_back({name, w <= tol, "max error " + format_double(w) + " (tol " + format_double(tol) + ")"});
  };

  worst("grad_mu vs finite differences", 1e-5, [&](const Instance& in) {
    Vec gm = grad_mu(in.state, compute_errors(in.state, in.mu_next, in.mu_prev, in.u, in.y));
    if (opt.flip_grad_mu_sign) gm = -gm;
    const Vec fd = finite_diff_grad(
        [&](const Vec& m) { return 0.5 * loss(in.state, m, in.mu_prev, in.u, in.y); }, in.mu_next);
    return relative_error(gm, fd);
  });
  worst("grad_A vs finite differences", 1e-5, [&](const Instance& in) {
    const auto e = compute_errors(in.state, in.mu_next, in.mu_prev, in.u, in.y);
    const Mat fd = finite_diff_grad_matrix(
        [&](const Mat& a) {
          GradientFilterState s = in.state;
          s.A_hat = a;
          return 0.5 * loss(s, in.mu_next, in.mu_prev, in.u, in.y);
        },
        in.state.A_hat);
    return relative_error(grad_A(in.state, e, in.mu_prev), fd);
  });
  worst("grad_B vs finite differences", 1e-5, [&](const Instance& in) {
    const auto e = compute_errors(in.state, in.mu_next, in.mu_prev, in.u, in.y);
    const Mat fd = finite_diff_grad_matrix(
        [&](const Mat& b) {
          GradientFilterState s = in.state;
          s.B_hat = b;
          return 0.5 * loss(s, in.mu_next, in.mu_prev, in.u, in.y);
        },
        in.state.B_hat);
    return relative_error(grad_B(in.state, e, in.u), fd);
  });
  worst("grad_C vs finite differences", 1e-5, [&](const Instance& in) {
    const auto e = compute_errors(in.state, in.mu_next, in.mu_prev, in.u, in.y);
    const Mat fd = finite_diff_grad_matrix(
        [&](const Mat& c) {
          GradientFilterState s = in.state;
          s.C_hat = c;
          return 0.5 * loss(s, in.mu_next, in.mu_prev, in.u, in.y);
        },
        in.state.C_hat);
    return relative_error(grad_C(in.state, e, in.mu_next), fd);
  });
  worst("map_solve vs Kalman correction", 1e-8, [&](const Instance& in) {
    const auto& s = in.state;
    const LinearGaussianModel model(s.A_hat, s.B_hat, s.C_hat, Mat::Zero(3, 3), in.sigma_z);
    const Vec prior = s.A_hat * in.mu_prev + s.B_hat * in.u;
    const BeliefState post = correct(model, {prior, in.predicted_cov}, in.y);
    const Vec map = map_solve(model, in.mu_prev, in.u, s.pi_x, s.pi_z, in.y);
    return relative_error(map, post.mean);
  });
  worst("500-step inference vs map_solve", 1e-6, [&](const Instance& in) {
    InferenceConfig cfg;
    cfg.n_steps = 500;
    const auto& s = in.state;
    const Vec mu = infer(s, in.mu_prev, in.u, in.y, cfg);
    return relative_error(mu, map_solve(s.A_hat, s.B_hat, s.C_hat, in.mu_prev, in.u, s.pi_x, s.pi_z, in.y));
  });

  {
    ExperimentConfig cfg;
    cfg.horizon = 500;
    const auto models = build_models(cfg);
    const Trajectory traj = simulate_experiment(cfg);
    const auto beliefs = filter_trajectory(models.assumed, {Vec::Zero(3), models.assumed.sigma_omega()}, traj);
    std::size_t bad = 0;
    for (const auto& b : beliefs) bad += !is_psd(b.covariance, 1e-8);
    out.push_back({"posterior covariances symmetric PSD", bad == 0,
                   std::to_string(bad) + " of " + std::to_string(beliefs.size()) + " failed"});
  }
  {
    // Scalar model a = 0.9, q = 1, c = 1, r = 2: the steady-state prior
    // variance solves p = a^2 p r / (p + r) + q.
    const double a = 0.9, q = 1.0, r = 2.0;
    const double bq = q + a * a * r - r;
    const double p_inf = 0.5 * (bq + std::sqrt(bq * bq + 4.0 * q * r));
    const double post_inf = p_inf * r / (p_inf + r);
    const LinearGaussianModel m(Mat::Constant(1, 1, a), Mat::Zero(1, 1), Mat::Identity(1, 1),
                                Mat::Constant(1, 1, q), Mat::Constant(1, 1, r));
    BeliefState b{Vec::Zero(1), Mat::Zero(1, 1)};
    for (int i = 0; i < 200; ++i) b = correct(m, project(m, b, Vec::Zero(1)), Vec::Zero(1));
    const double err = std::abs(b.covariance(0, 0) - post_inf);
    out.push_back({"Riccati fixed point", err <= 1e-9, "error " + format_double(err)});
  }
  return out;
}

}  // namespace gkf::selftest
