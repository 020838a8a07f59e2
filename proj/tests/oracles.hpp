#pragma once

// Second implementations used as oracles. They deliberately avoid the
// library's own routines.

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <vector>

namespace oracles {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline Mat triple_loop_matmul(const Mat& a, const Mat& b) {
  Mat c(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  }
  return c;
}

/// rmse as sqrt(variance + mean^2) of the differences, two passes.
inline Vec two_pass_rmse(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  const auto n = a.front().size();
  const double count = static_cast<double>(a.size());
  Vec out(n);
  for (Eigen::Index d = 0; d < n; ++d) {
    double mean = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) mean += a[i][d] - b[i][d];
    mean /= count;
    double var = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double e = a[i][d] - b[i][d] - mean;
      var += e * e;
    }
    var /= count;
    out[d] = std::sqrt(var + mean * mean);
  }
  return out;
}

/// Posterior variance of the scalar model (a, c, q, r) after iterating the
/// predict/update covariance map until it stops moving.
inline double riccati_fixed_point(double a, double c, double q, double r) {
  double post = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double prior = a * a * post + q;
    const double next = prior - prior * c * c * prior / (c * c * prior + r);
    if (next == post) break;
    post = next;
  }
  return post;
}

inline double gaussian_log_density(const Vec& x, const Vec& mean, const Mat& cov) {
  const Vec d = x - mean;
  const double quad = d.dot(cov.inverse() * d);
  const double logdet = std::log(cov.partialPivLu().determinant());
  return -0.5 * (static_cast<double>(x.size()) * std::log(2.0 * M_PI) + logdet + quad);
}

struct Rng {
  explicit Rng(std::uint64_t seed) : engine(seed) {}
  double normal() { return dist(engine); }
  Mat matrix(Eigen::Index r, Eigen::Index c) {
    Mat m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = normal();
    return m;
  }
  Vec vector(Eigen::Index n) { return matrix(n, 1); }
  /// G^T G / n + shift * I
  Mat spd(Eigen::Index n, double shift) {
    const Mat g = matrix(n, n);
    return g.transpose() * g / static_cast<double>(n) + shift * Mat::Identity(n, n);
  }
  std::mt19937_64 engine;
  std::normal_distribution<double> dist{0.0, 1.0};
};

inline double condition_number(const Mat& spd) {
  Eigen::JacobiSVD<Mat> svd(spd);
  return svd.singularValues()(0) / svd.singularValues()(svd.singularValues().size() - 1);
}

/// One random filtering step.
struct Problem {
  Mat A, B, C, prior_cov, sigma_z, pi_x, pi_z;
  Vec mu_prev, u, y, mu_next;
};

/// Random problem whose normal-equations matrix C^T Pz C + Px has condition
/// number at most max_cond.
inline Problem random_problem(Rng& g, Eigen::Index n = 3, Eigen::Index m = 3, Eigen::Index k = 1,
                              double max_cond = 20.0) {
  for (;;) {
    Problem p;
    p.A = g.matrix(n, n) / std::sqrt(static_cast<double>(n));
    p.B = g.matrix(n, k);
    p.C = Mat::Identity(m, n) + 0.3 * g.matrix(m, n);
    p.prior_cov = g.spd(n, 0.5);
    p.sigma_z = g.spd(m, 0.5);
    p.pi_x = p.prior_cov.inverse();
    p.pi_x = 0.5 * (p.pi_x + p.pi_x.transpose()).eval();
    p.pi_z = p.sigma_z.inverse();
    p.pi_z = 0.5 * (p.pi_z + p.pi_z.transpose()).eval();
    p.mu_prev = g.vector(n);
    p.u = g.vector(k);
    p.y = g.vector(m);
    p.mu_next = g.vector(n);
    const Mat normal = p.C.transpose() * p.pi_z * p.C + p.pi_x;
    if (condition_number(normal) <= max_cond) return p;
  }
}

}  // namespace oracles
