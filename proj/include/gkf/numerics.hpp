#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gkf {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Raised when operand shapes do not conform.
class DimensionError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for numerical failures: non-finite inputs, indefinite or singular
/// systems.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A recursion produced a non-finite value. `step()` is the index of the
/// iteration (or timestep) at which it was first observed.
class DivergenceError : public NumericalError {
public:
  DivergenceError(const std::string& what, std::size_t step)
      : NumericalError(what), step_(step) {}

  std::size_t step() const noexcept { return step_; }

private:
  std::size_t step_;
};

template <typename Derived>
std::string shape_of(const Eigen::MatrixBase<Derived>& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, std::string_view what) {
  if (!m.allFinite()) {
    throw NumericalError(std::string(what) + ": non-finite entry");
  }
}

template <typename Derived>
void require_nonempty(const Eigen::MatrixBase<Derived>& m, std::string_view what) {
  if (m.rows() < 1 || m.cols() < 1) {
    throw DimensionError(std::string(what) + ": empty operand (" + shape_of(m) + ")");
  }
}

inline void require_dims(bool ok, std::string_view op, const std::string& lhs,
                         const std::string& rhs) {
  if (!ok) {
    throw DimensionError(std::string(op) + ": dimension mismatch (" + lhs + " vs " + rhs + ")");
  }
}

/// Checked dense product a * b.
inline Mat matmul(const Mat& a, const Mat& b) {
  require_nonempty(a, "matmul lhs");
  require_nonempty(b, "matmul rhs");
  require_dims(a.cols() == b.rows(), "matmul", shape_of(a), shape_of(b));
  require_finite(a, "matmul lhs");
  require_finite(b, "matmul rhs");
  return a * b;
}

/// Checked matrix-vector product.
inline Vec matvec(const Mat& a, const Vec& v) {
  require_nonempty(a, "matvec lhs");
  require_nonempty(v, "matvec rhs");
  require_dims(a.cols() == v.size(), "matvec", shape_of(a), shape_of(v));
  require_finite(a, "matvec lhs");
  require_finite(v, "matvec rhs");
  return a * v;
}

inline Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

inline bool is_symmetric(const Mat& m, double rel_tol) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

namespace detail {

inline Eigen::LLT<Mat> checked_cholesky(const Mat& m, std::string_view op) {
  require_nonempty(m, op);
  require_dims(m.rows() == m.cols(), op, shape_of(m), "square");
  require_finite(m, op);
  if (!is_symmetric(m, 1e-10)) {
    throw NumericalError(std::string(op) + ": matrix is not symmetric");
  }
  Eigen::LLT<Mat> llt(m);
  if (llt.info() != Eigen::Success) {
    throw NumericalError(std::string(op) +
                         ": Cholesky failed (weighting matrix singular or indefinite)");
  }
  // LLT reports success on some semidefinite inputs; a zero pivot means singular.
  const auto diag = llt.matrixL().toDenseMatrix().diagonal();
  if ((diag.array() <= 0.0).any() || !diag.allFinite()) {
    throw NumericalError(std::string(op) +
                         ": Cholesky failed (weighting matrix singular or indefinite)");
  }
  return llt;
}

}  // namespace detail

/// Solves m * v = rhs for symmetric positive-definite m.
inline Vec solve_spd(const Mat& m, const Vec& rhs) {
  require_dims(m.rows() == rhs.size(), "solve_spd", shape_of(m), shape_of(rhs));
  require_finite(rhs, "solve_spd rhs");
  const auto llt = detail::checked_cholesky(m, "solve_spd");
  return llt.solve(rhs);
}

/// Multi-column variant: solves m * X = rhs.
inline Mat solve_spd(const Mat& m, const Mat& rhs) {
  require_dims(m.rows() == rhs.rows(), "solve_spd", shape_of(m), shape_of(rhs));
  require_finite(rhs, "solve_spd rhs");
  const auto llt = detail::checked_cholesky(m, "solve_spd");
  return llt.solve(rhs);
}

/// Inverse of an SPD matrix through its Cholesky factor. Only used where the
/// inverse itself is the quantity of interest (precision from covariance).
inline Mat spd_inverse(const Mat& m) {
  const auto llt = detail::checked_cholesky(m, "spd_inverse");
  return symmetrize(llt.solve(Mat::Identity(m.rows(), m.cols())));
}

/// True iff m is symmetric within tol and its smallest eigenvalue is >= -tol.
inline bool is_psd(const Mat& m, double tol) {
  require_nonempty(m, "is_psd");
  if (m.rows() != m.cols()) {
    throw DimensionError("is_psd: matrix must be square (" + shape_of(m) + ")");
  }
  require_finite(m, "is_psd");
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > tol) return false;
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tol;
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration, reported
/// as the Rayleigh quotient of the final iterate.
inline double power_iteration_max_eigenvalue(const Mat& sym, int iterations = 20) {
  require_nonempty(sym, "power_iteration");
  require_dims(sym.rows() == sym.cols(), "power_iteration", shape_of(sym), "square");
  require_finite(sym, "power_iteration");
  Vec v = Vec::Ones(sym.rows()) / std::sqrt(static_cast<double>(sym.rows()));
  for (int i = 0; i < iterations; ++i) {
    Vec w = sym * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
  }
  return v.dot(sym * v);
}

/// Central-difference gradient of a scalar function:
/// g_i = (f(x + eps e_i) - f(x - eps e_i)) / (2 eps).
template <typename F>
Vec finite_diff_grad(F&& f, const Vec& x, double eps = 1e-5) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_grad: eps must be positive");
  require_nonempty(x, "finite_diff_grad");
  Vec probe = x;
  Vec g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = probe[i];
    probe[i] = xi + eps;
    const double fp = f(static_cast<const Vec&>(probe));
    probe[i] = xi - eps;
    const double fm = f(static_cast<const Vec&>(probe));
    probe[i] = xi;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericalError("finite_diff_grad: non-finite function value at coordinate " +
                           std::to_string(i));
    }
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

/// Matrix-argument gradient realised by flattening into a Vec (column-major,
/// Eigen's native order) and reusing finite_diff_grad.
template <typename F>
Mat finite_diff_grad_matrix(F&& f, const Mat& x, double eps = 1e-5) {
  const auto rows = x.rows();
  const auto cols = x.cols();
  Vec flat = Eigen::Map<const Vec>(x.data(), x.size());
  Vec g = finite_diff_grad(
      [&](const Vec& v) {
        const Mat m = Eigen::Map<const Mat>(v.data(), rows, cols);
        return f(m);
      },
      flat, eps);
  return Eigen::Map<Mat>(g.data(), rows, cols);
}

/// max |a - b| / max(floor, max |b|), the relative measure used by oracle
/// checks. `floor` keeps the measure defined when b vanishes.
template <typename DA, typename DB>
double relative_error(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b,
                      double floor = 1.0) {
  const double scale = std::max(floor, b.cwiseAbs().maxCoeff());
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace gkf
