#pragma once

#include "gkf/numerics.hpp"

#include <cstdint>
#include <random>
#include <string_view>

namespace gkf {

// Stream labels. Every random quantity in a run is drawn from a stream derived
// from the single run seed and one of these labels, so adding a consumer never
// shifts the draws of another.
namespace stream {
inline constexpr std::string_view process = "process";
inline constexpr std::string_view observation = "observation";
inline constexpr std::string_view c_matrix = "c_matrix";
inline constexpr std::string_view a_init = "a_init";
inline constexpr std::string_view b_init = "b_init";
inline constexpr std::string_view c_init = "c_init";
}  // namespace stream

// splitmix64 finaliser
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// FNV-1a, 64 bit
constexpr std::uint64_t fnv1a(std::string_view bytes,
                              std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed for the sub-stream `label` of run `seed`.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
  return mix64(seed ^ mix64(fnv1a(label)));
}

/// A labelled standard-normal source. Engine: std::mt19937_64, whose output
/// sequence is fixed by the standard; normal deviates come from
/// std::normal_distribution, which is deterministic per standard library.
class NormalStream {
public:
  NormalStream(std::uint64_t seed, std::string_view label)
      : engine_(derive_seed(seed, label)) {}

  double next() { return dist_(engine_); }

  Vec vector(Eigen::Index n) {
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = next();
    return v;
  }

  /// Entries drawn row by row.
  Mat matrix(Eigen::Index rows, Eigen::Index cols) {
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = next();
    return m;
  }

private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> dist_{0.0, 1.0};
};

/// Symmetric square root S of a PSD covariance (S S^T = cov). Handles
/// singular covariances, including the zero matrix.
inline Mat covariance_factor(const Mat& cov) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(cov));
  const Vec roots = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * roots.asDiagonal() * es.eigenvectors().transpose();
}

/// Zero-mean Gaussian sampler for a fixed covariance.
class GaussianSampler {
public:
  GaussianSampler(const Mat& cov, std::uint64_t seed, std::string_view label)
      : factor_(covariance_factor(cov)), stream_(seed, label) {}

  Vec draw() { return factor_ * stream_.vector(factor_.cols()); }

private:
  Mat factor_;
  NormalStream stream_;
};

}  // namespace gkf
