#pragma once

#include <cstdint>
#include <random>

#include "mdfa/types.hpp"

namespace mdfa::rng {

/// splitmix64 finalizer; used to derive independent seeds from (seed, salt)
/// pairs so that parallel work items get reproducible, order-free streams.
inline std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return mix(mix(seed, a), b);
}

inline std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                         std::uint64_t c) {
  return mix(mix(mix(seed, a), b), c);
}

/// n x p matrix of independent standard normals, filled row-major so the
/// draw order is independent of any downstream use.
inline Matrix std_normal(Index n, Index p, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix x(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) x(i, j) = nd(gen);
  return x;
}

/// Draw n rows from N(0, sigma). sigma must be symmetric positive
/// semidefinite; a Cholesky factor is used when it exists, otherwise an
/// eigenvalue square root (small negative eigenvalues within tol.psd are
/// clamped to zero).
inline Matrix mvn_rows(const Matrix& sigma, Index n, std::uint64_t seed,
                       const Tolerances& tol = {}) {
  if (sigma.rows() != sigma.cols()) throw DimensionError("mvn_rows: sigma must be square");
  const Index p = sigma.rows();
  Matrix g = std_normal(n, p, seed);
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() == Eigen::Success) {
    Matrix l = llt.matrixL();
    return g * l.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(sigma);
  Vector ev = es.eigenvalues();
  if (ev.minCoeff() < -tol.psd * std::max(1.0, ev.maxCoeff()))
    throw NotPsd("mvn_rows: sigma has a negative eigenvalue beyond tolerance");
  Vector root = ev.cwiseMax(0.0).cwiseSqrt();
  return g * (es.eigenvectors() * root.asDiagonal()).transpose();
}

}  // namespace mdfa::rng
