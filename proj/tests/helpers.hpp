#pragma once

#include <cstdint>
#include <random>

#include "mdfa/linalg.hpp"
#include "mdfa/model.hpp"
#include "mdfa/random.hpp"
#include "mdfa/types.hpp"

namespace testutil {

using mdfa::Index;
using mdfa::Matrix;
using mdfa::Vector;

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

/// Valid parameters with loadings N(0, 0.5^2) and psi uniform in [0.5, 1.2].
inline mdfa::model::FactorParams random_params(Index p, Index m, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(0.0, 0.5);
  std::uniform_real_distribution<double> unif(0.5, 1.2);
  mdfa::model::FactorParams fp;
  fp.lambda.resize(p, m);
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < m; ++j) fp.lambda(i, j) = nd(gen);
  fp.psi.resize(p);
  for (Index i = 0; i < p; ++i) fp.psi(i) = unif(gen);
  return fp;
}

inline Matrix random_orthogonal(Index p, std::uint64_t seed) {
  Matrix g = mdfa::rng::std_normal(p, p, seed);
  Eigen::HouseholderQR<Matrix> qr(g);
  return qr.householderQ() * Matrix::Identity(p, p);
}

/// Symmetric positive definite matrix with eigenvalues in [0.5, 2.5].
inline Matrix random_spd(Index p, std::uint64_t seed) {
  Matrix g = mdfa::rng::std_normal(p, p, seed);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(p, p);
  std::mt19937_64 gen(mdfa::rng::mix(seed, 0x5bd));
  std::uniform_real_distribution<double> unif(0.5, 2.5);
  Vector ev(p);
  for (Index i = 0; i < p; ++i) ev(i) = unif(gen);
  return q * ev.asDiagonal() * q.transpose();
}

/// Random scores satisfying the constraints exactly (up to rounding):
/// mean-zero columns, Z^T Z / d = I, built by QR of centered noise.
inline mdfa::model::ScoreMatrix random_feasible_scores(Index n, Index m, Index p,
                                                       mdfa::Denominator denom,
                                                       std::uint64_t seed) {
  Matrix g = mdfa::rng::std_normal(n, m + p, seed);
  g = mdfa::model::centered(g);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(n, m + p);
  const double d = mdfa::denom_value(denom, n);
  Matrix z = std::sqrt(d) * q;
  mdfa::model::ScoreMatrix s;
  s.f = z.leftCols(m);
  s.e = z.rightCols(p);
  s.denom = denom;
  return s;
}

}  // namespace testutil
