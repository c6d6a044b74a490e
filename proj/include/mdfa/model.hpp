#pragma once

#include <cmath>
#include <vector>

#include "mdfa/linalg.hpp"
#include "mdfa/types.hpp"

namespace mdfa::model {

/// Box constraints on the parameter space: |lambda_ij| <= c_lambda and
/// c_lower <= psi_j <= c_upper.
struct Bounds {
  double c_lambda = 10.0;
  double c_lower = 1e-3;
  double c_upper = 10.0;
};

/// Loadings and unique standard deviations. psi holds the diagonal of the
/// (nonnegative) uniqueness matrix, not its square.
struct FactorParams {
  Matrix lambda;  // p x m
  Vector psi;     // p
  Bounds bounds{};

  Index p() const { return lambda.rows(); }
  Index m() const { return lambda.cols(); }

  /// [lambda, diag(psi)], p x (m + p).
  Matrix phi() const {
    Matrix out(p(), m() + p());
    out.leftCols(m()) = lambda;
    out.rightCols(p()) = Matrix(psi.asDiagonal());
    return out;
  }

  Vector psi2() const { return psi.cwiseProduct(psi); }

  Matrix implied_covariance() const {
    Matrix s = lambda * lambda.transpose();
    s.diagonal() += psi2();
    return s;
  }
};

inline void validate(const FactorParams& fp) {
  const Index p = fp.p();
  const Index m = fp.m();
  if (p < 1 || m < 1 || m >= p)
    throw InvalidInput("validate: need 1 <= m < p");
  if (fp.psi.size() != p) throw DimensionError("validate: psi size mismatch");
  if (!fp.lambda.allFinite() || !fp.psi.allFinite())
    throw InvalidInput("validate: non-finite parameter");
  if (fp.lambda.cwiseAbs().maxCoeff() > fp.bounds.c_lambda)
    throw InvalidInput("validate: |lambda| exceeds c_lambda");
  if (fp.psi.minCoeff() < fp.bounds.c_lower)
    throw InvalidInput("validate: psi below c_lower");
  if (fp.psi.maxCoeff() > fp.bounds.c_upper)
    throw InvalidInput("validate: psi above c_upper");
}

/// Factor and error scores with the denominator their constraints refer to.
struct ScoreMatrix {
  Matrix f;  // n x m
  Matrix e;  // n x p
  Denominator denom = Denominator::NMinus1;
};

/// Scale-free violations of the five score constraints.
struct ScoreCheck {
  double mean_f = 0;  // ||1^T F||_inf / (sqrt(n) sqrt(d))
  double mean_e = 0;
  double orth_f = 0;  // max |F^T F / d - I|
  double orth_e = 0;
  double cross = 0;  // max |F^T E| / d
  double max_violation = 0;
  bool ok = false;
};

inline ScoreCheck check_scores(const ScoreMatrix& z, const Tolerances& tol = {}) {
  const Index n = z.f.rows();
  if (z.e.rows() != n) throw DimensionError("check_scores: row mismatch");
  const double d = denom_value(z.denom, n);
  const double mean_scale = std::sqrt(static_cast<double>(n)) * std::sqrt(d);
  ScoreCheck c;
  c.mean_f = z.f.colwise().sum().cwiseAbs().maxCoeff() / mean_scale;
  c.mean_e = z.e.colwise().sum().cwiseAbs().maxCoeff() / mean_scale;
  c.orth_f = (z.f.transpose() * z.f / d - Matrix::Identity(z.f.cols(), z.f.cols()))
                 .cwiseAbs()
                 .maxCoeff();
  c.orth_e = (z.e.transpose() * z.e / d - Matrix::Identity(z.e.cols(), z.e.cols()))
                 .cwiseAbs()
                 .maxCoeff();
  c.cross = (z.f.transpose() * z.e).cwiseAbs().maxCoeff() / d;
  c.max_violation = std::max({c.mean_f, c.mean_e, c.orth_f, c.orth_e, c.cross});
  c.ok = c.max_violation <= tol.score_feas;
  return c;
}

/// X minus its column means.
inline Matrix centered(const Matrix& x) {
  return x.rowwise() - x.colwise().mean();
}

/// Covariance matrix together with the sample size and denominator that
/// produced it.
struct CovarianceEstimate {
  Matrix s;
  Index n = 0;
  Denominator denom = Denominator::NMinus1;

  static CovarianceEstimate from_data(const Matrix& x, Denominator denom) {
    if (x.rows() < 2) throw TooFewRows("CovarianceEstimate: need n >= 2");
    Matrix xc = centered(x);
    CovarianceEstimate out;
    out.n = x.rows();
    out.denom = denom;
    out.s = xc.transpose() * xc / denom_value(denom, x.rows());
    return out;
  }
};

/// (1/d) ||X - Z Phi^T||_F^2 with X centered internally; d follows the
/// scores' denominator.
inline double data_loss(const Matrix& x, const FactorParams& fp,
                        const ScoreMatrix& z) {
  if (x.rows() != z.f.rows() || x.cols() != fp.p())
    throw DimensionError("data_loss: shape mismatch");
  if (z.f.cols() != fp.m() || z.e.cols() != fp.p())
    throw DimensionError("data_loss: score shape mismatch");
  Matrix xc = centered(x);
  Matrix resid = xc - z.f * fp.lambda.transpose() - z.e * Matrix(fp.psi.asDiagonal());
  return resid.squaredNorm() / denom_value(z.denom, x.rows());
}

/// Free parameters under the lower-trapezoid identification: column-stacked
/// entries lambda_ij with i >= j, followed by sigma_1^2 .. sigma_p^2.
struct ThetaVector {
  Vector v;
  Index p = 0;
  Index m = 0;

  static Index dim(Index p, Index m) { return p * m - m * (m - 1) / 2 + p; }
};

/// Requires the upper triangle of lambda to vanish within tolerance.
inline ThetaVector phi_to_theta(const FactorParams& fp, const Tolerances& tol = {}) {
  const Index p = fp.p();
  const Index m = fp.m();
  for (Index j = 1; j < m; ++j)
    for (Index i = 0; i < j; ++i)
      if (std::abs(fp.lambda(i, j)) > tol.upper_zero)
        throw NotIdentified("phi_to_theta: nonzero upper-triangle loading");
  ThetaVector th;
  th.p = p;
  th.m = m;
  th.v.resize(ThetaVector::dim(p, m));
  Index t = 0;
  for (Index j = 0; j < m; ++j)
    for (Index i = j; i < p; ++i) th.v(t++) = fp.lambda(i, j);
  for (Index j = 0; j < p; ++j) th.v(t++) = fp.psi(j) * fp.psi(j);
  return th;
}

/// Inverse of phi_to_theta. Variance coordinates are clamped at zero before
/// the square root so finite-difference probes stay evaluable.
inline FactorParams theta_to_phi(const ThetaVector& th, const Bounds& bounds = {}) {
  if (th.v.size() != ThetaVector::dim(th.p, th.m))
    throw DimensionError("theta_to_phi: size mismatch");
  FactorParams fp;
  fp.bounds = bounds;
  fp.lambda = Matrix::Zero(th.p, th.m);
  fp.psi.resize(th.p);
  Index t = 0;
  for (Index j = 0; j < th.m; ++j)
    for (Index i = j; i < th.p; ++i) fp.lambda(i, j) = th.v(t++);
  for (Index j = 0; j < th.p; ++j) fp.psi(j) = std::sqrt(std::max(th.v(t++), 0.0));
  return fp;
}

namespace detail {

inline Index numerical_rank(const Matrix& rows) {
  if (rows.rows() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(rows);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s(0) <= 0.0) return 0;
  Index r = 0;
  for (Index i = 0; i < s.size(); ++i)
    if (s(i) > 1e-8 * s(0)) ++r;
  return r;
}

/// Greedily pick rows (in the given order) until they reach rank m, then
/// test whether the leftover rows also reach rank m.
inline bool split_has_two_rank_m(const Matrix& lambda,
                                 const std::vector<Index>& order, Index m) {
  std::vector<Index> picked;
  Matrix acc(0, lambda.cols());
  for (Index idx : order) {
    Matrix trial(acc.rows() + 1, lambda.cols());
    trial.topRows(acc.rows()) = acc;
    trial.row(acc.rows()) = lambda.row(idx);
    if (numerical_rank(trial) > numerical_rank(acc)) {
      acc = trial;
      picked.push_back(idx);
      if (static_cast<Index>(picked.size()) == m) break;
    }
  }
  if (static_cast<Index>(picked.size()) < m) return false;
  std::vector<bool> in_picked(lambda.rows(), false);
  for (Index idx : picked) in_picked[static_cast<std::size_t>(idx)] = true;
  std::vector<Index> rest;
  for (Index idx : order)
    if (!in_picked[static_cast<std::size_t>(idx)]) rest.push_back(idx);
  Matrix rem(static_cast<Index>(rest.size()), lambda.cols());
  for (Index i = 0; i < rem.rows(); ++i)
    rem.row(i) = lambda.row(rest[static_cast<std::size_t>(i)]);
  return numerical_rank(rem) >= m;
}

}  // namespace detail

/// Sufficient check of the row-deletion condition: after deleting any single
/// row of lambda, the rest must split into two disjoint row sets of rank m.
/// Greedy selection is tried in forward and backward row order.
inline bool anderson_rubin_ok(const Matrix& lambda) {
  const Index p = lambda.rows();
  const Index m = lambda.cols();
  if (p < 2 * m + 1) return false;
  for (Index drop = 0; drop < p; ++drop) {
    std::vector<Index> fwd, bwd;
    for (Index i = 0; i < p; ++i)
      if (i != drop) fwd.push_back(i);
    bwd.assign(fwd.rbegin(), fwd.rend());
    Matrix rest(p - 1, m);
    for (Index i = 0; i < p - 1; ++i) rest.row(i) = lambda.row(fwd[static_cast<std::size_t>(i)]);
    std::vector<Index> local_fwd(static_cast<std::size_t>(p - 1));
    std::vector<Index> local_bwd(static_cast<std::size_t>(p - 1));
    for (Index i = 0; i < p - 1; ++i) {
      local_fwd[static_cast<std::size_t>(i)] = i;
      local_bwd[static_cast<std::size_t>(i)] = p - 2 - i;
    }
    if (!detail::split_has_two_rank_m(rest, local_fwd, m) &&
        !detail::split_has_two_rank_m(rest, local_bwd, m))
      return false;
  }
  return true;
}

}  // namespace mdfa::model
