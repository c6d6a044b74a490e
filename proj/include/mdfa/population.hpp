#pragma once

#include <cmath>

#include "mdfa/linalg.hpp"
#include "mdfa/model.hpp"
#include "mdfa/types.hpp"

namespace mdfa::population {

/// Value of the concentrated loss at a parameter matrix against a covariance,
/// split into its two terms.
struct LossAtSigma {
  double value = 0;
  double term_projection = 0;  // tr[(I - A)^T Sigma (I - A)]
  double term_sqrt = 0;        // ||(Phi^T)^+ (Phi^T Sigma Phi)^{1/2} - Phi||_F^2
};

namespace detail {

inline void check_shapes(const Matrix& phi, const Matrix& sigma) {
  if (sigma.rows() != sigma.cols())
    throw DimensionError("loss_terms: sigma must be square");
  if (phi.rows() != sigma.rows())
    throw DimensionError("loss_terms: phi/sigma row mismatch");
  if (phi.cols() <= phi.rows())
    throw DimensionError("loss_terms: phi must have more columns than rows");
}

}  // namespace detail

/// Shared evaluator used by both the population loss and the sample
/// concentrated loss; callers gate their covariance input. The square root of
/// Phi^T Sigma Phi is built from its p leading eigenpairs, which reconstructs
/// it exactly because its rank is at most p.
inline LossAtSigma loss_terms(const Matrix& phi, const Matrix& sigma,
                              const Tolerances& tol = {}) {
  detail::check_shapes(phi, sigma);
  const Index p = phi.rows();

  linalg::SpectralDecomp ed = linalg::spectral(phi.transpose() * sigma * phi);
  Matrix lhat = ed.vectors.leftCols(p);
  Vector lam = ed.values.head(p).cwiseMax(0.0);
  Matrix sqrt_g = lhat * lam.cwiseSqrt().asDiagonal() * lhat.transpose();

  Matrix phi_pinv = linalg::pinv(phi, tol);  // (m+p) x p
  Matrix a = phi * lhat * lhat.transpose() * phi_pinv;
  Matrix ima = Matrix::Identity(p, p) - a;

  LossAtSigma out;
  out.term_projection = (ima.transpose() * sigma * ima).trace();
  out.term_sqrt = (phi_pinv.transpose() * sqrt_g - phi).squaredNorm();
  out.value = out.term_projection + out.term_sqrt;
  if (!std::isfinite(out.value)) throw EvalError("loss_terms: non-finite loss");
  return out;
}

/// The rank-p oblique projector A onto the fitted column space; exposed for
/// diagnostics (A is idempotent, and A Phi-span acts as identity).
inline Matrix projector(const Matrix& phi, const Matrix& sigma,
                        const Tolerances& tol = {}) {
  detail::check_shapes(phi, sigma);
  const Index p = phi.rows();
  linalg::SpectralDecomp ed = linalg::spectral(phi.transpose() * sigma * phi);
  Matrix lhat = ed.vectors.leftCols(p);
  return phi * lhat * lhat.transpose() * linalg::pinv(phi, tol);
}

/// Population loss: requires a symmetric positive definite covariance.
inline LossAtSigma population_loss(const Matrix& phi, const Matrix& sigma_star,
                                   const Tolerances& tol = {}) {
  if (sigma_star.rows() != sigma_star.cols())
    throw DimensionError("population_loss: sigma must be square");
  const double scale = std::max(1.0, sigma_star.cwiseAbs().maxCoeff());
  if ((sigma_star - sigma_star.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw InvalidInput("population_loss: sigma must be symmetric");
  Matrix s = linalg::sym(sigma_star);
  linalg::SpectralDecomp ed = linalg::spectral(s);
  if (ed.values(ed.values.size() - 1) <= 0.0)
    throw NotPsd("population_loss: sigma must be positive definite");
  return loss_terms(phi, s, tol);
}

/// Loss as a function of the free-parameter vector; variance coordinates
/// below zero are clamped by the inverse map.
inline double loss_theta(const model::ThetaVector& th, const Matrix& sigma,
                         const Tolerances& tol = {}) {
  model::FactorParams fp = model::theta_to_phi(th);
  return loss_terms(fp.phi(), sigma, tol).value;
}

}  // namespace mdfa::population
