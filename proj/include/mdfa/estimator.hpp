#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "mdfa/linalg.hpp"
#include "mdfa/model.hpp"
#include "mdfa/population.hpp"
#include "mdfa/random.hpp"
#include "mdfa/types.hpp"

namespace mdfa::estimator {

enum class InitMethod { PcaBased, Random, Supplied };

struct FitOptions {
  Index max_iter = 5000;
  double tol = 1e-9;  // stop when the loss decrease <= tol * max(1, |loss|)
  Denominator denom = Denominator::NMinus1;
  InitMethod init = InitMethod::PcaBased;
  std::uint64_t seed = 0;  // used by random initialization only
  std::optional<model::FactorParams> start;
  bool ic5 = false;      // zero upper triangle, nonnegative diagonal of lambda
  Index sparsity_k = 0;  // keep at most k loadings; 0 disables
  model::Bounds bounds{};
  Tolerances tolerances{};
};

struct FitResult {
  model::FactorParams params;
  std::optional<model::ScoreMatrix> scores;  // data-based fits only
  std::vector<double> loss_trace;  // objective after init and each iteration
  Index iterations = 0;
  bool converged = false;
  bool clamped = false;    // some box constraint was active during the fit
  bool perturbed = false;  // rank-deficiency retry added jitter to psi
};

namespace detail {

inline void check_fit_options(const FitOptions& o) {
  if (o.max_iter < 1) throw InvalidInput("fit: max_iter must be >= 1");
  if (!(o.tol >= 0)) throw InvalidInput("fit: tol must be >= 0");
  if (o.sparsity_k < 0) throw InvalidInput("fit: sparsity_k must be >= 0");
  if (o.init == InitMethod::Supplied && !o.start)
    throw InvalidInput("fit: supplied init requires start parameters");
}

}  // namespace detail

/// Constraint pass applied to freshly updated (or initial) parameters. Every
/// stage minimizes the separable per-entry quadratic over its constraint set,
/// so the concentrated loss stays nonincreasing:
///  1. zero the upper triangle of lambda (identification),
///  2. flip column signs so diagonal loadings are nonnegative (the loss is
///     invariant under column sign changes),
///  3. keep the sparsity_k largest |entries| of lambda (ranking by |value| is
///     exact even under the later clamp, because the per-entry gain is
///     strictly increasing in |value|); ties broken by (row, col),
///  4. clamp lambda and psi into the box.
/// Returns true when a clamp changed a value.
inline bool apply_constraints(model::FactorParams& fp, const FitOptions& o) {
  const Index p = fp.p();
  const Index m = fp.m();
  if (o.ic5) {
    for (Index j = 1; j < m; ++j)
      for (Index i = 0; i < j; ++i) fp.lambda(i, j) = 0.0;
    for (Index j = 0; j < m; ++j)
      if (fp.lambda(j, j) < 0.0) fp.lambda.col(j) = -fp.lambda.col(j);
  }
  if (o.sparsity_k > 0 && o.sparsity_k < p * m) {
    struct Entry {
      double a;
      Index i, j;
    };
    std::vector<Entry> entries;
    entries.reserve(static_cast<std::size_t>(p * m));
    for (Index j = 0; j < m; ++j)
      for (Index i = 0; i < p; ++i)
        entries.push_back({std::abs(fp.lambda(i, j)), i, j});
    std::sort(entries.begin(), entries.end(), [](const Entry& x, const Entry& y) {
      if (x.a != y.a) return x.a > y.a;
      if (x.i != y.i) return x.i < y.i;
      return x.j < y.j;
    });
    for (std::size_t t = static_cast<std::size_t>(o.sparsity_k); t < entries.size(); ++t)
      fp.lambda(entries[t].i, entries[t].j) = 0.0;
  }
  bool clamped = false;
  const model::Bounds& b = fp.bounds;
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < p; ++i) {
      const double v = std::clamp(fp.lambda(i, j), -b.c_lambda, b.c_lambda);
      if (v != fp.lambda(i, j)) {
        fp.lambda(i, j) = v;
        clamped = true;
      }
    }
  for (Index j = 0; j < p; ++j) {
    const double v = std::clamp(fp.psi(j), b.c_lower, b.c_upper);
    if (v != fp.psi(j)) {
      fp.psi(j) = v;
      clamped = true;
    }
  }
  return clamped;
}

namespace detail {

inline bool converged_step(const std::vector<double>& trace, double tol) {
  const double prev = trace[trace.size() - 2];
  const double cur = trace.back();
  return prev - cur <= tol * std::max(1.0, std::abs(cur));
}

}  // namespace detail

/// Starting parameters derived from a covariance matrix so that data-based
/// and covariance-based fits share bit-identical initial points.
inline model::FactorParams initial_params(const Matrix& s, Index m,
                                          const FitOptions& o = {}) {
  const Index p = s.rows();
  if (s.cols() != p) throw DimensionError("initial_params: s must be square");
  if (m < 1 || m >= p) throw InvalidInput("initial_params: need 1 <= m < p");
  model::FactorParams fp;
  fp.bounds = o.bounds;
  switch (o.init) {
    case InitMethod::Supplied: {
      if (!o.start) throw InvalidInput("initial_params: start missing");
      fp = *o.start;
      fp.bounds = o.bounds;
      if (fp.p() != p || fp.m() != m)
        throw DimensionError("initial_params: start shape mismatch");
      break;
    }
    case InitMethod::Random: {
      const double scale =
          std::sqrt(std::max(s.trace() / static_cast<double>(p), 1e-12));
      fp.lambda = rng::std_normal(p, m, o.seed) *
                  (scale / std::sqrt(2.0 * static_cast<double>(m)));
      fp.psi.resize(p);
      for (Index j = 0; j < p; ++j)
        fp.psi(j) = std::sqrt(std::max(s(j, j), 1e-12) / 2.0);
      break;
    }
    case InitMethod::PcaBased: {
      linalg::SpectralDecomp ed = linalg::spectral(s);
      fp.lambda = ed.vectors.leftCols(m) *
                  ed.values.head(m).cwiseMax(0.0).cwiseSqrt().asDiagonal();
      fp.psi.resize(p);
      for (Index j = 0; j < p; ++j) {
        const double resid = s(j, j) - fp.lambda.row(j).squaredNorm();
        fp.psi(j) = std::sqrt(std::max(resid, 0.1 * s(j, j)));
      }
      break;
    }
  }
  return fp;
}

/// Concentrated loss of fitted parameters against a sample covariance; the
/// covariance is gated to be symmetric positive semidefinite within
/// tolerance. Shares its evaluation code with the population loss.
inline population::LossAtSigma concentrated_loss(const model::FactorParams& fp,
                                                 const Matrix& s,
                                                 const Tolerances& tol = {}) {
  if (s.rows() != s.cols()) throw DimensionError("concentrated_loss: s must be square");
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw InvalidInput("concentrated_loss: s must be symmetric");
  Matrix ss = linalg::sym(s);
  linalg::SpectralDecomp ed = linalg::spectral(ss);
  if (ed.values(ed.values.size() - 1) < -tol.psd * std::max(1.0, ed.values(0)))
    throw NotPsd("concentrated_loss: s has negative eigenvalue beyond tolerance");
  return population::loss_terms(fp.phi(), ss, tol);
}

namespace detail {

struct ScoreUpdate {
  Matrix f, e;
  bool rank_ok = false;
};

/// Score step: minimize over the constrained scores at fixed parameters via
/// the leading p singular triplets of Xc Phi / sqrt(d). The orthogonal
/// completion is built against [K, 1/sqrt(n)] so completed columns keep mean
/// zero.
inline ScoreUpdate score_update(const Matrix& xc, const model::FactorParams& fp,
                                double d, const Tolerances& tol) {
  const Index n = xc.rows();
  const Index p = fp.p();
  const Index m = fp.m();
  Matrix mm = xc * fp.phi() / std::sqrt(d);  // n x (m+p)
  linalg::ThinSvd svd = linalg::thin_svd(mm, p);
  ScoreUpdate out;
  const double s1 = svd.s(0);
  const double sp = svd.s(p - 1);
  if (s1 <= 0.0 || (sp / s1) * (sp / s1) <= tol.eig_clamp_rel) {
    out.rank_ok = false;
    return out;
  }
  Matrix aug(n, p + 1);
  aug.leftCols(p) = svd.u;
  aug.col(p) = Vector::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
  Matrix kperp = linalg::orth_complement(aug, m, tol);
  Matrix lperp = linalg::orth_complement(svd.v, m, tol);
  Matrix z = std::sqrt(d) * (svd.u * svd.v.transpose() + kperp * lperp.transpose());
  out.f = z.leftCols(m);
  out.e = z.rightCols(p);
  out.rank_ok = true;
  return out;
}

}  // namespace detail

/// Minimizer of the data loss over the constrained scores at fixed
/// parameters. The data matrix is centered internally.
inline model::ScoreMatrix optimal_scores(const Matrix& x,
                                         const model::FactorParams& fp,
                                         Denominator denom = Denominator::NMinus1,
                                         const Tolerances& tol = {}) {
  model::validate(fp);
  const Index n = x.rows();
  if (x.cols() != fp.p()) throw DimensionError("optimal_scores: column count mismatch");
  if (!x.allFinite()) throw InvalidInput("optimal_scores: non-finite data");
  if (n < fp.m() + fp.p() + 1)
    throw TooFewRows("optimal_scores: need n >= m + p + 1");
  Matrix xc = model::centered(x);
  detail::ScoreUpdate su =
      detail::score_update(xc, fp, denom_value(denom, n), tol);
  if (!su.rank_ok)
    throw RankDeficient("optimal_scores: projected data is rank deficient");
  model::ScoreMatrix sm;
  sm.f = std::move(su.f);
  sm.e = std::move(su.e);
  sm.denom = denom;
  return sm;
}

/// Alternating fit on a data matrix: score step (exact minimizer over the
/// constrained scores), parameter step (exact minimizer under the structure
/// constraints), tracked by the concentrated loss. A rank-deficient score
/// step is retried once with jittered psi; a second failure propagates.
inline FitResult fit_mdfa(const Matrix& x, Index m, const FitOptions& o = {}) {
  detail::check_fit_options(o);
  const Index n = x.rows();
  const Index p = x.cols();
  if (!x.allFinite()) throw InvalidInput("fit_mdfa: non-finite data");
  if (m < 1 || m >= p) throw InvalidInput("fit_mdfa: need 1 <= m < p");
  if (n < m + p + 1) throw TooFewRows("fit_mdfa: need n >= m + p + 1");
  const double d = denom_value(o.denom, n);
  Matrix xc = model::centered(x);
  Matrix s = xc.transpose() * xc / d;

  FitResult r;
  r.params = initial_params(s, m, o);
  r.clamped = apply_constraints(r.params, o);
  r.loss_trace.push_back(population::loss_terms(r.params.phi(), s, o.tolerances).value);

  model::ScoreMatrix scores;
  scores.denom = o.denom;
  bool retried = false;
  for (Index t = 0; t < o.max_iter; ++t) {
    detail::ScoreUpdate su = detail::score_update(xc, r.params, d, o.tolerances);
    if (!su.rank_ok) {
      if (retried) throw RankDeficient("fit_mdfa: projected data is rank-deficient");
      retried = true;
      r.perturbed = true;
      r.params.psi.array() += 1e-6;
      --t;
      continue;
    }
    scores.f = std::move(su.f);
    scores.e = std::move(su.e);

    r.params.lambda = xc.transpose() * scores.f / d;
    for (Index j = 0; j < p; ++j) r.params.psi(j) = xc.col(j).dot(scores.e.col(j)) / d;
    if (apply_constraints(r.params, o)) r.clamped = true;

    r.loss_trace.push_back(
        population::loss_terms(r.params.phi(), s, o.tolerances).value);
    r.iterations = t + 1;
    if (detail::converged_step(r.loss_trace, o.tol)) {
      r.converged = true;
      break;
    }
  }
  r.scores = std::move(scores);
  return r;
}

/// Same alternation driven purely by a covariance matrix: the score step is
/// implicit, and the parameter target is (Phi^T)^+ (Phi^T S Phi)^{1/2}, whose
/// loading block and uniqueness diagonal reproduce the data-based update
/// exactly when S comes from the same data and denominator.
inline FitResult fit_mdfa_cov(const model::CovarianceEstimate& cov, Index m,
                              const FitOptions& o = {}) {
  detail::check_fit_options(o);
  const Matrix& s_in = cov.s;
  const Index p = s_in.rows();
  if (s_in.cols() != p) throw DimensionError("fit_mdfa_cov: s must be square");
  if (!s_in.allFinite()) throw InvalidInput("fit_mdfa_cov: non-finite covariance");
  if (m < 1 || m >= p) throw InvalidInput("fit_mdfa_cov: need 1 <= m < p");
  const double scale = std::max(1.0, s_in.cwiseAbs().maxCoeff());
  if ((s_in - s_in.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw InvalidInput("fit_mdfa_cov: s must be symmetric");
  Matrix s = linalg::sym(s_in);
  {
    linalg::SpectralDecomp ed = linalg::spectral(s);
    if (ed.values(p - 1) < -o.tolerances.psd * std::max(1.0, ed.values(0)))
      throw NotPsd("fit_mdfa_cov: covariance has negative eigenvalue beyond tolerance");
  }

  FitResult r;
  r.params = initial_params(s, m, o);
  r.clamped = apply_constraints(r.params, o);
  r.loss_trace.push_back(population::loss_terms(r.params.phi(), s, o.tolerances).value);

  bool retried = false;
  for (Index t = 0; t < o.max_iter; ++t) {
    Matrix phi = r.params.phi();
    linalg::SpectralDecomp ed = linalg::spectral(phi.transpose() * s * phi);
    if (ed.values(0) <= 0.0 ||
        ed.values(p - 1) <= o.tolerances.eig_clamp_rel * ed.values(0)) {
      if (retried) throw RankDeficient("fit_mdfa_cov: projected covariance is rank-deficient");
      retried = true;
      r.perturbed = true;
      r.params.psi.array() += 1e-6;
      --t;
      continue;
    }
    Matrix lhat = ed.vectors.leftCols(p);
    Matrix sqrt_g =
        lhat * ed.values.head(p).cwiseMax(0.0).cwiseSqrt().asDiagonal() * lhat.transpose();
    Matrix target = linalg::pinv(phi, o.tolerances).transpose() * sqrt_g;  // p x (m+p)

    r.params.lambda = target.leftCols(m);
    r.params.psi = target.rightCols(p).diagonal();
    if (apply_constraints(r.params, o)) r.clamped = true;

    r.loss_trace.push_back(
        population::loss_terms(r.params.phi(), s, o.tolerances).value);
    r.iterations = t + 1;
    if (detail::converged_step(r.loss_trace, o.tol)) {
      r.converged = true;
      break;
    }
  }
  return r;
}

/// Principal-component baseline: loadings from the m leading singular
/// triplets of the centered data, factor scores from the left factor.
inline FitResult fit_pca(const Matrix& x, Index m, const FitOptions& o = {}) {
  const Index n = x.rows();
  const Index p = x.cols();
  if (!x.allFinite()) throw InvalidInput("fit_pca: non-finite data");
  if (m < 1 || m >= p) throw InvalidInput("fit_pca: need 1 <= m < p");
  if (n < 2) throw TooFewRows("fit_pca: need n >= 2");
  const double d = denom_value(o.denom, n);
  Matrix xc = model::centered(x);
  linalg::ThinSvd svd = linalg::thin_svd(xc, m);

  FitResult r;
  r.params.bounds = o.bounds;
  r.params.lambda = svd.v * (svd.s / std::sqrt(d)).asDiagonal();
  r.params.psi.resize(p);
  for (Index j = 0; j < p; ++j) {
    const double sjj = xc.col(j).squaredNorm() / d;
    const double resid = sjj - r.params.lambda.row(j).squaredNorm();
    r.params.psi(j) = std::sqrt(std::max(resid, 0.0));
  }
  if (apply_constraints(r.params, FitOptions{.bounds = o.bounds}))
    r.clamped = true;

  model::ScoreMatrix scores;
  scores.denom = o.denom;
  scores.f = std::sqrt(d) * svd.u;
  scores.e = Matrix::Zero(n, 0);
  r.scores = std::move(scores);

  Matrix s = xc.transpose() * xc / d;
  r.loss_trace.push_back(population::loss_terms(r.params.phi(), s, o.tolerances).value);
  r.iterations = 0;
  r.converged = true;
  return r;
}

/// Least-squares baseline on the covariance: alternate the best
/// positive-semidefinite rank-m approximation of S - Psi^2 with the exact
/// diagonal update; tracked by ||S - Lambda Lambda^T - Psi^2||_F^2.
inline FitResult fit_ols(const model::CovarianceEstimate& cov, Index m,
                         const FitOptions& o = {}) {
  detail::check_fit_options(o);
  const Matrix& s_in = cov.s;
  const Index p = s_in.rows();
  if (s_in.cols() != p) throw DimensionError("fit_ols: s must be square");
  if (!s_in.allFinite()) throw InvalidInput("fit_ols: non-finite covariance");
  if (m < 1 || m >= p) throw InvalidInput("fit_ols: need 1 <= m < p");
  Matrix s = linalg::sym(s_in);

  FitResult r;
  r.params = initial_params(s, m, o);
  Matrix lambda = r.params.lambda;
  Vector psi2 = r.params.psi2();
  auto objective = [&](const Matrix& l, const Vector& v) {
    Matrix resid = s - l * l.transpose();
    resid.diagonal() -= v;
    return resid.squaredNorm();
  };
  r.loss_trace.push_back(objective(lambda, psi2));

  for (Index t = 0; t < o.max_iter; ++t) {
    Matrix reduced = s;
    reduced.diagonal() -= psi2;
    linalg::SpectralDecomp ed = linalg::spectral(reduced);
    lambda = ed.vectors.leftCols(m) *
             ed.values.head(m).cwiseMax(0.0).cwiseSqrt().asDiagonal();
    psi2 = (s - lambda * lambda.transpose()).diagonal().cwiseMax(0.0);
    r.loss_trace.push_back(objective(lambda, psi2));
    r.iterations = t + 1;
    if (detail::converged_step(r.loss_trace, o.tol)) {
      r.converged = true;
      break;
    }
  }
  r.params.lambda = lambda;
  r.params.psi = psi2.cwiseSqrt();
  if (apply_constraints(r.params, FitOptions{.bounds = o.bounds}))
    r.clamped = true;
  return r;
}

}  // namespace mdfa::estimator
