#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "mdfa/estimator.hpp"
#include "mdfa/linalg.hpp"
#include "mdfa/model.hpp"
#include "mdfa/population.hpp"
#include "mdfa/random.hpp"
#include "mdfa/threadpool.hpp"
#include "mdfa/types.hpp"

namespace mdfa::asymptotics {

/// Row/column pair (i, j) with i >= j for half-vectorization index b.
inline std::pair<Index, Index> vech_entry(Index b, Index p) {
  Index j = 0;
  Index block = p;
  while (b >= block) {
    b -= block;
    --block;
    ++j;
  }
  return {j + b, j};
}

/// Central-difference gradient with per-coordinate step rel * max(1, |x_i|).
template <class F>
Vector fd_gradient(F&& f, const Vector& x, double step_rel = 1e-5) {
  Vector g(x.size());
  Vector xp = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double h = step_rel * std::max(1.0, std::abs(x(i)));
    const double xi = x(i);
    xp(i) = xi + h;
    const double up = f(xp);
    xp(i) = xi - h;
    const double dn = f(xp);
    xp(i) = xi;
    g(i) = (up - dn) / (2.0 * h);
  }
  return g;
}

struct HessianReport {
  Matrix h;               // symmetrized
  double asymmetry = 0;   // max |raw - raw^T| before symmetrization
};

/// Nested finite-difference Hessian: outer central differences of the inner
/// central-difference gradient, with distinct outer and inner steps so the
/// raw matrix is genuinely asymmetric and max |H - H^T| is an informative
/// error diagnostic. The returned matrix is the symmetrized average.
template <class F>
HessianReport numeric_hessian(F&& f, const Vector& x, double outer_rel = 1e-4,
                              double inner_rel = 1e-5) {
  const Index k = x.size();
  Matrix raw(k, k);
  Vector xp = x;
  for (Index i = 0; i < k; ++i) {
    const double h = outer_rel * std::max(1.0, std::abs(x(i)));
    const double xi = x(i);
    xp(i) = xi + h;
    Vector gp = fd_gradient(f, xp, inner_rel);
    xp(i) = xi - h;
    Vector gm = fd_gradient(f, xp, inner_rel);
    xp(i) = xi;
    raw.row(i) = ((gp - gm) / (2.0 * h)).transpose();
  }
  HessianReport out;
  out.asymmetry = (raw - raw.transpose()).cwiseAbs().maxCoeff();
  out.h = 0.5 * (raw + raw.transpose());
  return out;
}

/// Asymptotic covariance of sqrt(n) (vech(S_n) - vech(Sigma)) under
/// normality: Gamma[(i,j),(k,l)] = sigma_ik sigma_jl + sigma_il sigma_jk.
inline Matrix gamma_normal(const Matrix& sigma) {
  if (sigma.rows() != sigma.cols())
    throw DimensionError("gamma_normal: sigma must be square");
  const Index p = sigma.rows();
  const Index q = p * (p + 1) / 2;
  Matrix g(q, q);
  for (Index a = 0; a < q; ++a) {
    auto [i, j] = vech_entry(a, p);
    for (Index b = 0; b < q; ++b) {
      auto [k, l] = vech_entry(b, p);
      g(a, b) = sigma(i, k) * sigma(j, l) + sigma(i, l) * sigma(j, k);
    }
  }
  return g;
}

struct GammaEmpirical {
  Matrix gamma;
  bool small_sample_warning = false;  // n < 10 * p(p+1)/2
};

/// Sample covariance (denominator n - 1) of vech((x_i - mean)(x_i - mean)^T),
/// accumulated in one pass over rows.
inline GammaEmpirical gamma_empirical(const Matrix& x) {
  const Index n = x.rows();
  const Index p = x.cols();
  if (n < 2) throw TooFewRows("gamma_empirical: need n >= 2");
  if (!x.allFinite()) throw InvalidInput("gamma_empirical: non-finite data");
  const Index q = p * (p + 1) / 2;
  Vector mean = x.colwise().mean();
  Vector sum_w = Vector::Zero(q);
  Matrix sum_ww = Matrix::Zero(q, q);
  Vector w(q);
  for (Index r = 0; r < n; ++r) {
    Vector xc = x.row(r).transpose() - mean;
    Index t = 0;
    for (Index j = 0; j < p; ++j)
      for (Index i = j; i < p; ++i) w(t++) = xc(i) * xc(j);
    sum_w += w;
    sum_ww.selfadjointView<Eigen::Lower>().rankUpdate(w);
  }
  Matrix total = Matrix(sum_ww.selfadjointView<Eigen::Lower>());
  GammaEmpirical out;
  out.gamma = (total - sum_w * sum_w.transpose() / static_cast<double>(n)) /
              static_cast<double>(n - 1);
  out.small_sample_warning = n < 10 * q;
  return out;
}

struct AsymptoticOptions {
  double theta_step_rel = 1e-4;  // outer step for Hessian and cross terms
  double inner_step_rel = 1e-5;  // inner gradient step for the Hessian
  double sigma_step_rel = 1e-4;  // covariance-entry step for cross terms
  double cond_limit = 1e10;
  Tolerances tolerances{};
};

/// Mixed second derivatives d^2 L / d theta d vech(Sigma)^T by nested central
/// differences; perturbing an off-diagonal vech coordinate moves both
/// symmetric entries of Sigma.
inline Matrix cross_derivative(const model::ThetaVector& theta, const Matrix& sigma,
                               const AsymptoticOptions& o = {}) {
  const Index p = sigma.rows();
  const Index k = theta.v.size();
  const Index q = p * (p + 1) / 2;
  Matrix c(k, q);
  model::ThetaVector th = theta;
  Matrix sg = sigma;
  for (Index a = 0; a < k; ++a) {
    const double ht = o.theta_step_rel * std::max(1.0, std::abs(theta.v(a)));
    for (Index b = 0; b < q; ++b) {
      auto [i, j] = vech_entry(b, p);
      const double hs = o.sigma_step_rel * std::max(1.0, std::abs(sigma(i, j)));
      double quad = 0.0;
      for (int st = -1; st <= 1; st += 2)
        for (int ss = -1; ss <= 1; ss += 2) {
          th.v(a) = theta.v(a) + st * ht;
          sg(i, j) = sigma(i, j) + ss * hs;
          sg(j, i) = sg(i, j);
          quad += st * ss * population::loss_theta(th, sg, o.tolerances);
        }
      th.v(a) = theta.v(a);
      sg(i, j) = sigma(i, j);
      sg(j, i) = sigma(j, i);
      c(a, b) = quad / (4.0 * ht * hs);
    }
  }
  return c;
}

struct VarianceReport {
  model::ThetaVector theta_star;
  Matrix h;      // Hessian of the loss in theta at the truth
  Matrix c;      // cross derivatives vs vech(Sigma)
  Matrix j;      // influence map -H^{-1} C
  Matrix gamma;  // covariance of sqrt(n) vech(S_n - Sigma)
  Matrix v;      // J Gamma J^T
  double cond_h = 0;
  double hess_asymmetry = 0;
};

/// Delta-method asymptotic covariance of the estimator: V = J Gamma J^T with
/// J = -H^{-1} C. The Hessian condition number is gated.
inline VarianceReport asymptotic_variance(const model::FactorParams& truth,
                                          const Matrix& sigma_star,
                                          const Matrix& gamma,
                                          const AsymptoticOptions& o = {}) {
  const Index p = sigma_star.rows();
  if (truth.p() != p) throw DimensionError("asymptotic_variance: shape mismatch");
  const Index q = p * (p + 1) / 2;
  if (gamma.rows() != q || gamma.cols() != q)
    throw DimensionError("asymptotic_variance: gamma shape mismatch");

  VarianceReport rep;
  rep.theta_star = model::phi_to_theta(truth, o.tolerances);
  rep.gamma = gamma;
  Matrix s = linalg::sym(sigma_star);
  auto f = [&](const Vector& v) {
    model::ThetaVector th{v, rep.theta_star.p, rep.theta_star.m};
    return population::loss_theta(th, s, o.tolerances);
  };
  HessianReport hr =
      numeric_hessian(f, rep.theta_star.v, o.theta_step_rel, o.inner_step_rel);
  rep.h = hr.h;
  rep.hess_asymmetry = hr.asymmetry;

  linalg::SpectralDecomp ed = linalg::spectral(rep.h);
  const double amax = ed.values.cwiseAbs().maxCoeff();
  const double amin = ed.values.cwiseAbs().minCoeff();
  rep.cond_h = amin > 0.0 ? amax / amin : std::numeric_limits<double>::infinity();
  if (!(rep.cond_h <= o.cond_limit))
    throw SingularHessian("asymptotic_variance: Hessian condition exceeds limit");

  rep.c = cross_derivative(rep.theta_star, s, o);
  Matrix hinv = ed.vectors * ed.values.cwiseInverse().asDiagonal() * ed.vectors.transpose();
  rep.j = -hinv * rep.c;
  rep.v = linalg::sym(rep.j * rep.gamma * rep.j.transpose());
  return rep;
}

struct NormalityOptions {
  Index n = 20000;
  Index reps = 2000;
  std::uint64_t seed = 1;
  Index workers = 1;
  double init_sd = 0.01;  // sd of the seeded perturbation around the truth
  estimator::FitOptions fit{};
  AsymptoticOptions asym{};
};

struct NormalityReport {
  model::ThetaVector theta_star;
  VarianceReport variance;  // theoretical, with Gamma under normality
  Matrix mc_covariance;     // covariance of sqrt(n) (theta_hat - theta*)
  Vector mc_mean;           // mean of sqrt(n) (theta_hat - theta*)
  Vector mc_skew;           // per-coordinate standardized third moment
  Vector mc_kurtosis;       // per-coordinate standardized fourth moment
  Index n = 0;
  Index reps = 0;
  Index failures = 0;
};

/// Monte Carlo check of the limiting distribution: fit replicated normal
/// samples from the implied covariance, each started at a seeded perturbation
/// of the truth, and compare scaled deviations against V. Requires an
/// identifiable truth: lower-trapezoid loadings with positive diagonal and
/// the row-deletion rank condition.
inline NormalityReport normality_study(const model::FactorParams& truth,
                                       const NormalityOptions& o = {}) {
  const Index p = truth.p();
  const Index m = truth.m();
  for (Index j = 0; j < m; ++j)
    if (truth.lambda(j, j) <= 0.0)
      throw NotIdentifiable("normality_study: diagonal loadings must be positive");
  if (!model::anderson_rubin_ok(truth.lambda))
    throw NotIdentifiable("normality_study: row-deletion rank condition fails");
  if (o.reps < 2) throw InvalidInput("normality_study: need reps >= 2");

  NormalityReport rep;
  rep.n = o.n;
  rep.reps = o.reps;
  rep.theta_star = model::phi_to_theta(truth, o.asym.tolerances);
  Matrix sigma_star = truth.implied_covariance();
  rep.variance = asymptotic_variance(truth, sigma_star, gamma_normal(sigma_star), o.asym);

  const Index k = rep.theta_star.v.size();
  Matrix draws(o.reps, k);
  std::vector<char> ok(static_cast<std::size_t>(o.reps), 0);
  const double root_n = std::sqrt(static_cast<double>(o.n));

  par::parallel_for(o.reps, o.workers, [&](Index r) {
    Matrix x = rng::mvn_rows(sigma_star, o.n, rng::mix(o.seed, 0xDA7A, static_cast<std::uint64_t>(r)));
    model::FactorParams start = truth;
    {
      std::mt19937_64 gen(rng::mix(o.seed, 0x1217, static_cast<std::uint64_t>(r)));
      std::normal_distribution<double> nd(0.0, o.init_sd);
      for (Index i = 0; i < p; ++i)
        for (Index j = 0; j < m; ++j) start.lambda(i, j) += nd(gen);
      for (Index i = 0; i < p; ++i) start.psi(i) += nd(gen);
    }
    estimator::FitOptions fo = o.fit;
    fo.ic5 = true;
    fo.init = estimator::InitMethod::Supplied;
    fo.start = start;
    try {
      estimator::FitResult fit = estimator::fit_mdfa(x, m, fo);
      if (!fit.converged) return;
      model::ThetaVector th = model::phi_to_theta(fit.params, o.asym.tolerances);
      draws.row(r) = (root_n * (th.v - rep.theta_star.v)).transpose();
      ok[static_cast<std::size_t>(r)] = 1;
    } catch (const Error&) {
      // counted below as a failure
    }
  });

  Index good = 0;
  for (Index r = 0; r < o.reps; ++r)
    if (ok[static_cast<std::size_t>(r)]) ++good;
  rep.failures = o.reps - good;
  if (good < 2) throw EvalError("normality_study: too few successful replications");

  Matrix z(good, k);
  Index at = 0;
  for (Index r = 0; r < o.reps; ++r)
    if (ok[static_cast<std::size_t>(r)]) z.row(at++) = draws.row(r);
  rep.mc_mean = z.colwise().mean();
  Matrix zc = z.rowwise() - rep.mc_mean.transpose();
  rep.mc_covariance = zc.transpose() * zc / static_cast<double>(good - 1);
  rep.mc_skew.resize(k);
  rep.mc_kurtosis.resize(k);
  for (Index c = 0; c < k; ++c) {
    const double m2 = zc.col(c).squaredNorm() / static_cast<double>(good);
    const double m3 = zc.col(c).array().cube().sum() / static_cast<double>(good);
    const double m4 = zc.col(c).array().pow(4).sum() / static_cast<double>(good);
    rep.mc_skew(c) = m3 / std::pow(m2, 1.5);
    rep.mc_kurtosis(c) = m4 / (m2 * m2);
  }
  return rep;
}

}  // namespace mdfa::asymptotics
