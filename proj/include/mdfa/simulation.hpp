#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mdfa/estimator.hpp"
#include "mdfa/linalg.hpp"
#include "mdfa/model.hpp"
#include "mdfa/random.hpp"
#include "mdfa/threadpool.hpp"
#include "mdfa/types.hpp"

namespace mdfa::simulation {

/// One simulation design: perfect-cluster loadings with per-column magnitude
/// ranges, optionally contaminated by many small minor factors.
struct SettingSpec {
  int id = 1;
  Index p = 8;
  Index m = 2;
  Index per_col = 4;  // variables loading on each factor; p == m * per_col
  std::vector<std::pair<double, double>> ranges;  // |loading| range per column
  bool minor_factors = false;
  Index q = 150;    // number of minor factors
  double pi = 0.2;  // share of unique variance attributed to minor factors
  double eps = 0.1; // geometric decay rate of minor-factor scale
};

/// Builtin designs 1..4. Designs 2 and 4 add minor factors to 1 and 3. The
/// full scale uses p = 20 (designs 1-2) or p = 50 (designs 3-4) with m = 5;
/// the reduced scale keeps run times small with p = 8 or 20 and m = 2.
inline SettingSpec make_setting(int id, bool paper_scale) {
  if (id < 1 || id > 4) throw InvalidSpec("make_setting: id must be 1..4");
  static const std::vector<std::pair<double, double>> full_ranges = {
      {0.90, 0.95}, {0.85, 0.90}, {0.80, 0.85}, {0.45, 0.50}, {0.40, 0.45}};
  SettingSpec s;
  s.id = id;
  s.minor_factors = (id == 2 || id == 4);
  const bool wide = (id == 3 || id == 4);
  if (paper_scale) {
    s.m = 5;
    s.per_col = wide ? 10 : 4;
    s.ranges = full_ranges;
  } else {
    s.m = 2;
    s.per_col = wide ? 10 : 4;
    s.ranges = {full_ranges[0], full_ranges[1]};
  }
  s.p = s.m * s.per_col;
  return s;
}

/// Minor-factor loadings W (p x q): raw normal entries with column scales
/// decaying geometrically by (1 - eps), rows normalized so diag(W W^T) = pi
/// exactly. Rows are scaled later to each variable's unique variance.
inline Matrix gen_minor_factors(Index p, Index q, double eps, double pi,
                                std::uint64_t seed) {
  if (p < 1 || q < 1) throw InvalidSpec("gen_minor_factors: need p, q >= 1");
  if (!(eps > 0.0 && eps < 1.0)) throw InvalidSpec("gen_minor_factors: eps in (0,1)");
  if (!(pi > 0.0 && pi < 1.0)) throw InvalidSpec("gen_minor_factors: pi in (0,1)");
  Matrix w = rng::std_normal(p, q, seed);
  for (Index k = 0; k < q; ++k)
    w.col(k) *= std::pow(1.0 - eps, static_cast<double>(k));
  for (Index i = 0; i < p; ++i) {
    const double norm = w.row(i).norm();
    if (norm <= 0.0) throw EvalError("gen_minor_factors: zero row");
    w.row(i) *= std::sqrt(pi) / norm;
  }
  return w;
}

/// A drawn truth: major parameters, scaled minor loadings (possibly empty),
/// and the implied population covariance with unit diagonal.
struct TrueParams {
  model::FactorParams params;
  Matrix w;  // p x q, scaled; 0 x 0 when the design has no minor factors
  Matrix sigma_star;
};

/// Draw a truth from a design: each variable loads on exactly one factor
/// with magnitude uniform in the column's range; unique variances complete
/// the diagonal to one, split (1 - pi) / pi against minor factors when
/// present.
inline TrueParams gen_true_params(const SettingSpec& s, std::uint64_t seed) {
  if (s.p != s.m * s.per_col)
    throw InvalidSpec("gen_true_params: p must equal m * per_col");
  if (static_cast<Index>(s.ranges.size()) != s.m)
    throw InvalidSpec("gen_true_params: need one range per factor");
  TrueParams out;
  out.params.lambda = Matrix::Zero(s.p, s.m);
  std::mt19937_64 gen(rng::mix(seed, 0x10AD));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Index j = 0; j < s.m; ++j) {
    const auto [lo, hi] = s.ranges[static_cast<std::size_t>(j)];
    if (!(lo <= hi) || lo < 0.0 || hi >= 1.0)
      throw InvalidSpec("gen_true_params: bad loading range");
    for (Index i = j * s.per_col; i < (j + 1) * s.per_col; ++i)
      out.params.lambda(i, j) = lo + (hi - lo) * unif(gen);
  }
  Vector u(s.p);  // unique variance: one minus the common variance
  for (Index i = 0; i < s.p; ++i)
    u(i) = 1.0 - out.params.lambda.row(i).squaredNorm();
  if (u.minCoeff() <= 0.0) throw InvalidSpec("gen_true_params: communality >= 1");
  if (s.minor_factors) {
    out.w = gen_minor_factors(s.p, s.q, s.eps, s.pi, rng::mix(seed, 0x3140));
    for (Index i = 0; i < s.p; ++i) out.w.row(i) *= std::sqrt(u(i));
    out.params.psi = ((1.0 - s.pi) * u.array()).sqrt().matrix();
  } else {
    out.w = Matrix(0, 0);
    out.params.psi = u.array().sqrt().matrix();
  }
  out.sigma_star = out.params.implied_covariance();
  if (s.minor_factors) out.sigma_star += out.w * out.w.transpose();
  return out;
}

/// Root mean squared loading error after the best orthogonal alignment of
/// the estimate to the target.
inline double se_lambda(const Matrix& lambda_hat, const Matrix& lambda_star) {
  if (lambda_hat.rows() != lambda_star.rows() ||
      lambda_hat.cols() != lambda_star.cols())
    throw DimensionError("se_lambda: shape mismatch");
  Matrix rot = linalg::procrustes(lambda_hat, lambda_star);
  return std::sqrt((lambda_hat * rot - lambda_star).squaredNorm() /
                   static_cast<double>(lambda_hat.size()));
}

/// Root mean squared error over aligned loadings and unique standard
/// deviations jointly.
inline double se_total(const model::FactorParams& fit, const Matrix& lambda_star,
                       const Vector& psi_star) {
  Matrix rot = linalg::procrustes(fit.lambda, lambda_star);
  const double sq = (fit.lambda * rot - lambda_star).squaredNorm() +
                    (fit.psi - psi_star).squaredNorm();
  return std::sqrt(sq / static_cast<double>(fit.lambda.size() + fit.psi.size()));
}

/// Support-recovery F1 after greedy column matching (by absolute cosine)
/// between estimated and target loadings.
inline double f1_support(const Matrix& lambda_hat, const Matrix& lambda_star,
                         double zero_tol = 1e-8) {
  if (lambda_hat.rows() != lambda_star.rows() ||
      lambda_hat.cols() != lambda_star.cols())
    throw DimensionError("f1_support: shape mismatch");
  const Index p = lambda_hat.rows();
  const Index m = lambda_hat.cols();
  std::vector<Index> match(static_cast<std::size_t>(m), -1);
  std::vector<char> used(static_cast<std::size_t>(m), 0);
  for (Index j = 0; j < m; ++j) {
    double best = -1.0;
    Index at = -1;
    for (Index k = 0; k < m; ++k) {
      if (used[static_cast<std::size_t>(k)]) continue;
      const double den = lambda_hat.col(j).norm() * lambda_star.col(k).norm();
      const double cos = den > 0.0 ? std::abs(lambda_hat.col(j).dot(lambda_star.col(k))) / den : 0.0;
      if (cos > best) {
        best = cos;
        at = k;
      }
    }
    match[static_cast<std::size_t>(j)] = at;
    used[static_cast<std::size_t>(at)] = 1;
  }
  Index tp = 0, fp = 0, fn = 0;
  for (Index j = 0; j < m; ++j) {
    const Index k = match[static_cast<std::size_t>(j)];
    for (Index i = 0; i < p; ++i) {
      const bool hat = std::abs(lambda_hat(i, j)) > zero_tol;
      const bool star = std::abs(lambda_star(i, k)) > zero_tol;
      tp += hat && star;
      fp += hat && !star;
      fn += !hat && star;
    }
  }
  if (2 * tp + fp + fn == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

/// One study record; matches the CSV column order exactly.
struct RepRecord {
  int setting = 0;
  Index n = 0;
  Index rep = 0;
  std::string estimator;
  double se_lambda = 0;
  double se_total = 0;
  Index iters = 0;
  double runtime_s = 0;
  bool converged = false;
};

struct StudyOptions {
  std::vector<int> settings = {1};
  std::vector<Index> n_grid = {100, 400, 1600, 6400};
  Index reps = 50;
  std::vector<std::string> estimators = {"mdfa", "pca", "ols"};
  Index sparse_k = 0;  // 0: use the true nonzero count (= p)
  std::uint64_t seed = 1;
  Index workers = 1;
  bool paper_scale = false;
  bool timings = false;  // measured runtimes break byte-reproducibility
  estimator::FitOptions fit{};
};

struct StudyResult {
  std::vector<RepRecord> records;
};

namespace detail {

inline void validate_estimator_names(const std::vector<std::string>& names) {
  for (const auto& e : names)
    if (e != "mdfa" && e != "mdfa_cov" && e != "mdfa_sparse" && e != "pca" && e != "ols")
      throw InvalidSpec("run_study: unknown estimator '" + e + "'");
  if (names.empty()) throw InvalidSpec("run_study: no estimators requested");
}

}  // namespace detail

/// Replicated comparison study. Each (setting, rep) pair redraws a truth and
/// shares it across the n grid; every (setting, n, rep) task gets its own
/// seed stream, and records land in preallocated slots, so output is
/// independent of the worker count. Against minor-factor designs, errors are
/// scored against the pseudo-truth unique variances 1 - diag(Lambda Lambda^T).
inline StudyResult run_study(const StudyOptions& o) {
  detail::validate_estimator_names(o.estimators);
  if (o.reps < 1) throw InvalidSpec("run_study: need reps >= 1");
  if (o.n_grid.empty()) throw InvalidSpec("run_study: empty n grid");
  std::vector<SettingSpec> specs;
  specs.reserve(o.settings.size());
  for (int id : o.settings) specs.push_back(make_setting(id, o.paper_scale));
  for (const auto& sp : specs)
    for (Index n : o.n_grid)
      if (n < sp.p + sp.m + 1) throw InvalidSpec("run_study: n too small for design");

  const Index n_settings = static_cast<Index>(specs.size());
  const Index n_sizes = static_cast<Index>(o.n_grid.size());
  const Index n_est = static_cast<Index>(o.estimators.size());
  const Index tasks = n_settings * n_sizes * o.reps;

  StudyResult result;
  result.records.resize(static_cast<std::size_t>(tasks * n_est));

  par::parallel_for(tasks, o.workers, [&](Index task) {
    const Index si = task / (n_sizes * o.reps);
    const Index ni = (task / o.reps) % n_sizes;
    const Index rep = task % o.reps;
    const SettingSpec& sp = specs[static_cast<std::size_t>(si)];
    const Index n = o.n_grid[static_cast<std::size_t>(ni)];

    const std::uint64_t base = rng::mix(o.seed, static_cast<std::uint64_t>(sp.id));
    TrueParams truth = gen_true_params(sp, rng::mix(base, 0x72, static_cast<std::uint64_t>(rep)));
    Matrix x = rng::mvn_rows(truth.sigma_star, n,
                             rng::mix(base, static_cast<std::uint64_t>(n),
                                      static_cast<std::uint64_t>(rep)));
    Vector psi_target = truth.params.psi;
    if (sp.minor_factors) {
      for (Index i = 0; i < sp.p; ++i)
        psi_target(i) = std::sqrt(1.0 - truth.params.lambda.row(i).squaredNorm());
    }

    for (Index ei = 0; ei < n_est; ++ei) {
      const std::string& name = o.estimators[static_cast<std::size_t>(ei)];
      RepRecord rec;
      rec.setting = sp.id;
      rec.n = n;
      rec.rep = rep;
      rec.estimator = name;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        estimator::FitOptions fo = o.fit;
        estimator::FitResult fit;
        if (name == "mdfa") {
          fit = estimator::fit_mdfa(x, sp.m, fo);
        } else if (name == "mdfa_cov") {
          fit = estimator::fit_mdfa_cov(model::CovarianceEstimate::from_data(x, fo.denom),
                                        sp.m, fo);
        } else if (name == "mdfa_sparse") {
          fo.sparsity_k = o.sparse_k > 0 ? o.sparse_k : sp.p;
          fit = estimator::fit_mdfa(x, sp.m, fo);
        } else if (name == "pca") {
          fit = estimator::fit_pca(x, sp.m, fo);
        } else {
          fit = estimator::fit_ols(model::CovarianceEstimate::from_data(x, fo.denom),
                                   sp.m, fo);
        }
        rec.se_lambda = se_lambda(fit.params.lambda, truth.params.lambda);
        rec.se_total = se_total(fit.params, truth.params.lambda, psi_target);
        rec.iters = fit.iterations;
        rec.converged = fit.converged;
      } catch (const Error&) {
        rec.se_lambda = std::numeric_limits<double>::quiet_NaN();
        rec.se_total = std::numeric_limits<double>::quiet_NaN();
        rec.iters = 0;
        rec.converged = false;
      }
      if (o.timings) {
        const auto t1 = std::chrono::steady_clock::now();
        rec.runtime_s = std::chrono::duration<double>(t1 - t0).count();
      }
      result.records[static_cast<std::size_t>(task * n_est + ei)] = std::move(rec);
    }
  });
  return result;
}

}  // namespace mdfa::simulation
