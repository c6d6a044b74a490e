// Acceptance gate: one self-checking scenario per release criterion.
// Run with no arguments for the full gate, or pass criterion numbers.
// Exit status is the number of failed criteria.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "mdfa/mdfa.hpp"

using namespace mdfa;

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

model::FactorParams draw_box_params(Index p, Index m, double lam_hi, double sig_lo,
                                    double sig_hi, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> ul(-lam_hi, lam_hi);
  std::uniform_real_distribution<double> us(sig_lo, sig_hi);
  model::FactorParams fp;
  fp.lambda.resize(p, m);
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < m; ++j) fp.lambda(i, j) = ul(gen);
  fp.psi.resize(p);
  for (Index j = 0; j < p; ++j) fp.psi(j) = us(gen);
  return fp;
}

double sym_opnorm(const Matrix& a) {
  linalg::SpectralDecomp ed = linalg::spectral(a);
  return std::max(std::abs(ed.values(0)), std::abs(ed.values(ed.values.size() - 1)));
}

double sym_nuclear_norm(const Matrix& a) {
  return linalg::spectral(a).values.cwiseAbs().sum();
}

// C1: the closed form of the profile loss matches the two-block loss at the
// optimal scores on random instances, under both denominators.
bool c1(std::string& msg) {
  double worst = 0.0;
  for (std::uint64_t rep = 0; rep < 500; ++rep) {
    const Index p = 3 + static_cast<Index>(rep % 4);
    const Index m = 1 + static_cast<Index>(rep % 2);
    const Index n = 20 + static_cast<Index>((rep * 7) % 41);
    const Denominator denom = (rep % 2 == 0) ? Denominator::NMinus1 : Denominator::N;
    model::FactorParams fp = testutil::random_params(p, m, rng::mix(0xAC1, rep));
    Matrix x = rng::std_normal(n, p, rng::mix(0xAC1, rep, 2));
    model::ScoreMatrix z = estimator::optimal_scores(x, fp, denom);
    model::CovarianceEstimate ce = model::CovarianceEstimate::from_data(x, denom);
    const double data = model::data_loss(x, fp, z);
    const double conc = estimator::concentrated_loss(fp, ce.s).value;
    worst = std::max(worst, std::abs(data - conc));
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf), "max |joint - profile| = %.3g over 500 instances", worst);
  msg = buf;
  return worst < 1e-8;
}

// C2: the population loss separates the truth from everything far from it.
bool c2(std::string& msg) {
  double worst_at_truth = 0.0, smallest_far = 1e300;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const Index p = 3 + static_cast<Index>(i % 4);
    const Index m = 1 + static_cast<Index>(i % 2);
    model::FactorParams star = testutil::random_params(p, m, rng::mix(0xAC2, i));
    const double v = population::population_loss(star.phi(), star.implied_covariance()).value;
    worst_at_truth = std::max(worst_at_truth, v);
  }
  for (std::uint64_t i = 0; i < 500; ++i) {
    const Index p = 3 + static_cast<Index>(i % 4);
    const Index m = 1 + static_cast<Index>(i % 2);
    model::FactorParams star = testutil::random_params(p, m, rng::mix(0xAC2, i, 1));
    Matrix sigma = star.implied_covariance();
    std::uint64_t t = 0;
    model::FactorParams other;
    do {
      other = testutil::random_params(p, m, rng::mix(0xAC2, i, 2 + t++));
    } while ((other.implied_covariance() - sigma).norm() <= 0.1);
    smallest_far =
        std::min(smallest_far, population::population_loss(other.phi(), sigma).value);
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "max at truth = %.3g (100), min far = %.3g (500)",
                worst_at_truth, smallest_far);
  msg = buf;
  return worst_at_truth < 1e-10 && smallest_far > 1e-4;
}

// C3: deterministic perturbation bounds on 1000 draws each: the square-root
// Hoelder bound, the eigenprojector perturbation bound with its explicit
// constant, and the parameter-box norm bounds.
bool c3(std::string& msg) {
  const Index p = 6, m = 1;
  const double c_lam = 1.0, c_lo = 0.35, c_hi = 1.5;
  const double b2 = c_lam * c_lam + c_hi * c_hi;
  std::uint64_t bad = 0;
  for (std::uint64_t rep = 0; rep < 1000; ++rep) {
    const std::uint64_t base = rng::mix(0xAC3, rep);
    model::FactorParams fp = draw_box_params(p, m, 0.9 * c_lam, 0.4, 1.4, rng::mix(base, 1));
    model::FactorParams star = draw_box_params(p, m, 0.9 * c_lam, 0.4, 1.4, rng::mix(base, 2));
    Matrix phi = fp.phi();
    Matrix sigma_star = star.implied_covariance();
    const Index n = (rep % 2 == 0) ? 60 : 500;
    Matrix x = rng::mvn_rows(sigma_star, n, rng::mix(base, 3));
    Matrix shat = model::CovarianceEstimate::from_data(x, Denominator::NMinus1).s;

    bool ok = true;
    linalg::SpectralDecomp gram = linalg::spectral(phi * phi.transpose());
    ok &= gram.values(p - 1) >= c_lo * c_lo - 1e-12;
    ok &= phi.squaredNorm() <= static_cast<double>(p) * b2 + 1e-12;
    ok &= linalg::pinv(phi).squaredNorm() <= static_cast<double>(p) / (c_lo * c_lo) + 1e-12;
    linalg::SpectralDecomp pop = linalg::spectral(phi.transpose() * sigma_star * phi);
    ok &= pop.values(p - 1) >= std::pow(c_lo, 4) * (1.0 - 1e-12);
    Matrix ahat = population::projector(phi, shat);
    ok &= ahat.norm() <= static_cast<double>(p) * std::sqrt(b2) / c_lo + 1e-12;

    linalg::SpectralDecomp emp = linalg::spectral(phi.transpose() * shat * phi);
    Matrix lhat = emp.vectors.leftCols(p);
    Matrix lpop = pop.vectors.leftCols(p);
    const double dev2 = sym_opnorm(shat - sigma_star);
    const double gap = (lhat * lhat.transpose() - lpop * lpop.transpose()).norm();
    ok &= gap <= 2.0 * std::sqrt(2.0) * static_cast<double>(p) * b2 / std::pow(c_lo, 4) * dev2 +
                     1e-12;

    const Index d = m + p;
    const double dim_factor = std::pow(static_cast<double>(d), 0.25);
    Matrix a = phi.transpose() * shat * phi;
    Matrix b = phi.transpose() * sigma_star * phi;
    const double lhs = (linalg::psd_sqrt(a) - linalg::psd_sqrt(b)).norm();
    ok &= lhs * lhs <= sym_nuclear_norm(a - b) * (1.0 + 1e-10);
    ok &= lhs <= dim_factor * std::sqrt((a - b).norm()) * (1.0 + 1e-10);

    Matrix sa = testutil::random_spd(5, rng::mix(base, 4));
    Matrix sb = testutil::random_spd(5, rng::mix(base, 5));
    if (rep % 3 == 0) sa *= 9.0;
    const double l2 = (linalg::psd_sqrt(sa) - linalg::psd_sqrt(sb)).norm();
    ok &= l2 * l2 <= sym_nuclear_norm(sa - sb) * (1.0 + 1e-10);
    ok &= l2 <= std::pow(5.0, 0.25) * std::sqrt((sa - sb).norm()) * (1.0 + 1e-10);

    if (!ok) ++bad;
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%llu of 1000 draws violated a bound",
                static_cast<unsigned long long>(bad));
  msg = buf;
  return bad == 0;
}

// C4: every alternation variant has a nonincreasing loss trace.
bool c4(std::string& msg) {
  std::uint64_t bad = 0;
  auto monotone = [](const std::vector<double>& t) {
    for (std::size_t i = 1; i < t.size(); ++i)
      if (t[i] > t[i - 1] + 1e-12) return false;
    return true;
  };
  for (std::uint64_t rep = 0; rep < 400; ++rep) {
    const Index p = 3 + static_cast<Index>(rep % 4);
    const Index m = 1 + static_cast<Index>(rep % 2);
    const Index n = 30 + static_cast<Index>(rep % 5) * 10;
    model::FactorParams truth = testutil::random_params(p, m, rng::mix(0xAC4, rep));
    Matrix x = rng::mvn_rows(truth.implied_covariance(), n, rng::mix(0xAC4, rep, 2));
    estimator::FitOptions fo;
    fo.max_iter = 200;
    fo.tol = 1e-10;
    fo.denom = (rep % 2 == 0) ? Denominator::NMinus1 : Denominator::N;
    model::CovarianceEstimate ce = model::CovarianceEstimate::from_data(x, fo.denom);

    bool ok = monotone(estimator::fit_mdfa(x, m, fo).loss_trace);
    ok &= monotone(estimator::fit_mdfa_cov(ce, m, fo).loss_trace);
    estimator::FitOptions fs = fo;
    fs.sparsity_k = p;  // binds whenever m > 1
    ok &= monotone(estimator::fit_mdfa(x, m, fs).loss_trace);
    ok &= monotone(estimator::fit_ols(ce, m, fo).loss_trace);
    if (!ok) ++bad;
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%llu of 400 instances had an increasing trace",
                static_cast<unsigned long long>(bad));
  msg = buf;
  return bad == 0;
}

// C5: the data-matrix and covariance-matrix paths land on the same parameters.
bool c5(std::string& msg) {
  double worst = 0.0;
  for (std::uint64_t rep = 0; rep < 100; ++rep) {
    const Index p = 3 + static_cast<Index>(rep % 4);
    const Index m = 1 + static_cast<Index>(rep % 2);
    const Index n = 40 + static_cast<Index>(rep % 7) * 10;
    model::FactorParams truth = testutil::random_params(p, m, rng::mix(0xAC5, rep));
    Matrix x = rng::mvn_rows(truth.implied_covariance(), n, rng::mix(0xAC5, rep, 2));
    estimator::FitOptions fo;
    fo.denom = (rep % 2 == 0) ? Denominator::NMinus1 : Denominator::N;
    estimator::FitResult a = estimator::fit_mdfa(x, m, fo);
    estimator::FitResult b =
        estimator::fit_mdfa_cov(model::CovarianceEstimate::from_data(x, fo.denom), m, fo);
    worst = std::max(worst, (a.params.phi() - b.params.phi()).norm());
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "max parameter gap = %.3g over 100 instances", worst);
  msg = buf;
  return worst < 1e-6;
}

// C6: loading error shrinks with n for the profile-loss estimator while plain
// principal components stalls at its bias floor.
bool c6(std::string& msg) {
  simulation::StudyOptions o;
  o.settings = {1};
  o.n_grid = {100, 400, 1600, 6400};
  o.reps = 50;
  o.estimators = {"mdfa", "pca"};
  o.seed = 2026;
  simulation::StudyResult r = simulation::run_study(o);

  auto med = [&](const std::string& est, Index n) {
    std::vector<double> v;
    for (const auto& rec : r.records)
      if (rec.estimator == est && rec.n == n) v.push_back(rec.se_lambda);
    return median(v);
  };
  std::vector<double> mdfa_med, pca_med;
  for (Index n : o.n_grid) {
    mdfa_med.push_back(med("mdfa", n));
    pca_med.push_back(med("pca", n));
  }
  bool decreasing = true;
  for (std::size_t i = 1; i < mdfa_med.size(); ++i)
    decreasing &= mdfa_med[i] < mdfa_med[i - 1];
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "median loading error %.4f -> %.4f -> %.4f -> %.4f; pca at 6400 = %.4f",
                mdfa_med[0], mdfa_med[1], mdfa_med[2], mdfa_med[3], pca_med[3]);
  msg = buf;
  return decreasing && mdfa_med[3] < 0.05 && pca_med[3] > mdfa_med[3];
}

// C7: Monte Carlo spread of the identified estimate matches the sandwich
// variance coordinatewise, with Gaussian-range kurtosis.
bool c7(std::string& msg) {
  model::FactorParams truth;
  truth.lambda.resize(5, 1);
  truth.lambda << 0.8, 0.7, 0.6, 0.5, 0.4;
  truth.psi.resize(5);
  for (Index i = 0; i < 5; ++i)
    truth.psi(i) = std::sqrt(1.0 - truth.lambda(i, 0) * truth.lambda(i, 0));

  asymptotics::NormalityOptions no;
  no.n = 20000;
  no.reps = 2000;
  no.seed = 42;
  no.workers = 8;
  asymptotics::NormalityReport rep = asymptotics::normality_study(truth, no);

  double worst_ratio_lo = 1e300, worst_ratio_hi = 0.0;
  double kurt_lo = 1e300, kurt_hi = 0.0;
  const Index k = rep.theta_star.v.size();
  for (Index i = 0; i < k; ++i) {
    const double ratio = rep.mc_covariance(i, i) / rep.variance.v(i, i);
    worst_ratio_lo = std::min(worst_ratio_lo, ratio);
    worst_ratio_hi = std::max(worst_ratio_hi, ratio);
    kurt_lo = std::min(kurt_lo, rep.mc_kurtosis(i));
    kurt_hi = std::max(kurt_hi, rep.mc_kurtosis(i));
  }
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "variance ratios in [%.3f, %.3f], kurtosis in [%.2f, %.2f], %lld failures",
                worst_ratio_lo, worst_ratio_hi, kurt_lo, kurt_hi,
                static_cast<long long>(rep.failures));
  msg = buf;
  return rep.failures == 0 && worst_ratio_lo >= 0.85 && worst_ratio_hi <= 1.15 &&
         kurt_lo > 2.5 && kurt_hi < 3.5;
}

// C8: the uniform gap between sample and population loss over a fixed
// parameter grid shrinks as n grows.
bool c8(std::string& msg) {
  const Index p = 5, m = 2;
  model::FactorParams truth = testutil::random_params(p, m, 0xAC8);
  Matrix sigma_star = truth.implied_covariance();

  std::vector<model::FactorParams> grid;
  std::vector<double> pop_value;
  for (std::uint64_t g = 0; g < 200; ++g) {
    grid.push_back(testutil::random_params(p, m, rng::mix(0xAC8, g, 1)));
    pop_value.push_back(population::population_loss(grid.back().phi(), sigma_star).value);
  }

  const std::vector<Index> ns = {200, 800, 3200, 12800};
  std::vector<double> med;
  for (Index n : ns) {
    std::vector<double> sup(50);
    for (std::uint64_t repn = 0; repn < 50; ++repn) {
      Matrix x = rng::mvn_rows(sigma_star, n,
                               rng::mix(0xAC8, static_cast<std::uint64_t>(n), repn));
      model::CovarianceEstimate ce = model::CovarianceEstimate::from_data(x, Denominator::NMinus1);
      double worst = 0.0;
      for (std::size_t g = 0; g < grid.size(); ++g)
        worst = std::max(worst, std::abs(estimator::concentrated_loss(grid[g], ce.s).value -
                                         pop_value[g]));
      sup[repn] = worst;
    }
    med.push_back(median(sup));
  }
  bool decreasing = true;
  for (std::size_t i = 1; i < med.size(); ++i) decreasing &= med[i] < med[i - 1];
  char buf[160];
  std::snprintf(buf, sizeof(buf), "median uniform gap %.4f -> %.4f -> %.4f -> %.4f",
                med[0], med[1], med[2], med[3]);
  msg = buf;
  return decreasing;
}

// C9: studies and Monte Carlo reports are byte-stable across reruns and
// worker counts.
bool c9(std::string& msg) {
  simulation::StudyOptions o;
  o.settings = {1};
  o.n_grid = {60, 120};
  o.reps = 3;
  o.estimators = {"mdfa", "mdfa_cov", "mdfa_sparse", "pca", "ols"};
  o.seed = 7;
  const std::string base = report::records_to_csv(simulation::run_study(o).records);
  bool same = true;
  for (Index w : {Index(1), Index(3), Index(4)}) {
    o.workers = w;
    same &= report::records_to_csv(simulation::run_study(o).records) == base;
  }

  model::FactorParams truth;
  truth.lambda.resize(3, 1);
  truth.lambda << 0.8, 0.7, 0.6;
  truth.psi.resize(3);
  for (Index i = 0; i < 3; ++i)
    truth.psi(i) = std::sqrt(1.0 - truth.lambda(i, 0) * truth.lambda(i, 0));
  asymptotics::NormalityOptions no;
  no.n = 400;
  no.reps = 12;
  no.seed = 3;
  no.workers = 1;
  asymptotics::NormalityReport a = asymptotics::normality_study(truth, no);
  no.workers = 4;
  asymptotics::NormalityReport b = asymptotics::normality_study(truth, no);
  same &= (a.mc_covariance - b.mc_covariance).cwiseAbs().maxCoeff() == 0.0;
  same &= (a.mc_mean - b.mc_mean).cwiseAbs().maxCoeff() == 0.0;

  char buf[120];
  std::snprintf(buf, sizeof(buf), "study csv (%zu bytes) and mc moments identical across workers",
                base.size());
  msg = buf;
  return same;
}

// C10: with the cap set to the true support size, the sparse variant recovers
// a perfect simple structure and never exceeds its budget.
bool c10(std::string& msg) {
  simulation::SettingSpec spec = simulation::make_setting(1, false);
  const Index k = spec.p;  // one loading per variable
  std::vector<double> f1(50);
  Index worst_support = 0;
  for (std::uint64_t rep = 0; rep < 50; ++rep) {
    simulation::TrueParams truth = simulation::gen_true_params(spec, rng::mix(0xACA, rep));
    Matrix x = rng::mvn_rows(truth.sigma_star, 4000, rng::mix(0xACA, rep, 2));
    estimator::FitOptions fo;
    fo.sparsity_k = k;
    estimator::FitResult fit = estimator::fit_mdfa(x, spec.m, fo);
    Index nonzero = 0;
    for (Index i = 0; i < spec.p; ++i)
      for (Index j = 0; j < spec.m; ++j)
        if (fit.params.lambda(i, j) != 0.0) ++nonzero;
    worst_support = std::max(worst_support, nonzero);
    f1[rep] = simulation::f1_support(fit.params.lambda, truth.params.lambda);
  }
  const double med = median(f1);
  char buf[120];
  std::snprintf(buf, sizeof(buf), "median support F1 = %.3f, max support size = %lld (cap %lld)",
                med, static_cast<long long>(worst_support), static_cast<long long>(k));
  msg = buf;
  return med >= 0.9 && worst_support <= k;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> which;
  for (int i = 1; i < argc; ++i) which.push_back(std::atoi(argv[i]));
  if (which.empty())
    for (int c = 1; c <= 10; ++c) which.push_back(c);

  using Criterion = bool (*)(std::string&);
  const Criterion table[10] = {c1, c2, c3, c4, c5, c6, c7, c8, c9, c10};

  int failures = 0;
  for (int c : which) {
    if (c < 1 || c > 10) {
      std::printf("[FAIL] C%d  no such criterion\n", c);
      ++failures;
      continue;
    }
    std::string detail;
    bool ok = false;
    try {
      ok = table[c - 1](detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] C%d  %s\n", ok ? "PASS" : "FAIL", c, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  return failures;
}
