#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mdfa/mdfa.hpp"

namespace {

using mdfa::Index;
using nlohmann::json;

std::uint64_t resolve_seed(bool flag_set, std::uint64_t flag_value) {
  if (flag_set) return flag_value;
  if (const char* env = std::getenv("MDFA_SEED")) {
    std::string s(env);
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
      throw mdfa::InvalidInput("MDFA_SEED must be an unsigned integer, got '" + s + "'");
    try {
      return std::stoull(s);
    } catch (const std::exception&) {
      throw mdfa::InvalidInput("MDFA_SEED out of range: '" + s + "'");
    }
  }
  return 1;
}

mdfa::Denominator parse_denominator(const std::string& s) {
  if (s == "n") return mdfa::Denominator::N;
  if (s == "n-1") return mdfa::Denominator::NMinus1;
  throw mdfa::InvalidInput("denominator must be 'n' or 'n-1', got '" + s + "'");
}

json score_check_to_json(const mdfa::model::ScoreCheck& c) {
  json j;
  j["mean_f"] = c.mean_f;
  j["mean_e"] = c.mean_e;
  j["orth_f"] = c.orth_f;
  j["orth_e"] = c.orth_e;
  j["cross"] = c.cross;
  j["max_violation"] = c.max_violation;
  j["ok"] = c.ok;
  return j;
}

struct FitArgs {
  std::string input, output;
  Index factors = 1;
  bool ic5 = false;
  Index sparse_k = 0;
  bool cov_only = false;
  std::string denominator = "n-1";
  std::uint64_t seed = 1;
  bool seed_set = false;
};

void run_fit(const FitArgs& a) {
  mdfa::io::CsvMatrix data = mdfa::io::read_matrix_csv(a.input);
  mdfa::estimator::FitOptions fo;
  fo.denom = parse_denominator(a.denominator);
  fo.ic5 = a.ic5;
  fo.sparsity_k = a.sparse_k;
  fo.seed = resolve_seed(a.seed_set, a.seed);

  mdfa::estimator::FitResult fit;
  if (a.cov_only) {
    fit = mdfa::estimator::fit_mdfa_cov(
        mdfa::model::CovarianceEstimate::from_data(data.values, fo.denom), a.factors, fo);
  } else {
    fit = mdfa::estimator::fit_mdfa(data.values, a.factors, fo);
  }

  json out;
  out["estimator"] = a.cov_only ? "mdfa_cov" : "mdfa";
  out["n"] = data.values.rows();
  out["p"] = data.values.cols();
  out["m"] = a.factors;
  out["denominator"] = a.denominator;
  out["ic5"] = a.ic5;
  out["sparse_k"] = a.sparse_k;
  out["converged"] = fit.converged;
  out["iterations"] = fit.iterations;
  out["loss"] = fit.loss_trace.back();
  out["loss_trace"] = fit.loss_trace;
  out["lambda"] = mdfa::io::matrix_to_json(fit.params.lambda);
  out["psi"] = mdfa::io::vector_to_json(fit.params.psi);
  out["clamped"] = fit.clamped;
  out["perturbed"] = fit.perturbed;
  if (!data.header.empty()) out["columns"] = data.header;
  if (fit.scores) out["score_check"] = score_check_to_json(mdfa::model::check_scores(*fit.scores));
  if (a.ic5) {
    mdfa::model::ThetaVector th = mdfa::model::phi_to_theta(fit.params);
    out["theta"] = mdfa::io::vector_to_json(th.v);
  }
  mdfa::io::write_text(a.output, out.dump(2) + "\n");
  std::cout << "fit: wrote " << a.output << " (converged=" << (fit.converged ? "yes" : "no")
            << ", iterations=" << fit.iterations << ")\n";
}

struct SimArgs {
  std::string output;
  std::vector<int> settings = {1};
  std::vector<Index> n_grid = {100, 400, 1600, 6400};
  Index reps = 50;
  std::vector<std::string> estimators = {"mdfa", "pca", "ols"};
  Index sparse_k = 0;
  std::uint64_t seed = 1;
  bool seed_set = false;
  Index workers = 1;
  bool paper_scale = false;
  bool timings = false;
  std::string denominator = "n-1";
  std::string svg;
};

void run_simulate(const SimArgs& a) {
  mdfa::simulation::StudyOptions o;
  o.settings = a.settings;
  o.n_grid = a.n_grid;
  o.reps = a.reps;
  o.estimators = a.estimators;
  o.sparse_k = a.sparse_k;
  o.seed = resolve_seed(a.seed_set, a.seed);
  o.workers = a.workers;
  o.paper_scale = a.paper_scale;
  o.timings = a.timings;
  o.fit.denom = parse_denominator(a.denominator);
  mdfa::simulation::StudyResult res = mdfa::simulation::run_study(o);

  const bool jsonl = a.output.size() >= 6 &&
                     a.output.compare(a.output.size() - 6, 6, ".jsonl") == 0;
  mdfa::io::write_text(a.output, jsonl ? mdfa::report::records_to_jsonl(res.records)
                                       : mdfa::report::records_to_csv(res.records));
  if (!a.svg.empty())
    mdfa::io::write_text(a.svg, mdfa::report::render_svg(res.records));
  std::cout << "simulate: wrote " << res.records.size() << " records to " << a.output << "\n";
}

struct AsymArgs {
  std::string input, output;
  Index reps = 0;
  std::vector<Index> n_grid = {20000};
  std::uint64_t seed = 1;
  bool seed_set = false;
  Index workers = 1;
  std::string denominator = "n-1";
};

void run_asymptotics(const AsymArgs& a) {
  mdfa::model::FactorParams truth = mdfa::io::read_params_json(a.input);
  if (truth.m() < 1 || truth.m() >= truth.p())
    throw mdfa::InvalidInput("asymptotics: need 1 <= m < p");
  if (!truth.lambda.allFinite() || !truth.psi.allFinite())
    throw mdfa::InvalidInput("asymptotics: non-finite truth");
  if (truth.psi.minCoeff() <= 0.0)
    throw mdfa::InvalidInput("asymptotics: psi must be positive");

  mdfa::Matrix sigma_star = truth.implied_covariance();
  json out;
  out["p"] = truth.p();
  out["m"] = truth.m();

  if (a.reps > 0) {
    mdfa::asymptotics::NormalityOptions no;
    no.n = a.n_grid.front();
    no.reps = a.reps;
    no.seed = resolve_seed(a.seed_set, a.seed);
    no.workers = a.workers;
    no.fit.denom = parse_denominator(a.denominator);
    mdfa::asymptotics::NormalityReport rep = mdfa::asymptotics::normality_study(truth, no);
    out["theta_star"] = mdfa::io::vector_to_json(rep.theta_star.v);
    out["v"] = mdfa::io::matrix_to_json(rep.variance.v);
    out["hessian"] = mdfa::io::matrix_to_json(rep.variance.h);
    out["cond_h"] = rep.variance.cond_h;
    out["hessian_asymmetry"] = rep.variance.hess_asymmetry;
    out["mc"] = {{"n", rep.n},
                 {"reps", rep.reps},
                 {"failures", rep.failures},
                 {"mean", mdfa::io::vector_to_json(rep.mc_mean)},
                 {"covariance", mdfa::io::matrix_to_json(rep.mc_covariance)},
                 {"skew", mdfa::io::vector_to_json(rep.mc_skew)},
                 {"kurtosis", mdfa::io::vector_to_json(rep.mc_kurtosis)}};
    json ratio = json::array();
    for (Index i = 0; i < rep.theta_star.v.size(); ++i)
      ratio.push_back(rep.mc_covariance(i, i) / rep.variance.v(i, i));
    out["mc"]["variance_ratio"] = ratio;
  } else {
    mdfa::asymptotics::VarianceReport rep = mdfa::asymptotics::asymptotic_variance(
        truth, sigma_star, mdfa::asymptotics::gamma_normal(sigma_star));
    out["theta_star"] = mdfa::io::vector_to_json(rep.theta_star.v);
    out["v"] = mdfa::io::matrix_to_json(rep.v);
    out["hessian"] = mdfa::io::matrix_to_json(rep.h);
    out["cond_h"] = rep.cond_h;
    out["hessian_asymmetry"] = rep.hess_asymmetry;
  }
  mdfa::io::write_text(a.output, out.dump(2) + "\n");
  std::cout << "asymptotics: wrote " << a.output << "\n";
}

struct ReportArgs {
  std::string input, output;
};

void run_report(const ReportArgs& a) {
  std::vector<mdfa::simulation::RepRecord> records = mdfa::report::records_from_csv(a.input);
  mdfa::io::write_text(a.output, mdfa::report::render_svg(records));
  std::cout << "report: wrote " << a.output << " (" << records.size() << " records)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"matrix decomposition factor analysis toolkit"};
  app.require_subcommand(1);

  FitArgs fit_args;
  CLI::App* fit = app.add_subcommand("fit", "fit a factor model to a data CSV");
  fit->add_option("--input", fit_args.input, "data CSV (rows = observations)")->required();
  fit->add_option("--output", fit_args.output, "output JSON path")->required();
  fit->add_option("--factors", fit_args.factors, "number of factors m")->required();
  fit->add_flag("--ic5", fit_args.ic5, "identify loadings (zero upper triangle, nonnegative diagonal)");
  fit->add_option("--sparse-k", fit_args.sparse_k, "keep at most K loadings (0 = off)");
  fit->add_flag("--cov-only", fit_args.cov_only, "fit from the covariance matrix only (no scores)");
  fit->add_option("--denominator", fit_args.denominator, "covariance denominator: n or n-1");
  CLI::Option* fit_seed = fit->add_option("--seed", fit_args.seed, "seed (default: MDFA_SEED or 1)");

  SimArgs sim_args;
  CLI::App* sim = app.add_subcommand("simulate", "run a replicated comparison study");
  sim->add_option("--output", sim_args.output, "results path (.csv or .jsonl)")->required();
  sim->add_option("--setting", sim_args.settings, "designs to run (1..4)")->delimiter(',');
  sim->add_option("--n-grid", sim_args.n_grid, "sample sizes")->delimiter(',');
  sim->add_option("--reps", sim_args.reps, "replications per cell");
  sim->add_option("--estimators", sim_args.estimators,
                  "comma list from: mdfa, mdfa_cov, mdfa_sparse, pca, ols")
      ->delimiter(',');
  sim->add_option("--sparse-k", sim_args.sparse_k, "cardinality for mdfa_sparse (0 = true count)");
  CLI::Option* sim_seed = sim->add_option("--seed", sim_args.seed, "seed (default: MDFA_SEED or 1)");
  sim->add_option("--workers", sim_args.workers, "worker threads");
  sim->add_flag("--paper-scale", sim_args.paper_scale, "full-size designs (slow)");
  sim->add_flag("--timings", sim_args.timings,
                "record measured runtimes (breaks byte-reproducibility)");
  sim->add_option("--denominator", sim_args.denominator, "covariance denominator: n or n-1");
  sim->add_option("--svg", sim_args.svg, "also render an SVG summary plot to this path");

  AsymArgs asym_args;
  CLI::App* asym = app.add_subcommand("asymptotics", "asymptotic variance of a truth");
  asym->add_option("--input", asym_args.input, "truth JSON with 'lambda' and 'psi'")->required();
  asym->add_option("--output", asym_args.output, "report JSON path")->required();
  asym->add_option("--reps", asym_args.reps, "Monte Carlo replications (0 = theory only)");
  asym->add_option("--n-grid", asym_args.n_grid, "Monte Carlo sample size (first entry used)")
      ->delimiter(',');
  CLI::Option* asym_seed = asym->add_option("--seed", asym_args.seed, "seed (default: MDFA_SEED or 1)");
  asym->add_option("--workers", asym_args.workers, "worker threads");
  asym->add_option("--denominator", asym_args.denominator, "covariance denominator: n or n-1");

  ReportArgs report_args;
  CLI::App* rep = app.add_subcommand("report", "render an SVG plot from a results CSV");
  rep->add_option("--input", report_args.input, "results CSV")->required();
  rep->add_option("--output", report_args.output, "SVG path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    fit_args.seed_set = fit_seed->count() > 0;
    sim_args.seed_set = sim_seed->count() > 0;
    asym_args.seed_set = asym_seed->count() > 0;
    if (app.got_subcommand(fit)) run_fit(fit_args);
    if (app.got_subcommand(sim)) run_simulate(sim_args);
    if (app.got_subcommand(asym)) run_asymptotics(asym_args);
    if (app.got_subcommand(rep)) run_report(report_args);
    return 0;
  } catch (const mdfa::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mdfa::InvalidSpec& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mdfa::InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mdfa::DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mdfa::TooFewRows& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mdfa::NotPsd& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mdfa::NotIdentifiable& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mdfa::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
