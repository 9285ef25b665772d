#pragma once

// Command-line front end: fit, test, simulate, estimate-omega, predict.
// Exit codes: 0 success, 1 usage / bad input, 2 numerical failure.

#include "mepois/io.hpp"
#include "mepois/simulation.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace mepois {

namespace cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitNumerical = 2;

struct SolverFlags {
  std::string config;
  std::optional<double> rho, tol, r1, r2, shape;
  std::optional<int> t_max;
  std::string lambda_grid;
  std::string penalty;
  std::string sigma;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON config file (flags override it)")->check(CLI::ExistingFile);
    app->add_option("--rho", rho, "augmented-Lagrangian weight");
    app->add_option("--tmax", t_max, "maximum ADMM iterations");
    app->add_option("--tol", tol, "stopping tolerance");
    app->add_option("--r1", r1, "L1-ball radius");
    app->add_option("--r2", r2, "L2-ball radius");
    app->add_option("--lambda-grid", lambda_grid, "comma-separated lambda values");
    app->add_option("--penalty", penalty, "scad or mcp")->check(CLI::IsMember({"scad", "mcp"}));
    app->add_option("--shape", shape, "SCAD a / MCP gamma");
    app->add_option("--sigma", sigma, "score covariance estimator")
        ->check(CLI::IsMember({"residual", "closed-form"}));
  }

  InferenceOptions resolve() const {
    InferenceOptions opt;
    if (!config.empty()) apply_config(read_json_file(config), opt);
    json over = json::object();
    if (rho) over["rho"] = *rho;
    if (t_max) over["t_max"] = *t_max;
    if (tol) over["tol"] = *tol;
    if (r1) over["r1"] = *r1;
    if (r2) over["r2"] = *r2;
    if (!penalty.empty()) over["penalty"] = penalty;
    if (shape) over["shape"] = *shape;
    if (!sigma.empty()) over["sigma"] = sigma;
    apply_config(over, opt);
    if (!lambda_grid.empty()) opt.grid = parse_lambda_grid(lambda_grid);
    return opt;
  }
};

inline Dataset load(const std::string& data, const std::string& omega, bool standardize) {
  auto [w, y] = read_data_csv(data);
  if (standardize) standardize_columns(w);
  MatrixXd om = parse_omega(omega, w.cols());
  return Dataset(std::move(w), std::move(y), std::move(om));
}

inline VectorXd read_coefficients(const std::string& path) {
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
    const json j = read_json_file(path);
    if (!j.contains("beta")) throw InvalidArgument("'" + path + "' has no 'beta' field");
    return vector_from_json(j["beta"], "beta");
  }
  const MatrixXd m = read_matrix_csv(path);
  if (m.cols() != 1) throw InvalidArgument("coefficient CSV must have a single column");
  return m.col(0);
}

inline void print_json_line(const json& j) { std::cout << j.dump() << '\n'; }

// ---- fit

struct FitArgs {
  std::string data, omega = "zero", init;
  bool standardize = false;
  SolverFlags solver;
};

inline int run_fit(const FitArgs& a) {
  const Dataset d = load(a.data, a.omega, a.standardize);
  const InferenceOptions opt = a.solver.resolve();
  std::optional<VectorXd> init;
  if (!a.init.empty()) init = read_coefficients(a.init);
  const FitResult fit = select_lambda(d, opt.family, opt.shape, opt.grid, HypothesisSpec::none(), false, opt.solver, init);
  std::cout << to_json(fit).dump(2) << '\n';
  return kExitOk;
}

// ---- test

struct TestArgs {
  std::string data, omega = "zero", hyp, kind = "both";
  bool naive = false, standardize = false;
  SolverFlags solver;
};

inline int run_test_cmd(const TestArgs& a) {
  const Dataset d = load(a.data, a.omega, a.standardize);
  const HypothesisSpec h = hypothesis_from_json(read_json_file(a.hyp));
  InferenceOptions opt = a.solver.resolve();
  opt.naive = a.naive;
  if (a.naive && a.solver.sigma.empty()) opt.sigma = SigmaEstimator::ClosedForm;
  if (a.kind == "wald" || a.kind == "both") print_json_line(to_json(wald_test(d, h, opt)));
  if (a.kind == "score" || a.kind == "both") print_json_line(to_json(score_test(d, h, opt)));
  return kExitOk;
}

// ---- simulate

struct SimulateArgs {
  std::vector<std::string> designs{"h02"};
  std::optional<Index> n, p;
  int reps = 500;
  std::uint64_t seed = 1;
  std::vector<double> h;
  std::string x_dist = "normal", cov = "identity", profile = "desk", json_out;
  std::optional<double> omega_ratio;
  bool naive_comparison = false, quiet = false;
  unsigned threads = 0;
  SolverFlags solver;
};

inline int run_simulate(const SimulateArgs& a) {
  ExperimentOptions eo;
  eo.inference = a.solver.resolve();
  eo.threads = a.threads > 0 ? a.threads : default_thread_count();
  if (!a.quiet) {
    eo.progress = [](std::size_t done, std::size_t total) {
      if (done == total || done % 50 == 0) std::cerr << "  " << done << "/" << total << " replications\r" << std::flush;
    };
  }
  const Index default_p = a.profile == "slow" ? 350 : 50;
  const Index default_n = 300;

  std::vector<HypothesisId> ids;
  for (const auto& name : a.designs) {
    if (name == "all") ids.insert(ids.end(), kAllHypotheses.begin(), kAllHypotheses.end());
    else ids.push_back(parse_hypothesis_id(name));
  }

  json rows = json::array();
  std::cout << tsv_header() << (a.naive_comparison ? "\tlabel" : "") << '\n';
  for (HypothesisId id : ids) {
    const std::vector<double> hs = a.h.empty() ? default_h_grid(id) : a.h;
    for (double h : hs) {
      SimDesign d = a.naive_comparison ? naive_comparison_design(id, h) : SimDesign{};
      d.hypothesis = id;
      d.h = h;
      d.n = a.n.value_or(default_n);
      d.p = a.p.value_or(default_p);
      d.reps = a.reps;
      d.seed = a.seed;
      d.x_dist = a.x_dist == "uniform" ? CovariateDist::Uniform : CovariateDist::Normal;
      d.sigma_kind = a.cov == "ar1" ? CovarianceKind::AR1 : CovarianceKind::ScaledIdentity;
      if (a.omega_ratio) d.omega_ratio = *a.omega_ratio;
      std::vector<SizePowerRow> out;
      if (a.naive_comparison) {
        auto [c, nv] = naive_comparison(d, eo);
        out = {std::move(c), std::move(nv)};
      } else {
        out.push_back(run_experiment(d, eo));
      }
      if (!a.quiet) std::cerr << '\n';
      for (const auto& row : out) {
        std::cout << tsv_row(row) << (a.naive_comparison ? "\t" + row.label : "") << '\n' << std::flush;
        rows.push_back(to_json(row));
      }
    }
  }
  if (!a.json_out.empty()) {
    auto f = detail::open_out(a.json_out);
    f << rows.dump(2) << '\n';
  }
  return kExitOk;
}

// ---- estimate-omega

struct OmegaArgs {
  std::string panel, out;
  Index leading_zeros = 0;
};

inline int run_estimate_omega(const OmegaArgs& a) {
  const MatrixXd omega = estimate_omega(read_panel_csv(a.panel), a.leading_zeros);
  if (a.out.empty()) write_matrix_csv(std::cout, omega);
  else write_matrix_csv(a.out, omega);
  return kExitOk;
}

// ---- predict

struct PredictArgs {
  std::string coef, data, omega = "zero";
  bool no_half = false, report_error = false;
};

inline int run_predict(const PredictArgs& a) {
  const VectorXd beta = read_coefficients(a.coef);
  const CsvTable t = read_csv(a.data, true);
  const auto ycol = std::find(t.header.begin(), t.header.end(), "y");
  MatrixXd w;
  VectorXd y;
  if (ycol != t.header.end()) {
    std::tie(w, y) = read_data_csv(a.data);
  } else {
    w = to_matrix(t);
  }
  const MatrixXd omega = parse_omega(a.omega, w.cols());
  const VectorXd yhat = predict(beta, w, omega, !a.no_half);
  write_matrix_csv(std::cout, yhat, {"yhat"});
  if (a.report_error) {
    if (y.size() == 0) throw InvalidArgument("--error needs a 'y' column in the data");
    const double err = prediction_error(y, yhat);
    std::cerr << "prediction_error " << format_double(err, 6) << '\n';
  }
  return kExitOk;
}

}  // namespace cli

inline int cli_main(int argc, char** argv) {
  CLI::App app{"Penalized Poisson regression with covariate measurement error"};
  app.require_subcommand(1);

  cli::FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "fit with BIC-selected lambda; prints FitResult JSON");
  fit_cmd->add_option("--data", fit.data, "CSV with header and a 'y' column")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--omega", fit.omega, "zero, scaled:<c>:<file>, or p x p CSV");
  fit_cmd->add_option("--init", fit.init, "starting coefficients (JSON with 'beta' or one-column CSV)");
  fit_cmd->add_flag("--standardize", fit.standardize, "center and scale covariate columns");
  fit.solver.attach(fit_cmd);

  cli::TestArgs test;
  auto* test_cmd = app.add_subcommand("test", "Wald and/or score test; prints one JSON line per test");
  test_cmd->add_option("--data", test.data)->required()->check(CLI::ExistingFile);
  test_cmd->add_option("--omega", test.omega);
  test_cmd->add_option("--hyp", test.hyp, "JSON {C, t, M} with 1-based M")->required()->check(CLI::ExistingFile);
  test_cmd->add_option("--kind", test.kind)->check(CLI::IsMember({"wald", "score", "both"}));
  test_cmd->add_flag("--naive", test.naive, "ignore measurement error");
  test_cmd->add_flag("--standardize", test.standardize);
  test.solver.attach(test_cmd);

  cli::SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "size/power battery; prints a TSV table");
  sim_cmd->add_option("--design", sim.designs, "h01..h10 or all")->delimiter(',');
  sim_cmd->add_option("--n", sim.n);
  sim_cmd->add_option("--p", sim.p);
  sim_cmd->add_option("--reps", sim.reps)->check(CLI::PositiveNumber);
  sim_cmd->add_option("--seed", sim.seed);
  sim_cmd->add_option("--h-grid", sim.h, "deviations (default: the family's grid)")->delimiter(',');
  sim_cmd->add_option("--x-dist", sim.x_dist)->check(CLI::IsMember({"normal", "uniform"}));
  sim_cmd->add_option("--cov", sim.cov)->check(CLI::IsMember({"identity", "ar1"}));
  sim_cmd->add_option("--omega-ratio", sim.omega_ratio, "Omega = ratio * Sigma");
  sim_cmd->add_option("--profile", sim.profile, "desk (p=50) or slow (p=350)")->check(CLI::IsMember({"desk", "slow"}));
  sim_cmd->add_flag("--naive-comparison", sim.naive_comparison, "X-cov 0.7I, Omega 0.3I; corrected and naive rows");
  sim_cmd->add_option("--threads", sim.threads, "worker threads (default NP_THREADS or all cores)");
  sim_cmd->add_option("--json", sim.json_out, "also write rows as JSON");
  sim_cmd->add_flag("--quiet", sim.quiet);
  sim.solver.attach(sim_cmd);

  cli::OmegaArgs om;
  auto* om_cmd = app.add_subcommand("estimate-omega", "Omega from repeated measurements; prints CSV");
  om_cmd->add_option("--panel", om.panel, "CSV with subject, visit, age and feature columns")
      ->required()
      ->check(CLI::ExistingFile);
  om_cmd->add_option("--leading-zeros", om.leading_zeros, "error-free covariates placed first")
      ->check(CLI::NonNegativeNumber);
  om_cmd->add_option("--out", om.out);

  cli::PredictArgs pr;
  auto* pr_cmd = app.add_subcommand("predict", "predicted means; prints CSV");
  pr_cmd->add_option("--coef", pr.coef, "FitResult JSON or one-column CSV")->required()->check(CLI::ExistingFile);
  pr_cmd->add_option("--data", pr.data, "CSV with header; a 'y' column is ignored")->required()->check(CLI::ExistingFile);
  pr_cmd->add_option("--omega", pr.omega);
  pr_cmd->add_flag("--no-half", pr.no_half, "use exp(b'W - b'Omega b)");
  pr_cmd->add_flag("--error", pr.report_error, "print sum |y - yhat| / |y| to stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kExitUsage;
  }

  try {
    if (*fit_cmd) return cli::run_fit(fit);
    if (*test_cmd) return cli::run_test_cmd(test);
    if (*sim_cmd) return cli::run_simulate(sim);
    if (*om_cmd) return cli::run_estimate_omega(om);
    if (*pr_cmd) return cli::run_predict(pr);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return cli::kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return cli::kExitNumerical;
  }
  return cli::kExitUsage;
}

}  // namespace mepois
