#pragma once

// Monte Carlo size/power experiments for the corrected Wald and score tests.

#include "mepois/inference.hpp"
#include "mepois/parallel.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace mepois {

enum class CovariateDist { Normal, Uniform };
enum class CovarianceKind { ScaledIdentity, AR1 };
enum class HypothesisId { H01, H02, H03, H04, H05, H06, H07, H08, H09, H10 };

inline constexpr std::array<HypothesisId, 10> kAllHypotheses = {
    HypothesisId::H01, HypothesisId::H02, HypothesisId::H03, HypothesisId::H04, HypothesisId::H05,
    HypothesisId::H06, HypothesisId::H07, HypothesisId::H08, HypothesisId::H09, HypothesisId::H10};

inline std::string to_string(HypothesisId id) {
  const int k = static_cast<int>(id) + 1;
  return k < 10 ? "h0" + std::to_string(k) : "h" + std::to_string(k);
}

inline HypothesisId parse_hypothesis_id(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (HypothesisId id : kAllHypotheses) {
    const std::string name = to_string(id);
    if (s == name || s == "h" + name.substr(name.size() - 1) || s == "h" + std::to_string(static_cast<int>(id) + 1)) {
      return id;
    }
  }
  throw InvalidArgument("unknown hypothesis '" + s + "' (expected h01..h10)");
}

/// Smallest p for which the hypothesis touches distinct coefficients.
inline Index min_dimension(HypothesisId id) {
  switch (id) {
    case HypothesisId::H09: return 8;
    case HypothesisId::H10: return 12;
    default: return 4;
  }
}

struct SimDesign {
  Index n = 300;
  Index p = 50;
  CovariateDist x_dist = CovariateDist::Normal;
  CovarianceKind sigma_kind = CovarianceKind::ScaledIdentity;
  double sigma_scale = 0.5;   // diagonal of the scaled-identity covariance
  double omega_ratio = 0.1;   // Omega = omega_ratio * Sigma
  HypothesisId hypothesis = HypothesisId::H02;
  double h = 0.0;             // deviation added to the coefficient the hypothesis varies
  int reps = 500;
  std::uint64_t seed = 1;

  void validate() const {
    if (n < 1) throw InvalidArgument("n must be >= 1");
    if (p < min_dimension(hypothesis)) {
      throw InvalidArgument(to_string(hypothesis) + " needs p >= " + std::to_string(min_dimension(hypothesis)));
    }
    if (reps < 1) throw InvalidArgument("reps must be >= 1");
    if (!(sigma_scale > 0.0)) throw InvalidArgument("sigma scale must be positive");
    if (!(omega_ratio >= 0.0)) throw InvalidArgument("omega ratio must be nonnegative");
  }
};

/// Design used to compare corrected and naive tests: X ~ N(0, 0.7 I), U ~ N(0, 0.3 I).
inline SimDesign naive_comparison_design(HypothesisId id, double h, Index n = 300, Index p = 50) {
  SimDesign d;
  d.n = n;
  d.p = p;
  d.sigma_scale = 0.7;
  d.omega_ratio = 0.3 / 0.7;
  d.hypothesis = id;
  d.h = h;
  return d;
}

inline HypothesisSpec hypothesis_spec(HypothesisId id, Index p) {
  switch (id) {
    case HypothesisId::H01: return HypothesisSpec::single(1, -0.75);
    case HypothesisId::H02: return HypothesisSpec::single(2, 0.0);
    case HypothesisId::H03: return HypothesisSpec::single(p - 1, 0.0);
    case HypothesisId::H04: return HypothesisSpec::sum_of({0, 1}, 0.0);
    case HypothesisId::H05: return HypothesisSpec::sum_of({2, 3}, 0.0);
    case HypothesisId::H06: return HypothesisSpec::sum_of({0, p - 1}, 0.75);
    case HypothesisId::H07: return HypothesisSpec::sum_of({1, 2}, -0.75);
    case HypothesisId::H08: return HypothesisSpec::sum_of({0, 1, 2, 3}, 0.0);
    case HypothesisId::H09: return HypothesisSpec::sum_of({0, 1, 2, 3, 4, 5, 6, 7}, 0.0);
    case HypothesisId::H10: return HypothesisSpec::sum_of({0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}, 0.0);
  }
  throw InvalidArgument("unknown hypothesis");
}

/// The one coefficient (of beta_2, beta_3, beta_p) that carries h; the others stay at h = 0.
inline Index varied_index(HypothesisId id, Index p) {
  switch (id) {
    case HypothesisId::H01:
    case HypothesisId::H04: return 1;
    case HypothesisId::H03:
    case HypothesisId::H06: return p - 1;
    default: return 2;
  }
}

/// Deviations reported for each hypothesis family.
inline std::vector<double> default_h_grid(HypothesisId id) {
  switch (id) {
    case HypothesisId::H08:
    case HypothesisId::H09:
    case HypothesisId::H10: return {0.0, 0.2, 0.4, 0.8};
    default: return {0.0, 0.1, 0.2, 0.4};
  }
}

/// (0.75, -0.75 + h2, h3, 0, ..., 0, hp) with only the hypothesis's coordinate moved.
inline VectorXd true_beta(const SimDesign& d) {
  VectorXd b = VectorXd::Zero(d.p);
  b[0] = 0.75;
  b[1] = -0.75;
  b[varied_index(d.hypothesis, d.p)] += d.h;
  return b;
}

inline MatrixXd covariate_covariance(const SimDesign& d) {
  if (d.sigma_kind == CovarianceKind::ScaledIdentity) return d.sigma_scale * MatrixXd::Identity(d.p, d.p);
  MatrixXd s(d.p, d.p);
  for (Index i = 0; i < d.p; ++i)
    for (Index j = 0; j < d.p; ++j) s(i, j) = std::pow(0.5, static_cast<double>(std::abs(i - j) + 1));
  return s;
}

inline MatrixXd lower_cholesky(const MatrixXd& s) {
  Eigen::LLT<MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) throw CholeskyFailure("covariance is not positive definite");
  return llt.matrixL();
}

/// Uniform draws on (-sqrt(6)/2, sqrt(6)/2) have variance 0.5; they are mapped through
/// the Cholesky factor of Sigma / 0.5 so the covariance is Sigma.
inline MatrixXd gen_covariates(const SimDesign& d, std::mt19937_64& rng) {
  const MatrixXd sigma = covariate_covariance(d);
  MatrixXd z(d.n, d.p);
  if (d.x_dist == CovariateDist::Normal) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index i = 0; i < d.n; ++i)
      for (Index j = 0; j < d.p; ++j) z(i, j) = normal(rng);
    return z * lower_cholesky(sigma).transpose();
  }
  const double half = std::sqrt(6.0) / 2.0;
  std::uniform_real_distribution<double> unif(-half, half);
  for (Index i = 0; i < d.n; ++i)
    for (Index j = 0; j < d.p; ++j) z(i, j) = unif(rng);
  return z * lower_cholesky(sigma / 0.5).transpose();
}

/// Y_i ~ Poisson(exp(X_i' beta)).
inline VectorXd gen_outcome(const MatrixXd& x, const VectorXd& beta, std::mt19937_64& rng) {
  if (x.cols() != beta.size()) throw DimensionMismatch("X and beta disagree");
  const VectorXd eta = x * beta;
  VectorXd y(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    if (!(eta[i] <= kExponentGuard)) throw Overflow("outcome mean exponent exceeds guard");
    std::poisson_distribution<long long> pois(std::exp(eta[i]));
    y[i] = static_cast<double>(pois(rng));
  }
  return y;
}

/// Independent stream for replication `rep` of experiment `seed`.
inline std::mt19937_64 replication_rng(std::uint64_t seed, std::uint64_t rep) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(rep), static_cast<std::uint32_t>(rep >> 32), 0x6d65u};
  return std::mt19937_64(seq);
}

/// Draws (X, U, Y) for one replication and returns the observed data W = X + U.
inline Dataset simulate_dataset(const SimDesign& d, std::uint64_t rep) {
  auto rng = replication_rng(d.seed, rep);
  const MatrixXd sigma = covariate_covariance(d);
  const MatrixXd omega = d.omega_ratio * sigma;
  const MatrixXd x = gen_covariates(d, rng);
  MatrixXd u = MatrixXd::Zero(d.n, d.p);
  if (d.omega_ratio > 0.0) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index i = 0; i < d.n; ++i)
      for (Index j = 0; j < d.p; ++j) u(i, j) = normal(rng);
    u = u * lower_cholesky(omega).transpose();
  }
  VectorXd y = gen_outcome(x, true_beta(d), rng);
  return Dataset(x + u, std::move(y), omega);
}

inline constexpr double kNominalLevel = 0.05;

struct ReplicationOutcome {
  bool ok = false;
  double wald = std::numeric_limits<double>::quiet_NaN();
  double score = std::numeric_limits<double>::quiet_NaN();
  double wald_p = std::numeric_limits<double>::quiet_NaN();
  double score_p = std::numeric_limits<double>::quiet_NaN();
  double max_constraint_residual = 0.0;
  bool balls_hold = true;
  std::string error;
};

struct SizePowerRow {
  std::string hypothesis;
  double h = 0.0;
  double wald_rate = 0.0;
  double score_rate = 0.0;
  double wald_se = 0.0;
  double score_se = 0.0;
  int reps = 0;
  int failures = 0;
  std::string label;  // "corrected" or "naive"
  std::vector<ReplicationOutcome> outcomes;
};

struct ExperimentOptions {
  InferenceOptions inference;
  bool run_wald = true;
  bool run_score = true;
  unsigned threads = default_thread_count();
  std::function<void(std::size_t done, std::size_t total)> progress;
};

namespace detail {

inline bool within_balls(const FitResult& f) {
  return f.beta.lpNorm<1>() <= f.radii.R1 + 1e-8 && f.beta.norm() <= f.radii.R2 + 1e-8;
}

inline ReplicationOutcome run_one(const Dataset& data, const HypothesisSpec& hyp, const ExperimentOptions& opt) {
  ReplicationOutcome out;
  const InferenceOptions& io = opt.inference;
  const Dataset d = io.naive ? data.without_error() : data;
  try {
    if (opt.run_wald) {
      const FitResult fit = select_lambda(d, io.family, io.shape, io.grid, hyp, false, io.solver);
      const TestResult t = wald_statistic(d, hyp, fit, io.sigma);
      out.wald = t.statistic;
      out.wald_p = t.p_value;
      out.balls_hold = out.balls_hold && within_balls(fit);
    }
    if (opt.run_score) {
      const FitResult fit = select_lambda(d, io.family, io.shape, io.grid, hyp, true, io.solver);
      const TestResult t = score_statistic(d, hyp, fit, io.sigma);
      out.score = t.statistic;
      out.score_p = t.p_value;
      out.max_constraint_residual = fit.constraint_residual;
      out.balls_hold = out.balls_hold && within_balls(fit);
    }
    out.ok = true;
  } catch (const NumericalError& e) {
    out.error = e.what();
  }
  return out;
}

inline SizePowerRow aggregate(const SimDesign& design, std::vector<ReplicationOutcome> outcomes,
                              const std::string& label) {
  SizePowerRow row;
  row.hypothesis = to_string(design.hypothesis);
  row.h = design.h;
  row.label = label;
  int used = 0;
  int wald_rej = 0;
  int score_rej = 0;
  for (const auto& o : outcomes) {
    if (!o.ok) {
      ++row.failures;
      continue;
    }
    ++used;
    if (o.wald_p < kNominalLevel) ++wald_rej;
    if (o.score_p < kNominalLevel) ++score_rej;
  }
  row.reps = used;
  if (used > 0) {
    const double n = static_cast<double>(used);
    row.wald_rate = wald_rej / n;
    row.score_rate = score_rej / n;
    row.wald_se = std::sqrt(row.wald_rate * (1.0 - row.wald_rate) / n);
    row.score_se = std::sqrt(row.score_rate * (1.0 - row.score_rate) / n);
  }
  row.outcomes = std::move(outcomes);
  return row;
}

}  // namespace detail

/// Runs `design.reps` replications and reports rejection rates at level 0.05.
/// Replications whose fits fail numerically are counted in `failures` and left
/// out of the denominators.
inline SizePowerRow run_experiment(const SimDesign& design, const ExperimentOptions& opt = {}) {
  design.validate();
  const HypothesisSpec hyp = hypothesis_spec(design.hypothesis, design.p);
  std::vector<ReplicationOutcome> outcomes(static_cast<std::size_t>(design.reps));
  std::atomic<std::size_t> done{0};
  parallel_for(outcomes.size(), opt.threads, [&](std::size_t rep) {
    const Dataset data = simulate_dataset(design, rep);
    outcomes[rep] = detail::run_one(data, hyp, opt);
    const std::size_t k = ++done;
    if (opt.progress) opt.progress(k, outcomes.size());
  });
  return detail::aggregate(design, std::move(outcomes), opt.inference.naive ? "naive" : "corrected");
}

/// Same replications analysed twice: with the true Omega and with Omega forced to zero.
/// The naive pass uses the model-based Poisson covariance, as an analyst unaware of
/// the measurement error would.
inline std::pair<SizePowerRow, SizePowerRow> naive_comparison(const SimDesign& design,
                                                              const ExperimentOptions& opt = {}) {
  ExperimentOptions corrected = opt;
  corrected.inference.naive = false;
  ExperimentOptions naive = opt;
  naive.inference.naive = true;
  naive.inference.sigma = SigmaEstimator::ClosedForm;
  return {run_experiment(design, corrected), run_experiment(design, naive)};
}

}  // namespace mepois
