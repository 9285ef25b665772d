#pragma once

// Wald and score tests of C b_M = t built on the partially penalized fits, both
// studentized by the sandwich
//
//   Psi = C [I_m, 0] Q^{-1} Sigma Q^{-1} [I_m, 0]' C'
//
// restricted to M u S, S being the estimated support outside M. Both statistics are
// referred to chi-square(r).

#include "mepois/admm.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace mepois {

inline constexpr double kMaxConditionNumber = 1e12;

enum class TestKind { Wald, Score };

inline const char* to_string(TestKind k) { return k == TestKind::Wald ? "wald" : "score"; }

/// Upper tail P(chi2(df) > x).
inline double chisq_sf(double x, int df) {
  if (df < 1) throw InvalidArgument("chi-square df must be >= 1");
  if (!(x >= 0.0)) {
    if (std::isnan(x)) throw InvalidArgument("chi-square argument is NaN");
    throw InvalidArgument("chi-square argument must be nonnegative");
  }
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

/// The 1 - alpha quantile of chi2(df).
inline double chisq_quantile_upper(double alpha, int df) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must be in (0, 1)");
  return 2.0 * boost::math::gamma_q_inv(0.5 * df, alpha);
}

/// Benjamini-Hochberg step-up at level q. Entry j is true when hypothesis j is rejected.
inline std::vector<bool> bh_fdr(const std::vector<double>& p_values, double q) {
  if (!(q > 0.0 && q < 1.0)) throw InvalidArgument("FDR level must be in (0, 1)");
  for (double p : p_values) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("p-values must lie in [0, 1]");
  }
  const std::size_t n = p_values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
  std::size_t cutoff = 0;  // number of rejections
  for (std::size_t i = n; i >= 1; --i) {
    if (p_values[order[i - 1]] <= q * static_cast<double>(i) / static_cast<double>(n)) {
      cutoff = i;
      break;
    }
  }
  std::vector<bool> reject(n, false);
  for (std::size_t i = 0; i < cutoff; ++i) reject[order[i]] = true;
  return reject;
}

/// Sandwich pieces: psi and K = C [I_m, 0] Q^{-1}_{II} with I = M followed by S.
struct PsiFactor {
  MatrixXd psi;
  MatrixXd K;
  IndexSet index;  // M then S
  bool ridge_applied = false;
};

inline IndexSet tested_union(const HypothesisSpec& hyp, const IndexSet& support) {
  IndexSet idx = hyp.M;
  for (Index j : support) {
    if (std::find(hyp.M.begin(), hyp.M.end(), j) == hyp.M.end()) idx.push_back(j);
  }
  return idx;
}

inline PsiFactor psi(const MatrixXd& sigma, const MatrixXd& q, const HypothesisSpec& hyp,
                     const IndexSet& support) {
  if (sigma.rows() != sigma.cols() || q.rows() != q.cols() || sigma.rows() != q.rows()) {
    throw DimensionMismatch("Sigma and Q must be square and of equal size");
  }
  hyp.validate(q.rows());
  if (hyp.r() < 1) throw InvalidArgument("hypothesis has no constraints");
  PsiFactor out;
  out.index = tested_union(hyp, support);
  const Index k = static_cast<Index>(out.index.size());
  MatrixXd q_ii = gather(q, out.index, out.index);
  q_ii = 0.5 * (q_ii + q_ii.transpose()).eval();
  const MatrixXd s_ii = gather(sigma, out.index, out.index);

  auto well_posed = [](const MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(m, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    return lo > 0.0 && hi / lo < kMaxConditionNumber;
  };
  Eigen::LLT<MatrixXd> llt(q_ii);
  if (llt.info() != Eigen::Success || !well_posed(q_ii)) {
    const double ridge = 1e-10 * q_ii.trace() / static_cast<double>(k);
    q_ii += std::abs(ridge) * MatrixXd::Identity(k, k);
    llt.compute(q_ii);
    out.ridge_applied = true;
    if (llt.info() != Eigen::Success || !well_posed(q_ii)) {
      throw IllConditioned("restricted Hessian on M u S is not invertible");
    }
  }
  const MatrixXd q_inv = llt.solve(MatrixXd::Identity(k, k));
  out.K = hyp.C * q_inv.topRows(hyp.m());
  MatrixXd p = out.K * s_ii * out.K.transpose();
  out.psi = 0.5 * (p + p.transpose());
  Eigen::LLT<MatrixXd> check(out.psi);
  if (check.info() != Eigen::Success) throw IllConditioned("Psi is not positive definite");
  return out;
}

struct TestResult {
  TestKind kind = TestKind::Wald;
  double statistic = 0.0;
  int df = 1;
  double p_value = 1.0;
  IndexSet support;  // M u S, 0-based
  double lambda = 0.0;
  double signed_root = std::numeric_limits<double>::quiet_NaN();  // only for r = 1
  bool ridge_applied = false;
  bool converged = true;
  bool on_boundary = false;
};

/// Upper one-sided p-value for r = 1: evidence that C b_M > t.
inline double one_sided_p_value(const TestResult& r) {
  if (r.df != 1 || std::isnan(r.signed_root)) throw InvalidArgument("one-sided tests need r = 1");
  return 0.5 * std::erfc(r.signed_root / std::sqrt(2.0));
}

struct InferenceOptions {
  PenaltyFamily family = PenaltyFamily::Scad;
  double shape = kDefaultScadShape;
  std::vector<double> grid = default_lambda_grid();
  SolverConfig solver;
  SigmaEstimator sigma = SigmaEstimator::Residual;
  bool naive = false;  // ignore the measurement error (Omega forced to zero)
};

namespace detail {

inline double quadratic_form(const MatrixXd& psi, const VectorXd& x) {
  Eigen::LLT<MatrixXd> llt(psi);
  return x.dot(llt.solve(x));
}

inline TestResult finish(TestKind kind, const HypothesisSpec& hyp, const FitResult& fit, const PsiFactor& f,
                         double statistic, double signed_direction) {
  TestResult r;
  r.kind = kind;
  r.statistic = std::max(statistic, 0.0);
  r.df = static_cast<int>(hyp.r());
  r.p_value = chisq_sf(r.statistic, r.df);
  r.support = f.index;
  r.lambda = fit.lambda;
  r.ridge_applied = f.ridge_applied;
  r.converged = fit.converged;
  r.on_boundary = fit.on_boundary;
  if (r.df == 1) r.signed_root = (signed_direction < 0.0 ? -1.0 : 1.0) * std::sqrt(r.statistic);
  return r;
}

}  // namespace detail

/// T_W = n (C b_M - t)' Psi^{-1} (C b_M - t) at an unconstrained (partially penalized) fit.
inline TestResult wald_statistic(const Dataset& data, const HypothesisSpec& hyp, const FitResult& fit,
                                 SigmaEstimator sigma_kind = SigmaEstimator::Residual) {
  const MatrixXd q = hessian(data, fit.beta);
  const MatrixXd s = sigma_hat(data, fit.beta, sigma_kind);
  const PsiFactor f = psi(s, q, hyp, fit.support);
  const VectorXd diff = hyp.C * gather(fit.beta, hyp.M) - hyp.t;
  const double stat = static_cast<double>(data.n()) * detail::quadratic_form(f.psi, diff);
  return detail::finish(TestKind::Wald, hyp, fit, f, stat, diff.size() == 1 ? diff[0] : 0.0);
}

/// T_S = n u' Psi^{-1} u with u = K {dL/db}_{M u S}, at the null-constrained fit.
inline TestResult score_statistic(const Dataset& data, const HypothesisSpec& hyp, const FitResult& fit,
                                  SigmaEstimator sigma_kind = SigmaEstimator::Residual) {
  const LossEvaluation e = evaluate(data, fit.beta, true);
  const MatrixXd s = sigma_hat(data, fit.beta, sigma_kind);
  const PsiFactor f = psi(s, e.hess, hyp, fit.support);
  const VectorXd u = f.K * gather(e.grad, f.index);
  const double stat = static_cast<double>(data.n()) * detail::quadratic_form(f.psi, u);
  // C b_a - t is approximately -u, so the sign is flipped for the one-sided root.
  return detail::finish(TestKind::Score, hyp, fit, f, stat, u.size() == 1 ? -u[0] : 0.0);
}

inline TestResult wald_test(const Dataset& data, const HypothesisSpec& hyp, const InferenceOptions& opt = {}) {
  hyp.validate(data.p());
  if (hyp.r() < 1) throw InvalidArgument("hypothesis has no constraints");
  const Dataset d = opt.naive ? data.without_error() : data;
  const FitResult fit = select_lambda(d, opt.family, opt.shape, opt.grid, hyp, false, opt.solver);
  return wald_statistic(d, hyp, fit, opt.sigma);
}

inline TestResult score_test(const Dataset& data, const HypothesisSpec& hyp, const InferenceOptions& opt = {}) {
  hyp.validate(data.p());
  if (hyp.r() < 1) throw InvalidArgument("hypothesis has no constraints");
  const Dataset d = opt.naive ? data.without_error() : data;
  const FitResult fit = select_lambda(d, opt.family, opt.shape, opt.grid, hyp, true, opt.solver);
  return score_statistic(d, hyp, fit, opt.sigma);
}

inline TestResult run_test(TestKind kind, const Dataset& data, const HypothesisSpec& hyp,
                           const InferenceOptions& opt = {}) {
  return kind == TestKind::Wald ? wald_test(data, hyp, opt) : score_test(data, hyp, opt);
}

}  // namespace mepois
