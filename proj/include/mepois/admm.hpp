#pragma once

// Penalized, norm-constrained estimation by ADMM.
//
// The program is
//
//   min  L(b) + sum_{j in M^c} rho_lambda(b_j)
//   s.t. |b|_1 <= R1, |b|_2 <= R2   [and C b_M = t when fitting under the null]
//
// split as b_{M^c} = theta. Each outer iteration runs
//   1. Newton solve of the augmented Lagrangian in b,
//   2. L1-ball projection followed by L2 shrinkage,
//   3. elementwise penalty prox for theta,
//   4. dual ascent with step rho,
// and stops once either |b(t+1) - b(t)|_2 or |theta(t+1) - theta(t)|_2 is below tol.

#include "mepois/constraints.hpp"
#include "mepois/model.hpp"
#include "mepois/penalty.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mepois {

struct SolverConfig {
  double rho = 1.0;         // augmented-Lagrangian weight
  int t_max = 1000;         // outer iterations
  double tol = 1e-4;        // stopping tolerance on successive iterates
  int newton_max = 50;
  double newton_tol = 1e-8;
  double ridge = 1e-8;      // first Hessian regularizer tried when Cholesky fails
  std::optional<double> R1;
  std::optional<double> R2;

  void validate() const {
    if (!(rho > 0.0)) throw InvalidArgument("rho must be positive");
    if (t_max < 1) throw InvalidArgument("t_max must be >= 1");
    if (!(tol > 0.0)) throw InvalidArgument("tol must be positive");
    if (newton_max < 1) throw InvalidArgument("newton_max must be >= 1");
    if (!(newton_tol > 0.0)) throw InvalidArgument("newton_tol must be positive");
    if (!(ridge >= 0.0)) throw InvalidArgument("ridge must be nonnegative");
    if (R1 && !(*R1 > 0.0)) throw InvalidArgument("R1 must be positive");
    if (R2 && !(*R2 > 0.0)) throw InvalidArgument("R2 must be positive");
  }

  void validate(const PenaltySpec& penalty) const {
    validate();
    if (!(rho > penalty.mu())) {
      throw InvalidArgument("rho (" + std::to_string(rho) + ") must exceed the penalty's mu (" +
                            std::to_string(penalty.mu()) + ")");
    }
  }
};

/// |b_j| above this counts as nonzero for supports and the L0 norm.
inline constexpr double kSupportThreshold = 1e-6;
inline constexpr double kDefaultRadiusFloor = 10.0;
inline constexpr double kMaxRidge = 1e-2;

struct FitResult {
  VectorXd beta;
  IndexSet support;  // nonzero coordinates of beta on M^c
  double lambda = 0.0;
  bool converged = false;
  int iterations = 0;
  double constraint_residual = 0.0;
  double primal_residual = 0.0;  // |b_{M^c} - theta|_2 at exit
  double objective = 0.0;
  double bic = 0.0;
  FeasibleSet radii;
  bool on_boundary = false;  // a norm ball is active; consider larger radii
  std::vector<std::pair<double, double>> bic_path;  // (lambda, BIC) for grid searches
};

/// R2 = 1.5 |b0|_2 and R1 = sqrt(2) R2, with R2 = 10 when b0 = 0.
inline FeasibleSet default_radii(const VectorXd& beta_init) {
  const double norm = beta_init.norm();
  const double r2 = norm > 0.0 ? 1.5 * norm : kDefaultRadiusFloor;
  return FeasibleSet{std::sqrt(2.0) * r2, r2};
}

inline FeasibleSet resolve_radii(const SolverConfig& config, const VectorXd& beta_init) {
  FeasibleSet set = default_radii(beta_init);
  if (config.R1) set.R1 = *config.R1;
  if (config.R2) set.R2 = *config.R2;
  set.validate();
  return set;
}

inline IndexSet support_of(const VectorXd& beta, const IndexSet& candidates) {
  IndexSet s;
  for (Index j : candidates) {
    if (std::abs(beta[j]) > kSupportThreshold) s.push_back(j);
  }
  return s;
}

inline Index l0_norm(const VectorXd& beta) {
  return (beta.array().abs() > kSupportThreshold).count();
}

/// c_n = max{log n, log(log n) log p}.
inline double bic_weight(Index n, Index p) {
  const double ln = std::log(static_cast<double>(n));
  if (n < 2 || p < 2) return ln;
  return std::max(ln, std::log(ln) * std::log(static_cast<double>(p)));
}

/// BIC = n L(b) + c_n |b|_0.
inline double bic(const Dataset& data, const VectorXd& beta) {
  if (!beta.allFinite()) throw InvalidArgument("BIC needs finite coefficients");
  return static_cast<double>(data.n()) * loss(data, beta) +
         bic_weight(data.n(), data.p()) * static_cast<double>(l0_norm(beta));
}

/// 41 log-equally spaced values exp(-2.5), exp(-2.425), ..., exp(0.5).
inline std::vector<double> default_lambda_grid() {
  std::vector<double> grid;
  grid.reserve(41);
  for (int k = 0; k < 41; ++k) grid.push_back(std::exp(-2.5 + 0.075 * k));
  return grid;
}

/// The smooth part of one ADMM iteration: L(b) + v'res(b) + rho/2 |res(b)|^2 with
/// res(b) = [C b_M - t ; b_{M^c} - theta]. The C block is present only for fits
/// under the null.
class AugmentedSubproblem {
 public:
  AugmentedSubproblem(const Dataset& data, const HypothesisSpec& hyp, bool constrained, double rho)
      : data_(data), hyp_(hyp), constrained_(constrained && hyp.r() > 0), rho_(rho),
        mc_(complement(hyp.M, data.p())) {
    const Index p = data.p();
    // A'A = blockdiag(C'C on M, I on M^c)
    ata_ = MatrixXd::Zero(p, p);
    if (constrained_) {
      const MatrixXd ctc = hyp.C.transpose() * hyp.C;
      for (Index a = 0; a < hyp.m(); ++a)
        for (Index b = 0; b < hyp.m(); ++b) ata_(hyp.M[a], hyp.M[b]) = ctc(a, b);
    }
    for (Index j : mc_) ata_(j, j) = 1.0;
  }

  const IndexSet& free_block() const { return hyp_.M; }
  const IndexSet& penalized_block() const { return mc_; }
  bool constrained() const { return constrained_; }
  Index constraint_rows() const { return constrained_ ? hyp_.r() : 0; }
  Index dual_size() const { return constraint_rows() + static_cast<Index>(mc_.size()); }

  VectorXd residual(const VectorXd& beta, const VectorXd& theta) const {
    VectorXd res(dual_size());
    const Index r = constraint_rows();
    if (r > 0) res.head(r) = hyp_.C * gather(beta, hyp_.M) - hyp_.t;
    for (std::size_t k = 0; k < mc_.size(); ++k) {
      res[r + static_cast<Index>(k)] = beta[mc_[k]] - theta[static_cast<Index>(k)];
    }
    return res;
  }

  /// A' y for a dual-sized vector y.
  VectorXd adjoint(const VectorXd& y) const {
    VectorXd out = VectorXd::Zero(data_.p());
    const Index r = constraint_rows();
    if (r > 0) scatter(out, hyp_.M, hyp_.C.transpose() * y.head(r));
    for (std::size_t k = 0; k < mc_.size(); ++k) out[mc_[k]] += y[r + static_cast<Index>(k)];
    return out;
  }

  double value(const VectorXd& beta, const VectorXd& theta, const VectorXd& v) const {
    const VectorXd res = residual(beta, theta);
    return loss(data_, beta) + v.dot(res) + 0.5 * rho_ * res.squaredNorm();
  }

  LossEvaluation evaluate(const VectorXd& beta, const VectorXd& theta, const VectorXd& v) const {
    LossEvaluation e = mepois::evaluate(data_, beta, true);
    const VectorXd res = residual(beta, theta);
    e.value += v.dot(res) + 0.5 * rho_ * res.squaredNorm();
    e.grad += adjoint(v + rho_ * res);
    e.hess += rho_ * ata_;
    return e;
  }

 private:
  const Dataset& data_;
  const HypothesisSpec& hyp_;
  bool constrained_;
  double rho_;
  IndexSet mc_;
  MatrixXd ata_;
};

namespace detail {

inline double safe_value(const AugmentedSubproblem& prob, const VectorXd& beta, const VectorXd& theta,
                         const VectorXd& v) {
  try {
    return prob.value(beta, theta, v);
  } catch (const Overflow&) {
    return std::numeric_limits<double>::infinity();
  }
}

inline VectorXd solve_regularized(const MatrixXd& h, const VectorXd& rhs, double ridge) {
  Eigen::LLT<MatrixXd> llt(h);
  if (llt.info() == Eigen::Success) return llt.solve(rhs);
  const Index p = h.rows();
  for (double mu = std::max(ridge, 1e-12); mu <= kMaxRidge * (1.0 + 1e-12); mu *= 10.0) {
    llt.compute(h + mu * MatrixXd::Identity(p, p));
    if (llt.info() == Eigen::Success) return llt.solve(rhs);
  }
  throw SingularHessian("Newton system is not positive definite even with ridge " +
                        std::to_string(kMaxRidge));
}

}  // namespace detail

/// Step 1: damped Newton on the augmented Lagrangian, started from beta_start.
inline VectorXd newton_subproblem(const AugmentedSubproblem& prob, const VectorXd& theta,
                                  const VectorXd& v, const SolverConfig& config,
                                  const VectorXd& beta_start) {
  if (!beta_start.allFinite()) throw InvalidArgument("Newton start must be finite");
  if (theta.size() != static_cast<Index>(prob.penalized_block().size()) || v.size() != prob.dual_size()) {
    throw DimensionMismatch("theta or dual vector has the wrong size");
  }
  VectorXd beta = beta_start;
  LossEvaluation cur = prob.evaluate(beta, theta, v);
  for (int it = 0; it < config.newton_max; ++it) {
    if (cur.grad.lpNorm<Eigen::Infinity>() <= config.newton_tol) break;
    const VectorXd step = detail::solve_regularized(cur.hess, -cur.grad, config.ridge);
    const double slope = cur.grad.dot(step);
    double scale = 1.0;
    bool accepted = false;
    VectorXd trial;
    for (int halving = 0; halving <= 20; ++halving) {
      trial = beta + scale * step;
      const double f = detail::safe_value(prob, trial, theta, v);
      if (f <= cur.value + 1e-4 * scale * std::min(slope, 0.0)) {
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) break;
    beta = trial;
    cur = prob.evaluate(beta, theta, v);
  }
  return beta;
}

/// Convenience overload building the subproblem from its parts.
inline VectorXd newton_subproblem(const Dataset& data, const HypothesisSpec& hyp, bool constrained,
                                  const VectorXd& theta, const VectorXd& v, const SolverConfig& config,
                                  const VectorXd& beta_start) {
  hyp.validate(data.p());
  AugmentedSubproblem prob(data, hyp, constrained, config.rho);
  return newton_subproblem(prob, theta, v, config, beta_start);
}

namespace detail {

/// Alternating projections onto {C b_M = t} and the norm balls.
inline VectorXd enforce_null(const HypothesisSpec& hyp, const FeasibleSet& radii, VectorXd beta) {
  const MatrixXd cct = hyp.C * hyp.C.transpose();
  const Eigen::LLT<MatrixXd> llt(cct);
  for (int k = 0; k < 500; ++k) {
    const VectorXd bm = gather(beta, hyp.M);
    const VectorXd gap = hyp.C * bm - hyp.t;
    scatter(beta, hyp.M, bm - hyp.C.transpose() * llt.solve(gap));
    if (beta.lpNorm<1>() <= radii.R1 && beta.norm() <= radii.R2) break;
    beta = project_feasible(beta, radii);
    if (constraint_residual(hyp, beta) <= 1e-12) break;
  }
  return beta;
}

}  // namespace detail

/// Penalized fit at a single lambda. With null_constrained the equality C b_M = t
/// is imposed (partial penalization under the null); otherwise only M^c is
/// penalized and b_M is free.
inline FitResult admm_fit(const Dataset& data, const PenaltySpec& penalty, const HypothesisSpec& hyp,
                          bool null_constrained, const SolverConfig& config, const VectorXd& beta_init,
                          std::optional<FeasibleSet> radii_override = std::nullopt) {
  penalty.validate();
  config.validate(penalty);
  hyp.validate(data.p());
  check_coefficients(data, beta_init);

  const FeasibleSet radii = radii_override ? *radii_override : resolve_radii(config, beta_init);
  radii.validate();
  AugmentedSubproblem prob(data, hyp, null_constrained, config.rho);
  const IndexSet& mc = prob.penalized_block();
  const Index nmc = static_cast<Index>(mc.size());
  const Index r = prob.constraint_rows();

  VectorXd beta = beta_init;
  VectorXd theta = gather(beta_init, mc);
  VectorXd v = VectorXd::Zero(prob.dual_size());

  FitResult out;
  out.lambda = penalty.lambda;
  out.radii = radii;
  for (int t = 0; t < config.t_max; ++t) {
    const VectorXd beta_tilde = newton_subproblem(prob, theta, v, config, beta);
    VectorXd beta_next = project_feasible(beta_tilde, radii);

    VectorXd theta_next(nmc);
    for (Index k = 0; k < nmc; ++k) {
      const double z = beta_next[mc[static_cast<std::size_t>(k)]] + v[r + k] / config.rho;
      theta_next[k] = prox(penalty, z, config.rho);
    }
    v += config.rho * prob.residual(beta_next, theta_next);

    const double beta_step = (beta_next - beta).norm();
    const double theta_step = (theta_next - theta).norm();
    beta = std::move(beta_next);
    theta = std::move(theta_next);
    out.iterations = t + 1;
    if (beta_step <= config.tol || (nmc > 0 && theta_step <= config.tol)) {
      out.converged = true;
      break;
    }
  }

  // Penalized coordinates the prox set to zero are exact zeros of the estimate.
  for (Index k = 0; k < nmc; ++k) {
    if (theta[k] == 0.0) beta[mc[static_cast<std::size_t>(k)]] = 0.0;
  }
  out.primal_residual = (gather(beta, mc) - theta).norm();
  if (prob.constrained()) beta = detail::enforce_null(hyp, radii, std::move(beta));

  out.beta = beta;
  out.support = support_of(beta, mc);
  out.constraint_residual = constraint_residual(hyp, beta);
  double pen = 0.0;
  for (Index j : mc) pen += rho(penalty, beta[j]);
  out.objective = loss(data, beta) + pen;
  out.bic = bic(data, beta);
  out.on_boundary = beta.lpNorm<1>() >= radii.R1 * (1.0 - 1e-6) || beta.norm() >= radii.R2 * (1.0 - 1e-6);
  return out;
}

/// Fits every lambda in `grid` (largest first, each warm-started from the previous
/// solution) and returns the fit with the smallest BIC. Ties go to the larger lambda.
/// Fits that end on a norm-ball boundary are only chosen when no interior fit
/// exists: the corrected loss is unbounded below, so a boundary fit is an artifact
/// of the radii rather than a local minimum.
inline FitResult select_lambda(const Dataset& data, PenaltyFamily family, double shape,
                               std::vector<double> grid, const HypothesisSpec& hyp, bool null_constrained,
                               const SolverConfig& config, std::optional<VectorXd> beta_init = std::nullopt) {
  if (grid.empty()) throw InvalidArgument("lambda grid is empty");
  for (double l : grid) {
    if (!(l > 0.0) || !std::isfinite(l)) throw InvalidArgument("lambda grid values must be positive");
  }
  std::sort(grid.begin(), grid.end(), std::greater<>());
  const VectorXd start = beta_init ? *beta_init : VectorXd::Zero(data.p());
  const FeasibleSet radii = resolve_radii(config, start);

  std::optional<FitResult> best;
  std::vector<std::pair<double, double>> path;
  VectorXd warm = start;
  std::string last_error;
  for (double lambda : grid) {
    PenaltySpec pen{family, lambda, shape};
    try {
      FitResult fit = admm_fit(data, pen, hyp, null_constrained, config, warm, radii);
      path.emplace_back(lambda, fit.bic);
      warm = fit.beta;
      const bool better = !best || (best->on_boundary && !fit.on_boundary) ||
                          (best->on_boundary == fit.on_boundary && fit.bic < best->bic);
      if (better) best = std::move(fit);
    } catch (const InvalidArgument&) {
      throw;
    } catch (const NumericalError& e) {
      last_error = e.what();
      path.emplace_back(lambda, std::numeric_limits<double>::quiet_NaN());
    }
  }
  if (!best) throw AllFitsFailed("every lambda on the grid failed: " + last_error);
  best->bic_path = std::move(path);
  return *best;
}

inline FitResult select_lambda(const Dataset& data, PenaltyFamily family, std::vector<double> grid,
                               const HypothesisSpec& hyp, bool null_constrained, const SolverConfig& config) {
  return select_lambda(data, family, default_shape(family), std::move(grid), hyp, null_constrained, config);
}

}  // namespace mepois
