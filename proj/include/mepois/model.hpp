#pragma once

// Noise-corrected Poisson loss for covariates observed with additive normal error.
//
//   L(b) = -1/n sum_i { Y_i W_i'b - exp(W_i'b - b'Omega b / 2) }
//
// The exp(-b'Omega b/2) factor makes the mean term conditionally unbiased for
// exp(X_i'b) given the true covariates, so L has the same expectation as the
// error-free negative log-likelihood.

#include "mepois/dataset.hpp"
#include "mepois/summation.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace mepois {

/// Largest exponent allowed inside exp() before Overflow is raised.
inline constexpr double kExponentGuard = 700.0;

namespace detail {

inline void guard_exponents(const VectorXd& eta, const char* where) {
  const double worst = eta.size() ? eta.maxCoeff() : 0.0;
  if (!(worst <= kExponentGuard)) {
    throw Overflow(std::string(where) + ": exponent " + std::to_string(worst) + " exceeds guard");
  }
}

/// Symmetric A' diag(w) A with w >= 0, stored with both triangles filled.
inline MatrixXd weighted_gram(const MatrixXd& a, const VectorXd& w) {
  const Index p = a.cols();
  MatrixXd out = blocked_sum(a.rows(), [&](Index start, Index len) -> MatrixXd {
    MatrixXd scaled = w.segment(start, len).cwiseSqrt().asDiagonal() * a.middleRows(start, len);
    MatrixXd g = MatrixXd::Zero(p, p);
    g.selfadjointView<Eigen::Lower>().rankUpdate(scaled.transpose());
    return g;
  });
  out.triangularView<Eigen::StrictlyUpper>() = out.transpose();
  return out;
}

inline VectorXd weighted_colsum(const MatrixXd& a, const VectorXd& w) {
  return blocked_sum(a.rows(), [&](Index start, Index len) -> VectorXd {
    return a.middleRows(start, len).transpose() * w.segment(start, len);
  });
}

}  // namespace detail

/// Per-observation pieces shared by the loss and its derivatives.
struct MeanTerms {
  VectorXd linear;      // W b
  VectorXd mean;        // exp(W b - b'Omega b / 2)
  VectorXd omega_beta;  // Omega b
  double quad = 0.0;    // b'Omega b
};

inline MeanTerms mean_terms(const Dataset& data, const VectorXd& beta) {
  check_coefficients(data, beta);
  MeanTerms t;
  t.linear = data.W * beta;
  t.omega_beta = data.Omega * beta;
  t.quad = beta.dot(t.omega_beta);
  VectorXd eta = t.linear.array() - 0.5 * t.quad;
  detail::guard_exponents(eta, "mean function");
  t.mean = eta.array().exp();
  return t;
}

inline double loss_from_terms(const Dataset& data, const MeanTerms& t) {
  const VectorXd contrib = data.Y.cwiseProduct(t.linear) - t.mean;
  return -kahan_sum(contrib) / static_cast<double>(data.n());
}

inline VectorXd gradient_from_terms(const Dataset& data, const MeanTerms& t) {
  const double n = static_cast<double>(data.n());
  const double mean_total = kahan_sum(t.mean);
  const VectorXd resid = data.Y - t.mean;
  return -(detail::weighted_colsum(data.W, resid) + mean_total * t.omega_beta) / n;
}

// Q(b) = 1/n sum_i m_i {(W_i - Omega b)(W_i - Omega b)' - Omega}
inline MatrixXd hessian_from_terms(const Dataset& data, const MeanTerms& t) {
  const double n = static_cast<double>(data.n());
  const double mean_total = kahan_sum(t.mean);
  const VectorXd wm = detail::weighted_colsum(data.W, t.mean);
  MatrixXd h = detail::weighted_gram(data.W, t.mean);
  const MatrixXd cross = wm * t.omega_beta.transpose();
  h -= cross + cross.transpose();
  h += mean_total * (t.omega_beta * t.omega_beta.transpose() - data.Omega);
  h /= n;
  // Exact symmetry as stored.
  h.triangularView<Eigen::StrictlyUpper>() = h.transpose();
  return h;
}

inline double loss(const Dataset& data, const VectorXd& beta) {
  return loss_from_terms(data, mean_terms(data, beta));
}

inline VectorXd gradient(const Dataset& data, const VectorXd& beta) {
  return gradient_from_terms(data, mean_terms(data, beta));
}

inline MatrixXd hessian(const Dataset& data, const VectorXd& beta) {
  return hessian_from_terms(data, mean_terms(data, beta));
}

/// Value, gradient and (optionally) Hessian from one pass over the data.
struct LossEvaluation {
  double value = 0.0;
  VectorXd grad;
  MatrixXd hess;
};

inline LossEvaluation evaluate(const Dataset& data, const VectorXd& beta, bool with_hessian) {
  const MeanTerms t = mean_terms(data, beta);
  LossEvaluation e;
  e.value = loss_from_terms(data, t);
  e.grad = gradient_from_terms(data, t);
  if (with_hessian) e.hess = hessian_from_terms(data, t);
  return e;
}

/// Residual-covariance estimator assembled from the closed-form moment expansion
/// (five terms, no use of Y). With m1 = exp(b'W - b'Ob/2), m2 = exp(2b'W - b'Ob)
/// and d = W - Ob:
///
///   1/n sum_i  m1 dd' - m2 (dd' + O/2) - m2 Ob d' - m2 d b'O + m2 dd'
///
/// The moment identities behind this expansion take E[m2 | X] = exp(2b'X), which
/// drops a factor exp(b'Ob); with Omega != 0 the result is biased and can be
/// indefinite. Kept for reproduction; residual_covariance() is the default.
inline MatrixXd sigma_hat_closed_form(const Dataset& data, const VectorXd& beta) {
  check_coefficients(data, beta);
  const double n = static_cast<double>(data.n());
  const VectorXd linear = data.W * beta;
  const VectorXd ob = data.Omega * beta;
  const double quad = beta.dot(ob);
  VectorXd eta2 = 2.0 * linear.array() - quad;
  detail::guard_exponents(eta2, "sigma_hat");
  const VectorXd m1 = (linear.array() - 0.5 * quad).exp();
  const VectorXd m2 = eta2.array().exp();
  const MatrixXd d = data.W.rowwise() - ob.transpose();

  const MatrixXd dd_m1 = detail::weighted_gram(d, m1);
  const MatrixXd dd_m2 = detail::weighted_gram(d, m2);
  const double m2_total = kahan_sum(m2);
  const VectorXd dm2 = detail::weighted_colsum(d, m2);

  MatrixXd s = dd_m1;                                  // m1 dd'
  s -= dd_m2 + 0.5 * m2_total * data.Omega;            // -m2 (dd' + O/2)
  s -= ob * dm2.transpose();                           // -m2 Ob d'
  s -= dm2 * ob.transpose();                           // -m2 d b'O
  s += dd_m2;                                          // +m2 dd'
  s /= n;
  return 0.5 * (s + s.transpose());
}

/// Sample second moment of the per-observation score residuals
/// r_i = Y_i W_i - exp(b'W_i - b'Ob/2)(W_i - Ob); the direct sample analogue of
/// Sigma(b) = E[r r'].
inline MatrixXd residual_covariance(const Dataset& data, const VectorXd& beta) {
  const MeanTerms t = mean_terms(data, beta);
  const MatrixXd d = data.W.rowwise() - t.omega_beta.transpose();
  const MatrixXd r = data.Y.asDiagonal() * data.W - t.mean.asDiagonal() * d;
  MatrixXd s = detail::weighted_gram(r, VectorXd::Ones(data.n()));
  s /= static_cast<double>(data.n());
  return 0.5 * (s + s.transpose());
}

enum class SigmaEstimator { Residual, ClosedForm };

inline MatrixXd sigma_hat(const Dataset& data, const VectorXd& beta,
                          SigmaEstimator kind = SigmaEstimator::Residual) {
  return kind == SigmaEstimator::Residual ? residual_covariance(data, beta)
                                          : sigma_hat_closed_form(data, beta);
}

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Monte Carlo estimate of E{exp(b'(x + U) - b'Omega b/2)} with U ~ N(0, Omega).
/// Should equal exp(b'x) for every x; used to check the correction.
inline MonteCarloEstimate corrected_score_oracle(const VectorXd& x, const VectorXd& beta,
                                                 const MatrixXd& omega, std::int64_t draws,
                                                 std::uint64_t seed) {
  if (draws < 1) throw InvalidArgument("draws must be >= 1");
  if (x.size() != beta.size() || omega.rows() != beta.size()) {
    throw DimensionMismatch("oracle dimensions disagree");
  }
  check_covariance(omega, "Omega");
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(omega);
  const MatrixXd root =
      eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  // Only b'U matters: it is N(0, b'Omega b).
  const VectorXd loading = root.transpose() * beta;
  const double shift = x.dot(beta) - 0.5 * beta.dot(omega * beta);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index dim = loading.size();
  double mean = 0.0;
  double m2 = 0.0;
  for (std::int64_t k = 1; k <= draws; ++k) {
    double bu = 0.0;
    for (Index j = 0; j < dim; ++j) {
      const double z = normal(rng);
      bu += loading[j] * z;
    }
    const double eta = shift + bu;
    if (eta > kExponentGuard) throw Overflow("oracle exponent exceeds guard");
    const double v = std::exp(eta);
    const double delta = v - mean;
    mean += delta / static_cast<double>(k);
    m2 += delta * (v - mean);
  }
  MonteCarloEstimate out;
  out.mean = mean;
  out.std_error = draws > 1 ? std::sqrt(m2 / static_cast<double>(draws - 1) / static_cast<double>(draws)) : 0.0;
  return out;
}

}  // namespace mepois
