#include "mepois/model.hpp"
#include "mepois/summation.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace mepois;

namespace {

Dataset scalar_data(double w, double y, double omega) {
  return Dataset(MatrixXd::Constant(1, 1, w), VectorXd::Constant(1, y), MatrixXd::Constant(1, 1, omega));
}

Dataset random_dataset(Index n, Index p, std::mt19937_64& rng, double omega_scale = 0.1) {
  MatrixXd w = oracle::random_normal(n, p, rng, 0.5);
  std::poisson_distribution<int> pois(1.0);
  VectorXd y(n);
  for (Index i = 0; i < n; ++i) y[i] = pois(rng);
  return Dataset(std::move(w), std::move(y), oracle::random_spd(p, rng, omega_scale));
}

}  // namespace

TEST(Loss, IsOneAtZero) {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 5; ++k) {
    const Dataset d = random_dataset(17 + k, 4, rng);
    EXPECT_DOUBLE_EQ(loss(d, VectorXd::Zero(4)), 1.0);
  }
}

TEST(Loss, HandValues) {
  EXPECT_NEAR(loss(scalar_data(1, 2, 0), VectorXd::Constant(1, 0.1)), std::exp(0.1) - 0.2, 1e-15);
  EXPECT_NEAR(loss(scalar_data(1, 0, 1), VectorXd::Constant(1, 1.0)), std::exp(0.5), 1e-15);
}

TEST(Loss, MatchesPlainLoop) {
  std::mt19937_64 rng(11);
  const Dataset d = random_dataset(40, 6, rng);
  const VectorXd b = oracle::random_normal(6, rng, 0.4);
  EXPECT_NEAR(loss(d, b), oracle::corrected_loss(d.W, d.Y, d.Omega, b), 1e-13);
}

TEST(Loss, OverflowGuard) {
  const Dataset d = scalar_data(1, 0, 0);
  EXPECT_THROW(loss(d, VectorXd::Constant(1, 701.0)), Overflow);
  EXPECT_NO_THROW(loss(d, VectorXd::Constant(1, 699.0)));
}

TEST(Loss, RejectsBadShapes) {
  const Dataset d = scalar_data(1, 0, 0);
  EXPECT_THROW(loss(d, VectorXd::Zero(2)), DimensionMismatch);
  EXPECT_THROW(Dataset(MatrixXd::Ones(2, 2), VectorXd::Ones(3), MatrixXd::Zero(2, 2)), DimensionMismatch);
  EXPECT_THROW(Dataset(MatrixXd::Ones(1, 1), VectorXd::Constant(1, 0.5), MatrixXd::Zero(1, 1)), InvalidArgument);
  EXPECT_THROW(Dataset(MatrixXd::Ones(1, 2), VectorXd::Ones(1), (MatrixXd(2, 2) << 1, 0.5, 0, 1).finished()),
               InvalidArgument);
  EXPECT_THROW(Dataset(MatrixXd::Ones(1, 1), VectorXd::Ones(1), MatrixXd::Constant(1, 1, -1.0)), InvalidArgument);
}

TEST(Gradient, HandValues) {
  EXPECT_NEAR(gradient(scalar_data(1, 0, 1), VectorXd::Constant(1, 1.0))[0], 0.0, 1e-15);
  std::mt19937_64 rng(5);
  const Dataset d = random_dataset(25, 3, rng);
  const VectorXd expected = -(d.W.transpose() * (d.Y.array() - 1.0).matrix()) / 25.0;
  EXPECT_LT((gradient(d, VectorXd::Zero(3)) - expected).norm(), 1e-14);
}

TEST(Gradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(20);
  for (int k = 0; k < 20; ++k) {
    const Index n = 20 + k, p = 2 + k % 8;
    const Dataset d = random_dataset(n, p, rng);
    const VectorXd b = oracle::random_normal(p, rng, 0.5);
    const VectorXd fd = oracle::central_gradient([&](const VectorXd& x) { return loss(d, x); }, b);
    EXPECT_LT((gradient(d, b) - fd).norm() / fd.norm(), 1e-6) << "instance " << k;
  }
}

TEST(Hessian, HandValuesAndZeroBeta) {
  EXPECT_NEAR(hessian(scalar_data(1, 0, 1), VectorXd::Constant(1, 1.0))(0, 0), -std::exp(0.5), 1e-14);
  std::mt19937_64 rng(6);
  const Dataset d = random_dataset(30, 4, rng);
  const MatrixXd expected = d.W.transpose() * d.W / 30.0 - d.Omega;
  EXPECT_LT((hessian(d, VectorXd::Zero(4)) - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Hessian, MatchesFiniteDifferencesAndIsSymmetric) {
  std::mt19937_64 rng(21);
  for (int k = 0; k < 20; ++k) {
    const Index n = 20 + k, p = 2 + k % 8;
    const Dataset d = random_dataset(n, p, rng);
    const VectorXd b = oracle::random_normal(p, rng, 0.5);
    const MatrixXd h = hessian(d, b);
    const MatrixXd fd = oracle::central_jacobian([&](const VectorXd& x) { return gradient(d, x); }, b);
    EXPECT_LT((h - fd).cwiseAbs().maxCoeff(), 1e-5);
    EXPECT_EQ((h - h.transpose()).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Evaluate, AgreesWithSeparateCalls) {
  std::mt19937_64 rng(8);
  const Dataset d = random_dataset(50, 5, rng);
  const VectorXd b = oracle::random_normal(5, rng, 0.3);
  const LossEvaluation e = evaluate(d, b, true);
  EXPECT_DOUBLE_EQ(e.value, loss(d, b));
  EXPECT_LT((e.grad - gradient(d, b)).norm(), 1e-15);
  EXPECT_LT((e.hess - hessian(d, b)).norm(), 1e-14);
}

TEST(SigmaHat, ClosedFormWithoutErrorIsPoissonInformation) {
  std::mt19937_64 rng(9);
  Dataset d = random_dataset(60, 4, rng).without_error();
  const VectorXd b = oracle::random_normal(4, rng, 0.3);
  const VectorXd mu = (d.W * b).array().exp();
  const MatrixXd info = d.W.transpose() * mu.asDiagonal() * d.W / 60.0;
  EXPECT_LT((sigma_hat(d, b, SigmaEstimator::ClosedForm) - info).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SigmaHat, ClosedFormHandEvaluationAtZero) {
  // beta = 0, Omega = I, one observation w: m1 = m2 = 1, d = w, the five terms reduce to
  // w w' - (w w' + I/2) - 0 - 0 + w w' = w w' - I/2.
  const Eigen::Vector2d w(0.3, -1.2);
  const Dataset d(w.transpose(), VectorXd::Constant(1, 2.0), MatrixXd::Identity(2, 2));
  const MatrixXd expected = w * w.transpose() - 0.5 * MatrixXd::Identity(2, 2);
  EXPECT_LT((sigma_hat(d, VectorXd::Zero(2), SigmaEstimator::ClosedForm) - expected).norm(), 1e-14);
}

TEST(SigmaHat, SymmetricOutput) {
  std::mt19937_64 rng(10);
  const Dataset d = random_dataset(80, 5, rng);
  const VectorXd b = oracle::random_normal(5, rng, 0.3);
  for (auto kind : {SigmaEstimator::Residual, SigmaEstimator::ClosedForm}) {
    const MatrixXd s = sigma_hat(d, b, kind);
    EXPECT_LE((s - s.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(SigmaHat, MatchesResidualCovarianceInLargeSample) {
  std::mt19937_64 rng(12);
  const Index n = 50000, p = 3;
  const Eigen::Vector3d beta(0.4, -0.3, 0.2);
  const MatrixXd omega = 0.1 * MatrixXd::Identity(p, p);
  const MatrixXd x = oracle::random_normal(n, p, rng, std::sqrt(0.5));
  const MatrixXd w = x + oracle::random_normal(n, p, rng, std::sqrt(0.1));
  VectorXd y(n);
  for (Index i = 0; i < n; ++i) y[i] = std::poisson_distribution<int>(std::exp(x.row(i).dot(beta)))(rng);
  const Dataset d(w, y, omega);

  const double quad = beta.dot(omega * beta);
  MatrixXd r(n, p);
  for (Index i = 0; i < n; ++i) {
    const Eigen::RowVectorXd wi = w.row(i);
    const double e = std::exp(wi.dot(beta) - 0.5 * quad);
    r.row(i) = y[i] * wi - e * (wi - (omega * beta).transpose());
  }
  const MatrixXd centered = r.rowwise() - r.colwise().mean();
  const MatrixXd empirical = centered.transpose() * centered / static_cast<double>(n - 1);
  const MatrixXd s = sigma_hat(d, beta);
  EXPECT_LT((s - empirical).norm() / empirical.norm(), 0.05);
}

TEST(CorrectedScoreOracle, ExactWithoutError) {
  const Eigen::Vector2d x(0.3, -0.1), b(1.0, 2.0);
  const MonteCarloEstimate e = corrected_score_oracle(x, b, MatrixXd::Zero(2, 2), 10, 1);
  EXPECT_DOUBLE_EQ(e.mean, std::exp(x.dot(b)));
}

TEST(CorrectedScoreOracle, UnbiasedScalarCase) {
  const MonteCarloEstimate e =
      corrected_score_oracle(VectorXd::Ones(1), VectorXd::Ones(1), MatrixXd::Ones(1, 1), 1000000, 7);
  EXPECT_LT(std::abs(e.mean - std::exp(1.0)), 3.0 * e.std_error);
}

TEST(CorrectedScoreOracle, UnbiasedTwoDimensional) {
  const Eigen::Vector2d x(0.5, 0.5), b(1.0, -1.0);
  const MonteCarloEstimate e = corrected_score_oracle(x, b, 0.1 * MatrixXd::Identity(2, 2), 1000000, 8);
  EXPECT_LT(std::abs(e.mean - 1.0), 3.0 * e.std_error);
}

TEST(Summation, KahanBeatsNaiveOnIllConditionedSum) {
  VectorXd v(3);
  v << 1e16, 1.0, -1e16;
  EXPECT_EQ(kahan_sum(v), 1.0);
}

TEST(Summation, LargeLossAgreesWithLongDouble) {
  std::mt19937_64 rng(13);
  const Dataset d = random_dataset(20000, 2, rng, 0.05);
  const VectorXd b = Eigen::Vector2d(0.2, -0.1);
  long double s = 0.0L;
  const double quad = b.dot(d.Omega * b);
  for (Index i = 0; i < d.n(); ++i) {
    const long double eta = d.W.row(i).dot(b);
    s += static_cast<long double>(d.Y[i]) * eta - std::exp(eta - 0.5L * quad);
  }
  const double ref = static_cast<double>(-s / d.n());
  EXPECT_NEAR(loss(d, b), ref, 1e-12 * std::abs(ref));
}
