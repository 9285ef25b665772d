#include "mepois/inference.hpp"
#include "mepois/simulation.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace mepois;

TEST(ChiSquare, SurvivalReferenceValues) {
  EXPECT_EQ(chisq_sf(0.0, 1), 1.0);
  EXPECT_EQ(chisq_sf(0.0, 7), 1.0);
  EXPECT_NEAR(chisq_sf(3.841459, 1), 0.05, 1e-4);
  EXPECT_NEAR(chisq_sf(9.487729, 4), 0.05, 1e-4);
  EXPECT_THROW(chisq_sf(-1.0, 1), InvalidArgument);
  EXPECT_THROW(chisq_sf(1.0, 0), InvalidArgument);
}

TEST(ChiSquare, MatchesClosedFormSums) {
  for (int df = 1; df <= 12; ++df) {
    for (double x : {1e-6, 0.01, 0.3, 1.0, 2.5, 5.0, 9.0, 17.0, 30.0, 60.0}) {
      const double ref = oracle::chisq_sf_closed(x, df);
      EXPECT_NEAR(chisq_sf(x, df), ref, 1e-12 * std::max(1.0, ref)) << "x=" << x << " df=" << df;
    }
  }
}

TEST(ChiSquare, QuantileInvertsSurvival) {
  EXPECT_NEAR(chisq_quantile_upper(0.05, 1), 3.841459, 1e-6);
  for (int df : {1, 2, 5}) EXPECT_NEAR(chisq_sf(chisq_quantile_upper(0.01, df), df), 0.01, 1e-12);
}

TEST(BhFdr, HandExamples) {
  EXPECT_EQ(bh_fdr({1.0, 1.0, 1.0}, 0.05), (std::vector<bool>{false, false, false}));
  EXPECT_EQ(bh_fdr({0.001, 0.02, 0.9}, 0.05), (std::vector<bool>{true, true, false}));
  EXPECT_EQ(bh_fdr({0.04, 0.04}, 0.05), (std::vector<bool>{true, true}));
  EXPECT_EQ(bh_fdr({0.9, 0.001, 0.02}, 0.05), (std::vector<bool>{false, true, true}));
  EXPECT_THROW(bh_fdr({1.5}, 0.05), InvalidArgument);
}

TEST(BhFdr, AgreesWithBruteForceAndIsMonotoneInQ) {
  std::mt19937_64 rng(50);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    std::vector<double> p(1 + k % 30);
    for (auto& v : p) v = std::pow(u(rng), 3.0);
    const auto lo = bh_fdr(p, 0.05);
    EXPECT_EQ(lo, oracle::bh_bruteforce(p, 0.05));
    const auto hi = bh_fdr(p, 0.2);
    for (std::size_t j = 0; j < p.size(); ++j) EXPECT_TRUE(!lo[j] || hi[j]);
  }
}

TEST(Psi, ScalarCase) {
  MatrixXd q(1, 1), s(1, 1);
  q << 2.0;
  s << 3.0;
  HypothesisSpec h = HypothesisSpec::single(0, 0.0);
  h.C(0, 0) = 1.5;
  const PsiFactor f = psi(s, q, h, {});
  EXPECT_NEAR(f.psi(0, 0), 1.5 * 1.5 * 3.0 / 4.0, 1e-14);
}

TEST(Psi, IdentityContrastWithoutSupport) {
  std::mt19937_64 rng(51);
  const MatrixXd q = oracle::random_spd(5, rng, 1.0) + MatrixXd::Identity(5, 5);
  const MatrixXd s = oracle::random_spd(5, rng, 1.0);
  HypothesisSpec h;
  h.C = MatrixXd::Identity(2, 2);
  h.t = VectorXd::Zero(2);
  h.M = {1, 3};
  const IndexSet idx{1, 3};
  const MatrixXd qi = gather(q, idx, idx).inverse();
  const MatrixXd expected = qi * gather(s, idx, idx) * qi;
  EXPECT_LT((psi(s, q, h, {}).psi - expected).norm(), 1e-12);
}

TEST(Psi, MatchesDenseOracle) {
  std::mt19937_64 rng(52);
  for (int k = 0; k < 10; ++k) {
    const MatrixXd q = oracle::random_spd(6, rng, 1.0) + 0.5 * MatrixXd::Identity(6, 6);
    const MatrixXd s = oracle::random_spd(6, rng, 1.0);
    const HypothesisSpec h = HypothesisSpec::sum_of({0, 4}, 0.0);
    const IndexSet support{2};
    const MatrixXd ref = oracle::dense_psi(s, q, h.C, {0, 4, 2});
    EXPECT_LT((psi(s, q, h, support).psi - ref).norm(), 1e-10);
  }
}

TEST(Psi, IndefiniteRestrictedHessianIsRejected) {
  MatrixXd q = MatrixXd::Identity(2, 2);
  q(1, 1) = -1.0;
  const MatrixXd s = MatrixXd::Identity(2, 2);
  EXPECT_THROW(psi(s, q, HypothesisSpec::single(0, 0.0), {1}), IllConditioned);
}

namespace {

struct Fixture {
  Dataset data;
  FitResult unconstrained, constrained;
};

Fixture fit_fixture(HypothesisId id, double h, std::uint64_t rep) {
  SimDesign d;
  d.hypothesis = id;
  d.h = h;
  Fixture f;
  f.data = simulate_dataset(d, rep);
  const HypothesisSpec hyp = hypothesis_spec(id, d.p);
  f.unconstrained = select_lambda(f.data, PenaltyFamily::Scad, default_lambda_grid(), hyp, false, SolverConfig{});
  f.constrained = select_lambda(f.data, PenaltyFamily::Scad, default_lambda_grid(), hyp, true, SolverConfig{});
  return f;
}

}  // namespace

TEST(Tests, PValueConsistentWithOwnCdf) {
  const Fixture f = fit_fixture(HypothesisId::H02, 0.0, 0);
  const HypothesisSpec hyp = hypothesis_spec(HypothesisId::H02, 50);
  for (const TestResult& r : {wald_statistic(f.data, hyp, f.unconstrained), score_statistic(f.data, hyp, f.constrained)}) {
    EXPECT_GE(r.statistic, 0.0);
    EXPECT_EQ(r.df, 1);
    EXPECT_NEAR(r.p_value, chisq_sf(r.statistic, 1), 1e-10);
    EXPECT_EQ(r.support.front(), 2);
  }
}

TEST(Tests, WaldIsZeroWhenHypothesisHoldsExactly) {
  const Fixture f = fit_fixture(HypothesisId::H02, 0.0, 1);
  HypothesisSpec hyp = hypothesis_spec(HypothesisId::H02, 50);
  hyp.t[0] = f.unconstrained.beta[2];
  const TestResult r = wald_statistic(f.data, hyp, f.unconstrained);
  EXPECT_EQ(r.statistic, 0.0);
  EXPECT_EQ(r.p_value, 1.0);
}

TEST(Tests, StatisticsInvariantToRowScaling) {
  const Fixture f = fit_fixture(HypothesisId::H04, 0.0, 2);
  const HypothesisSpec hyp = hypothesis_spec(HypothesisId::H04, 50);
  HypothesisSpec scaled = hyp;
  scaled.C *= 3.7;
  scaled.t *= 3.7;
  const double w1 = wald_statistic(f.data, hyp, f.unconstrained).statistic;
  const double w2 = wald_statistic(f.data, scaled, f.unconstrained).statistic;
  EXPECT_NEAR(w1, w2, 1e-8 * std::max(1.0, w1));
  const double s1 = score_statistic(f.data, hyp, f.constrained).statistic;
  const double s2 = score_statistic(f.data, scaled, f.constrained).statistic;
  EXPECT_NEAR(s1, s2, 1e-8 * std::max(1.0, s1));
}

TEST(Tests, ScoreIsZeroWhenGradientVanishesOnTestedSet) {
  // Tiny exact problem: everything tested, the constrained fit solved by plain
  // Newton to stationarity, so the restricted gradient is ~0.
  std::mt19937_64 rng(53);
  const Index n = 400, p = 3;
  const MatrixXd w = oracle::random_normal(n, p, rng, 0.7);
  VectorXd y(n);
  for (Index i = 0; i < n; ++i) y[i] = std::poisson_distribution<int>(std::exp(0.3 * w(i, 0)))(rng);
  const Dataset d(w, y, MatrixXd::Zero(p, p));
  HypothesisSpec hyp;
  hyp.C = MatrixXd::Identity(1, 3);
  hyp.C << 1, 0, 0;
  hyp.t = VectorXd::Zero(1);
  hyp.M = {0, 1, 2};
  FitResult fit;
  SolverConfig cfg;
  cfg.newton_tol = 1e-13;
  fit.beta = newton_subproblem(d, hyp, false, VectorXd::Zero(0), VectorXd::Zero(0), cfg, VectorXd::Zero(3));
  const TestResult r = score_statistic(d, hyp, fit);
  EXPECT_LT(r.statistic, 1e-12);
  EXPECT_NEAR(r.p_value, 1.0, 1e-6);
}

TEST(Tests, OneSidedPValue) {
  TestResult r;
  r.df = 1;
  r.statistic = 3.841459 * 1.0;
  r.signed_root = std::sqrt(r.statistic);
  EXPECT_NEAR(one_sided_p_value(r), 0.025, 1e-5);
  r.signed_root = -r.signed_root;
  EXPECT_NEAR(one_sided_p_value(r), 0.975, 1e-5);
  r.df = 2;
  EXPECT_THROW(one_sided_p_value(r), InvalidArgument);
}

TEST(Tests, AlternativeIsDetected) {
  InferenceOptions opt;
  SimDesign d;
  d.hypothesis = HypothesisId::H02;
  d.h = 0.6;
  const Dataset data = simulate_dataset(d, 4);
  const HypothesisSpec hyp = hypothesis_spec(HypothesisId::H02, d.p);
  EXPECT_LT(wald_test(data, hyp, opt).p_value, 0.01);
  EXPECT_LT(score_test(data, hyp, opt).p_value, 0.01);
}

TEST(Tests, RejectEmptyHypothesis) {
  SimDesign d;
  const Dataset data = simulate_dataset(d, 0);
  EXPECT_THROW(wald_test(data, HypothesisSpec::none()), InvalidArgument);
}
