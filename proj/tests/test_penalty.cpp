#include "mepois/penalty.hpp"
#include "support/checks.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mepois;

TEST(Penalty, ScadClosedFormValues) {
  const PenaltySpec s = PenaltySpec::scad(1.0, 3.7);
  EXPECT_EQ(rho(s, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(rho(s, 10.0), 2.35);
  EXPECT_DOUBLE_EQ(rho(s, 0.5), 0.5);
  EXPECT_EQ(rho_prime(s, 5.0), 0.0);
  EXPECT_DOUBLE_EQ(rho_prime(s, 0.5), 1.0);
  EXPECT_NEAR(rho_prime(s, 2.0), 1.7 / 2.7, 1e-15);
  EXPECT_EQ(q_lambda(s, 0.0), 0.0);
  EXPECT_EQ(q_lambda(s, 0.5), 0.0);
  EXPECT_NEAR(q_lambda(s, 10.0), 7.65, 1e-14);
}

TEST(Penalty, McpClosedFormValues) {
  const PenaltySpec s = PenaltySpec::mcp(1.0, 3.0);
  EXPECT_DOUBLE_EQ(rho(s, 1.0), 1.0 - 1.0 / 6.0);
  EXPECT_DOUBLE_EQ(rho(s, 7.0), 1.5);
  EXPECT_DOUBLE_EQ(rho_prime(s, 1.5), 0.5);
  EXPECT_EQ(rho_prime(s, 3.0), 0.0);
}

TEST(Penalty, WeakConvexityConstants) {
  EXPECT_DOUBLE_EQ(PenaltySpec::scad(1.0, 3.7).mu(), 1.0 / 2.7);
  EXPECT_DOUBLE_EQ(PenaltySpec::mcp(0.5, 3.0).mu(), 1.0 / 3.0);
}

TEST(Penalty, RejectsInvalidParameters) {
  EXPECT_THROW(PenaltySpec::scad(0.0), InvalidArgument);
  EXPECT_THROW(PenaltySpec::scad(1.0, 2.0), InvalidArgument);
  EXPECT_THROW(PenaltySpec::mcp(1.0, 1.0), InvalidArgument);
  EXPECT_THROW(parse_penalty_family("lasso"), InvalidArgument);
  EXPECT_EQ(parse_penalty_family("MCP"), PenaltyFamily::Mcp);
}

TEST(PenaltyAxioms, ScadDefault) {
  const auto f = checks::penalty_axioms(PenaltySpec::scad(1.0, 3.7));
  EXPECT_TRUE(f.empty()) << f.front();
}

TEST(PenaltyAxioms, McpDefault) {
  const auto f = checks::penalty_axioms(PenaltySpec::mcp(1.0, 3.0));
  EXPECT_TRUE(f.empty()) << f.front();
}

TEST(PenaltyAxioms, OtherParameters) {
  for (const auto& s : {PenaltySpec::scad(0.3, 2.5), PenaltySpec::scad(2.0, 6.0), PenaltySpec::mcp(0.2, 1.5),
                        PenaltySpec::mcp(1.7, 8.0)}) {
    const auto f = checks::penalty_axioms(s, 4);
    EXPECT_TRUE(f.empty()) << f.front();
  }
}

TEST(Prox, ScadReferenceValues) {
  const PenaltySpec s = PenaltySpec::scad(1.0, 3.7);
  EXPECT_EQ(prox(s, 0.5, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(prox(s, 1.5, 1.0), 0.5);
  EXPECT_EQ(prox(s, 5.0, 1.0), 5.0);
  EXPECT_DOUBLE_EQ(prox(s, -1.5, 1.0), -0.5);
  // middle zone: (2.7 * 3 - 3.7) / 1.7
  EXPECT_NEAR(prox(s, 3.0, 1.0), (2.7 * 3.0 - 3.7) / 1.7, 1e-15);
}

TEST(Prox, ContinuousAcrossZoneBoundaries) {
  for (const auto& s : {PenaltySpec::scad(1.0, 3.7), PenaltySpec::mcp(1.0, 3.0)}) {
    for (double w : {0.5, 1.0, 4.0}) {
      const double edges[] = {s.lambda / w, s.lambda * (1.0 + 1.0 / w), s.shape * s.lambda};
      for (double e : edges) {
        EXPECT_NEAR(prox(s, e - 1e-10, w), prox(s, e + 1e-10, w), 1e-8) << checks::describe(s) << " w=" << w;
      }
    }
  }
}

TEST(Prox, BeatsGridOracle) {
  const auto scad = checks::prox_against_grid(PenaltyFamily::Scad, 3.7, 200, 31);
  EXPECT_TRUE(scad.empty()) << scad.front();
  const auto mcp = checks::prox_against_grid(PenaltyFamily::Mcp, 3.0, 200, 32);
  EXPECT_TRUE(mcp.empty()) << mcp.front();
}

TEST(Prox, RefusesNonConvexWeight) {
  const PenaltySpec s = PenaltySpec::scad(1.0, 3.7);
  EXPECT_THROW(prox(s, 1.0, s.mu()), NonConvexProx);
  EXPECT_THROW(prox(PenaltySpec::mcp(1.0, 3.0), 1.0, 0.2), NonConvexProx);
}
