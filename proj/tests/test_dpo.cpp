#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "refjudge/dpo.hpp"
#include "refjudge/errors.hpp"

namespace refjudge {
namespace {

LogProbQuad quad_with_margin(double raw_margin) { return {raw_margin - 3.0, -3.0, 0.0, 0.0}; }

TEST(DpoLoss, ClosedForms) {
  EXPECT_NEAR(dpo_loss({-2, -2, -2, -2}, 0.1), std::log(2.0), 1e-12);
  EXPECT_NEAR(dpo_loss({-7, -5, -4, -2}, 0.37), std::log(2.0), 1e-12);
  EXPECT_NEAR(dpo_loss(quad_with_margin(std::log(3.0)), 1.0), std::log(4.0 / 3.0), 1e-12);
  EXPECT_NEAR(dpo_loss(quad_with_margin(std::log(3.0)), 1.0), 0.2876821, 1e-7);
  EXPECT_NEAR(dpo_loss(quad_with_margin(10.0), 0.1), std::log1p(std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(dpo_loss(quad_with_margin(10.0), 0.1), 0.3132617, 1e-7);
}

TEST(DpoLoss, MarginDefinition) {
  EXPECT_NEAR(dpo_margin({-1, -5, -2, -3}, 0.5), 0.5 * ((-1 + 2) - (-5 + 3)), 1e-15);
}

TEST(DpoLoss, RejectsBadInput) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_THROW(dpo_loss({nan, 0, 0, 0}, 0.1), NonFiniteInput);
  EXPECT_THROW(dpo_loss({0, -inf, 0, 0}, 0.1), NonFiniteInput);
  EXPECT_THROW(dpo_loss({0, 0, 0, 0}, nan), NonFiniteInput);
  EXPECT_THROW(dpo_loss({0, 0, 0, 0}, 0.0), PreconditionViolation);
  EXPECT_THROW(dpo_loss({0, 0, 0, 0}, -0.1), PreconditionViolation);
  EXPECT_THROW(dpo_grad({nan, 0, 0, 0}, 0.1), NonFiniteInput);
}

TEST(DpoLoss, StableAtExtremeMargins) {
  const double hi = dpo_loss(quad_with_margin(50.0), 1.0);
  const double lo = dpo_loss(quad_with_margin(-50.0), 1.0);
  EXPECT_TRUE(std::isfinite(hi));
  EXPECT_TRUE(std::isfinite(lo));
  EXPECT_GT(hi, 0.0);
  EXPECT_NEAR(hi, std::exp(-50.0), 1e-30);
  EXPECT_NEAR(lo, 50.0, 1e-12);
  EXPECT_TRUE(std::isfinite(neg_log_sigmoid(-1000.0)));
  EXPECT_NEAR(neg_log_sigmoid(-1000.0), 1000.0, 1e-9);
  EXPECT_EQ(sigmoid(-1000.0), 0.0);
  EXPECT_EQ(sigmoid(1000.0), 1.0);
  const auto g = dpo_grad(quad_with_margin(-50.0), 1.0);
  EXPECT_TRUE(std::isfinite(g.policy_chosen));
  EXPECT_NEAR(g.policy_chosen, -1.0, 1e-15);
}

TEST(DpoGrad, AtZeroMargin) {
  const auto g = dpo_grad({-1, -1, -1, -1}, 0.1);
  EXPECT_NEAR(g.policy_chosen, -0.05, 1e-15);
  EXPECT_NEAR(g.policy_rejected, 0.05, 1e-15);
  EXPECT_NEAR(g.ref_chosen, 0.05, 1e-15);
  EXPECT_NEAR(g.ref_rejected, -0.05, 1e-15);
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1e-12, std::max(std::abs(a), std::abs(b))); }

TEST(DpoGrad, MatchesCentralDifferences) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> lp(-60.0, 0.0);
  std::uniform_int_distribution<std::size_t> pick(0, kBetaGrid.size() - 1);
  for (int t = 0; t < 100; ++t) {
    const LogProbQuad q{lp(rng), lp(rng), lp(rng), lp(rng)};
    const double beta = kBetaGrid[pick(rng)];
    const auto g = dpo_grad(q, beta);
    const double h = 1e-4;
    auto fd = [&](double LogProbQuad::*field) {
      LogProbQuad up = q, down = q;
      up.*field += h;
      down.*field -= h;
      return (dpo_loss(up, beta) - dpo_loss(down, beta)) / (2 * h);
    };
    EXPECT_LT(rel_err(g.policy_chosen, fd(&LogProbQuad::lp_policy_chosen)), 1e-6);
    EXPECT_LT(rel_err(g.policy_rejected, fd(&LogProbQuad::lp_policy_rejected)), 1e-6);
    EXPECT_LT(rel_err(g.ref_chosen, fd(&LogProbQuad::lp_ref_chosen)), 1e-6);
    EXPECT_LT(rel_err(g.ref_rejected, fd(&LogProbQuad::lp_ref_rejected)), 1e-6);
  }
}

TEST(DpoGrad, ScalesLinearlyInBetaAtFixedZ) {
  for (double beta : kBetaGrid) {
    const double z = 0.7;
    const auto g = dpo_grad(quad_with_margin(z / beta), beta);
    const auto g1 = dpo_grad(quad_with_margin(z), 1.0);
    EXPECT_NEAR(g.policy_chosen, beta * g1.policy_chosen, 1e-12);
    EXPECT_NEAR(g.policy_rejected, beta * g1.policy_rejected, 1e-12);
  }
}

TEST(DpoProperties, MonotoneShiftInvariantSymmetricSigned) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> lp(-30.0, 0.0), shift(-10.0, 10.0);
  for (int t = 0; t < 500; ++t) {
    const LogProbQuad q{lp(rng), lp(rng), lp(rng), lp(rng)};
    const double beta = 0.1;
    const double base = dpo_loss(q, beta);
    EXPECT_GE(base, 0.0);

    LogProbQuad better = q;
    better.lp_policy_chosen += 1.0;
    EXPECT_LT(dpo_loss(better, beta), base);

    const double c = shift(rng);
    LogProbQuad shifted = q;
    shifted.lp_policy_chosen += c;
    shifted.lp_ref_chosen += c;
    EXPECT_NEAR(dpo_loss(shifted, beta), base, 1e-9);
    shifted = q;
    shifted.lp_policy_rejected += c;
    shifted.lp_ref_rejected += c;
    EXPECT_NEAR(dpo_loss(shifted, beta), base, 1e-9);

    const LogProbQuad swapped{q.lp_policy_rejected, q.lp_policy_chosen, q.lp_ref_rejected, q.lp_ref_chosen};
    EXPECT_NEAR(dpo_margin(swapped, beta), -dpo_margin(q, beta), 1e-12);
    EXPECT_GE(base + dpo_loss(swapped, beta), 2 * std::log(2.0) - 1e-12);

    const auto g = dpo_grad(q, beta);
    EXPECT_LT(g.policy_chosen, 0.0);
    EXPECT_GT(g.policy_rejected, 0.0);
  }
}

TEST(BatchLoss, Mean) {
  const std::vector<LogProbQuad> one{quad_with_margin(2.0)};
  EXPECT_DOUBLE_EQ(batch_loss(one, 0.1), dpo_loss(one[0], 0.1));
  const std::vector<LogProbQuad> two{quad_with_margin(2.0), quad_with_margin(-4.0)};
  const double expected = (dpo_loss(two[0], 0.1) + dpo_loss(two[1], 0.1)) / 2;
  EXPECT_NEAR(batch_loss(two, 0.1), expected, 1e-15);
  const std::vector<LogProbQuad> doubled{two[0], two[1], two[0], two[1]};
  EXPECT_NEAR(batch_loss(doubled, 0.1), expected, 1e-15);
  EXPECT_THROW(batch_loss(std::vector<LogProbQuad>{}, 0.1), EmptyInput);
}

TEST(QuadJson, RoundTrip) {
  const LogProbQuad q{-1.25, -2.5, -3.75, -0.125};
  const auto back = quad_from_json(to_json(q));
  EXPECT_EQ(back.lp_policy_chosen, q.lp_policy_chosen);
  EXPECT_EQ(back.lp_policy_rejected, q.lp_policy_rejected);
  EXPECT_EQ(back.lp_ref_chosen, q.lp_ref_chosen);
  EXPECT_EQ(back.lp_ref_rejected, q.lp_ref_rejected);
  EXPECT_EQ(to_json(q).dump(), R"({"lp_pc":-1.25,"lp_pr":-2.5,"lp_rc":-3.75,"lp_rr":-0.125})");
}

}  // namespace
}  // namespace refjudge
