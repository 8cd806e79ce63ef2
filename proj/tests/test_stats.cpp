#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "refjudge/errors.hpp"
#include "refjudge/stats.hpp"

namespace refjudge {
namespace {

EvalRecord record(std::string id, double credit, Decision f = Decision::A, Decision b = Decision::A) {
  EvalRecord r;
  r.instance_id = std::move(id);
  r.credit = credit;
  r.swapped = {{f, ""}, {b, ""}};
  return r;
}

std::vector<EvalRecord> records_with(const std::vector<double>& credits) {
  std::vector<EvalRecord> out;
  for (std::size_t i = 0; i < credits.size(); ++i) out.push_back(record("r" + std::to_string(i), credits[i]));
  return out;
}

TEST(Accuracy, Means) {
  EXPECT_DOUBLE_EQ(compute_accuracy(records_with({1, 1, 1, 1})).mean, 1.0);
  EXPECT_DOUBLE_EQ(compute_accuracy(records_with({1, 0.5})).mean, 0.75);
  EXPECT_THROW(compute_accuracy(std::vector<EvalRecord>{}), EmptyInput);
}

TEST(Accuracy, ParseFailureRateCountsPasses) {
  std::vector<EvalRecord> recs{record("a", 0.5, Decision::A, Decision::ParseFailure),
                               record("b", 0, Decision::ParseFailure, Decision::ParseFailure),
                               record("c", 1), record("d", 1)};
  const auto rep = compute_accuracy(recs);
  EXPECT_DOUBLE_EQ(rep.parse_failure_rate, 3.0 / 8.0);
  EXPECT_EQ(rep.n, 4u);
  EXPECT_EQ(rep.seed, kDefaultSeed);
  EXPECT_EQ(rep.n_resamples, kDefaultResamples);
}

TEST(Accuracy, MacroAverageOfTableRow) {
  const std::vector<double> row{0.868, 0.749, 0.767, 0.745, 0.827};
  EXPECT_NEAR(macro_average(row), 0.7912, 1e-12);
  EXPECT_THROW(macro_average(std::vector<double>{}), EmptyInput);
}

TEST(Bootstrap, DegenerateDistribution) {
  const std::vector<double> ones(40, 1.0);
  const auto [lo, hi] = bootstrap_ci(ones, 1000, 0.95, 1);
  EXPECT_EQ(lo, 1.0);
  EXPECT_EQ(hi, 1.0);
}

TEST(Bootstrap, DeterministicForSeed) {
  std::vector<double> v;
  for (int i = 0; i < 57; ++i) v.push_back(std::fmod(i * 0.6180339887, 1.0));
  EXPECT_EQ(bootstrap_ci(v, 2000, 0.95, 5), bootstrap_ci(v, 2000, 0.95, 5));
  EXPECT_NE(bootstrap_ci(v, 2000, 0.95, 5), bootstrap_ci(v, 2000, 0.95, 6));
}

TEST(Bootstrap, WiderConfidenceNeverNarrows) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::vector<double> v;
    for (int i = 0; i < 30 + static_cast<int>(seed); ++i) v.push_back(((i * seed) % 5) / 4.0);
    const auto [l90, h90] = bootstrap_ci(v, 1000, 0.90, seed);
    const auto [l95, h95] = bootstrap_ci(v, 1000, 0.95, seed);
    EXPECT_LE(l95, l90);
    EXPECT_GE(h95, h90);
  }
}

TEST(Bootstrap, IntervalContainsMean) {
  const std::vector<double> v{0, 0, 0, 1};
  const auto [lo, hi] = bootstrap_ci(v, 500, 0.95, 3);
  EXPECT_LE(lo, 0.25);
  EXPECT_GE(hi, 0.25);
  EXPECT_GE(lo, 0.0);
  EXPECT_LE(hi, 1.0);
}

TEST(Bootstrap, RejectsBadArguments) {
  const std::vector<double> v{1, 0};
  EXPECT_THROW(bootstrap_ci(std::vector<double>{}, 100, 0.95, 1), EmptyInput);
  EXPECT_THROW(bootstrap_ci(v, 0, 0.95, 1), PreconditionViolation);
  EXPECT_THROW(bootstrap_ci(v, 100, 1.0, 1), PreconditionViolation);
  EXPECT_THROW(bootstrap_ci(v, 100, 0.0, 1), PreconditionViolation);
}

TEST(Significance, IdenticalListsGiveNoSignal) {
  const auto a = records_with({1, 0.5, 0, 1, 1, 0.5});
  const double p = paired_significance(a, a, 2000, 1);
  EXPECT_GT(p, 0.05);
  EXPECT_DOUBLE_EQ(p, 0.5);
}

TEST(Significance, ExtremeSeparation) {
  const auto a = records_with(std::vector<double>(50, 0.0));
  const auto b = records_with(std::vector<double>(50, 1.0));
  EXPECT_LT(paired_significance(a, b, 10000, 1), 0.001);
}

TEST(Significance, UnderpoweredFlip) {
  const auto a = records_with({1, 1, 0});
  const auto b = records_with({1, 1, 1});
  EXPECT_GT(paired_significance(a, b, 10000, 1), 0.05);
}

TEST(Significance, MisalignedInputs) {
  const auto a = records_with({1, 1});
  const auto b = records_with({1, 1, 1});
  EXPECT_THROW(paired_significance(a, b, 100, 1), Misaligned);
  auto c = records_with({1, 1});
  c[1].instance_id = "other";
  EXPECT_THROW(paired_significance(a, c, 100, 1), Misaligned);
}

Verdict v(Decision d) { return {d, ""}; }

TEST(Vote, Examples) {
  using D = Decision;
  const std::vector<Verdict> aab{v(D::A), v(D::A), v(D::B)};
  EXPECT_EQ(multi_ref_vote(aab).decision, D::A);
  const std::vector<Verdict> apb{v(D::A), v(D::ParseFailure), v(D::B)};
  EXPECT_EQ(multi_ref_vote(apb).decision, D::A);
  const std::vector<Verdict> bbb{v(D::B), v(D::B), v(D::B)};
  EXPECT_EQ(multi_ref_vote(bbb).decision, D::B);
  const std::vector<Verdict> ppp{v(D::ParseFailure), v(D::ParseFailure), v(D::ParseFailure)};
  EXPECT_EQ(multi_ref_vote(ppp).decision, D::ParseFailure);
  const std::vector<Verdict> pab{v(D::ParseFailure), v(D::A), v(D::B)};
  EXPECT_EQ(multi_ref_vote(pab).decision, D::ParseFailure);
  const std::vector<Verdict> pbb{v(D::ParseFailure), v(D::B), v(D::B)};
  EXPECT_EQ(multi_ref_vote(pbb).decision, D::B);
  EXPECT_THROW(multi_ref_vote(std::vector<Verdict>{}), EmptyInput);
}

TEST(Pointwise, Compare) {
  EXPECT_EQ(pointwise_compare({5, ""}, {3, ""}), PointwiseOutcome::A);
  EXPECT_EQ(pointwise_compare({4, ""}, {4, ""}), PointwiseOutcome::Tie);
  EXPECT_EQ(pointwise_compare({1, ""}, {2, ""}), PointwiseOutcome::B);
}

std::vector<EvalRecord> stream(const std::vector<Decision>& ds) {
  std::vector<EvalRecord> out;
  for (std::size_t i = 0; i < ds.size(); ++i) out.push_back(record("s" + std::to_string(i), 0, ds[i], ds[i]));
  return out;
}

TEST(Agreement, Examples) {
  using D = Decision;
  const auto j1 = stream({D::A, D::A, D::B, D::B});
  const auto j2 = stream({D::A, D::B, D::B, D::A});
  EXPECT_DOUBLE_EQ(inter_judge_agreement(j1, j1), 1.0);
  EXPECT_DOUBLE_EQ(inter_judge_agreement(j1, j2), 0.5);
  EXPECT_DOUBLE_EQ(inter_judge_agreement(j2, j1), 0.5);
  const auto pf = stream({D::ParseFailure, D::A, D::B, D::B});
  EXPECT_DOUBLE_EQ(inter_judge_agreement(pf, pf), 0.75);
  EXPECT_THROW(inter_judge_agreement(j1, stream({D::A})), Misaligned);
  EXPECT_THROW(inter_judge_agreement(std::vector<EvalRecord>{}, std::vector<EvalRecord>{}), EmptyInput);
}

TEST(Agreement, MacroAverageOfTableRow) {
  const std::vector<double> row{85.31, 77.61, 82.42, 79.69, 81.83};
  EXPECT_NEAR(macro_average(row), 81.372, 1e-9);
}

}  // namespace
}  // namespace refjudge
