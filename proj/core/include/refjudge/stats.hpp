#pragma once

#include <cstdint>
#include <span>
#include <utility>

#include "refjudge/judge.hpp"

namespace refjudge {

inline constexpr int kDefaultResamples = 10000;
inline constexpr double kDefaultConfidence = 0.95;
inline constexpr std::uint64_t kDefaultSeed = 20240917;

struct BootstrapOptions {
  int n_resamples = kDefaultResamples;
  double confidence = kDefaultConfidence;
  std::uint64_t seed = kDefaultSeed;
};

struct AccuracyReport {
  double mean = 0.0;
  std::size_t n = 0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double parse_failure_rate = 0.0;
  int n_resamples = kDefaultResamples;
  double confidence = kDefaultConfidence;
  std::uint64_t seed = kDefaultSeed;
};

// Percentile bootstrap of the mean, linear interpolation between order
// statistics. Deterministic for a given seed.
std::pair<double, double> bootstrap_ci(std::span<const double> values, int n_resamples,
                                       double confidence, std::uint64_t seed);

AccuracyReport compute_accuracy(std::span<const EvalRecord> records, const BootstrapOptions& opts = {});
AccuracyReport summarize_credits(std::span<const double> credits, double parse_failure_rate,
                                 const BootstrapOptions& opts = {});

// One-sided paired bootstrap p-value for "method A is worse than method B":
// the share of resamples whose mean(A - B) is positive, zero counted half.
// Throws Misaligned unless both lists carry the same ids in the same order.
double paired_significance(std::span<const EvalRecord> records_a, std::span<const EvalRecord> records_b,
                           int n_resamples = kDefaultResamples, std::uint64_t seed = kDefaultSeed);

// Majority over non-failure verdicts; on a tie or no usable verdict, the
// reference-0 verdict (verdicts[0]) decides.
Verdict multi_ref_vote(std::span<const Verdict> verdicts);

enum class PointwiseOutcome { A, B, Tie };
PointwiseOutcome pointwise_compare(const PointScore& score_a, const PointScore& score_b);

// Per pass: 1 when both judges made the same non-failure decision. The mean
// over passes and instances.
double inter_judge_agreement(std::span<const EvalRecord> records_1, std::span<const EvalRecord> records_2);

double macro_average(std::span<const double> values);

}  // namespace refjudge
