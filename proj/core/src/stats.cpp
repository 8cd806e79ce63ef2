#include "refjudge/stats.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "refjudge/errors.hpp"

namespace refjudge {
namespace {

__extension__ typedef unsigned __int128 u128;

// Unbiased bounded draw (Lemire's multiply-shift with rejection).
class IndexSampler {
 public:
  IndexSampler(std::uint64_t seed, std::uint64_t bound) : rng_(seed), bound_(bound) {
    threshold_ = (0 - bound_) % bound_;
  }

  std::size_t operator()() {
    for (;;) {
      const u128 m = static_cast<u128>(rng_()) * bound_;
      if (static_cast<std::uint64_t>(m) >= threshold_) return static_cast<std::size_t>(m >> 64);
    }
  }

 private:
  std::mt19937_64 rng_;
  std::uint64_t bound_;
  std::uint64_t threshold_;
};

double quantile(std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

double mean_of(std::span<const double> values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

void require_aligned(std::span<const EvalRecord> a, std::span<const EvalRecord> b) {
  if (a.size() != b.size())
    throw Misaligned("record lists differ in length: " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].instance_id != b[i].instance_id)
      throw Misaligned("record " + std::to_string(i) + ": '" + a[i].instance_id + "' vs '" +
                       b[i].instance_id + "'");
}

}  // namespace

std::pair<double, double> bootstrap_ci(std::span<const double> values, int n_resamples,
                                       double confidence, std::uint64_t seed) {
  if (values.empty()) throw EmptyInput("bootstrap over no values");
  if (n_resamples < 1) throw PreconditionViolation("n_resamples must be >= 1");
  if (!(confidence > 0.0 && confidence < 1.0)) throw PreconditionViolation("confidence must be in (0,1)");

  const std::size_t n = values.size();
  IndexSampler draw(seed, n);
  std::vector<double> means(static_cast<std::size_t>(n_resamples));
  for (auto& m : means) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += values[draw()];
    m = sum / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  const double alpha = 1.0 - confidence;
  return {quantile(means, alpha / 2.0), quantile(means, 1.0 - alpha / 2.0)};
}

AccuracyReport summarize_credits(std::span<const double> credits, double parse_failure_rate,
                                 const BootstrapOptions& opts) {
  if (credits.empty()) throw EmptyInput("no records to summarize");
  AccuracyReport rep;
  rep.n = credits.size();
  rep.mean = mean_of(credits);
  auto [lo, hi] = bootstrap_ci(credits, opts.n_resamples, opts.confidence, opts.seed);
  rep.ci_low = std::min(lo, rep.mean);
  rep.ci_high = std::max(hi, rep.mean);
  rep.parse_failure_rate = parse_failure_rate;
  rep.n_resamples = opts.n_resamples;
  rep.confidence = opts.confidence;
  rep.seed = opts.seed;
  return rep;
}

AccuracyReport compute_accuracy(std::span<const EvalRecord> records, const BootstrapOptions& opts) {
  if (records.empty()) throw EmptyInput("no records to summarize");
  std::vector<double> credits;
  credits.reserve(records.size());
  std::size_t failed_passes = 0;
  for (const auto& r : records) {
    credits.push_back(r.credit);
    failed_passes += (r.swapped.forward.decision == Decision::ParseFailure) +
                     (r.swapped.backward.decision == Decision::ParseFailure);
  }
  const double rate = static_cast<double>(failed_passes) / (2.0 * static_cast<double>(records.size()));
  return summarize_credits(credits, rate, opts);
}

double paired_significance(std::span<const EvalRecord> records_a, std::span<const EvalRecord> records_b,
                           int n_resamples, std::uint64_t seed) {
  require_aligned(records_a, records_b);
  if (records_a.empty()) throw EmptyInput("no paired records");
  if (n_resamples < 1) throw PreconditionViolation("n_resamples must be >= 1");

  const std::size_t n = records_a.size();
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = records_a[i].credit - records_b[i].credit;

  // Credits are multiples of 0.5, so the sums are exact and the zero test is safe.
  IndexSampler draw(seed, n);
  double above = 0.0;
  for (int r = 0; r < n_resamples; ++r) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += diff[draw()];
    if (sum > 0.0) {
      above += 1.0;
    } else if (sum == 0.0) {
      above += 0.5;
    }
  }
  return above / static_cast<double>(n_resamples);
}

Verdict multi_ref_vote(std::span<const Verdict> verdicts) {
  if (verdicts.empty()) throw EmptyInput("vote over no verdicts");
  std::size_t a = 0, b = 0;
  for (const auto& v : verdicts) {
    a += v.decision == Decision::A;
    b += v.decision == Decision::B;
  }
  if (a == b) return verdicts.front();
  const Decision winner = a > b ? Decision::A : Decision::B;
  for (const auto& v : verdicts)
    if (v.decision == winner) return v;
  return verdicts.front();
}

PointwiseOutcome pointwise_compare(const PointScore& score_a, const PointScore& score_b) {
  if (score_a.score > score_b.score) return PointwiseOutcome::A;
  if (score_a.score < score_b.score) return PointwiseOutcome::B;
  return PointwiseOutcome::Tie;
}

double inter_judge_agreement(std::span<const EvalRecord> records_1, std::span<const EvalRecord> records_2) {
  require_aligned(records_1, records_2);
  if (records_1.empty()) throw EmptyInput("no paired records");
  auto same = [](Decision x, Decision y) { return x != Decision::ParseFailure && x == y; };
  double total = 0.0;
  for (std::size_t i = 0; i < records_1.size(); ++i) {
    const auto& s1 = records_1[i].swapped;
    const auto& s2 = records_2[i].swapped;
    total += 0.5 * same(s1.forward.decision, s2.forward.decision) +
             0.5 * same(s1.backward.decision, s2.backward.decision);
  }
  return total / static_cast<double>(records_1.size());
}

double macro_average(std::span<const double> values) {
  if (values.empty()) throw EmptyInput("macro average over no values");
  return mean_of(values);
}

}  // namespace refjudge
