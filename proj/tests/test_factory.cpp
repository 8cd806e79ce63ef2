#include <gtest/gtest.h>

#include "refjudge/errors.hpp"
#include "refjudge/factory.hpp"
#include "refjudge/jsonl.hpp"
#include "support.hpp"

namespace refjudge {
namespace {

using test::FnBackend;
using test::MatrixJudge;
using test::TempDir;
using test::tagged_pool;
using test::templates;

RoundRobinScore score_of(std::vector<double> wins) {
  RoundRobinScore s;
  s.wins = std::move(wins);
  return s;
}

TEST(ComparisonCredit, Cases) {
  EXPECT_EQ(comparison_credit(Decision::A, Decision::A), std::make_pair(1.0, 0.0));
  EXPECT_EQ(comparison_credit(Decision::B, Decision::B), std::make_pair(0.0, 1.0));
  EXPECT_EQ(comparison_credit(Decision::A, Decision::B), std::make_pair(0.5, 0.5));
  EXPECT_EQ(comparison_credit(Decision::ParseFailure, Decision::A), std::make_pair(0.5, 0.5));
  EXPECT_EQ(comparison_credit(Decision::ParseFailure, Decision::ParseFailure), std::make_pair(0.5, 0.5));
}

TEST(SelectPair, ArgmaxArgmin) {
  const auto pool = tagged_pool("p", 5);
  const auto sel = select_pair(score_of({4, 3, 2, 1, 0}), pool);
  const auto& pair = std::get<PreferencePairRecord>(sel);
  EXPECT_EQ(pair.chosen.sampling_index, 0);
  EXPECT_EQ(pair.rejected.sampling_index, 4);
  EXPECT_EQ(pair.chosen_score, 4);
  EXPECT_EQ(pair.rejected_score, 0);
}

TEST(SelectPair, FullyTiedIsSkip) {
  const auto pool = tagged_pool("p", 5);
  EXPECT_TRUE(std::holds_alternative<Skip>(select_pair(score_of({2, 2, 2, 2, 2}), pool)));
}

TEST(SelectPair, TieBreakLowestIndex) {
  const auto pool = tagged_pool("p", 5);
  const auto& pair = std::get<PreferencePairRecord>(select_pair(score_of({3, 3, 2, 1, 1}), pool));
  EXPECT_EQ(pair.chosen.sampling_index, 0);
  EXPECT_EQ(pair.rejected.sampling_index, 3);
}

std::vector<std::vector<int>> strict_order(int n) {
  // lower index always wins regardless of position
  std::vector<std::vector<int>> m(n, std::vector<int>(n, 2));
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y) m[x][y] = x < y ? 0 : 1;
  return m;
}

TEST(RoundRobin, StrictOrderAndCallBudget) {
  MatrixJudge judge(strict_order(5));
  Factory factory(judge, templates(), {2});
  const auto pool = tagged_pool("p", 5);
  const auto score = factory.round_robin_score(pool, ProtocolId::RefFreeOurs, nullptr, "judge");
  EXPECT_EQ(score.wins, (std::vector<double>{4, 3, 2, 1, 0}));
  EXPECT_EQ(score.comparisons, 10);
  EXPECT_EQ(judge.calls(), 20u);
  EXPECT_EQ(factory.judge_calls(), 20u);
  EXPECT_TRUE(score.flags.empty());
}

TEST(RoundRobin, AlwaysParseFailureSplitsEverything) {
  MatrixJudge judge(std::vector<std::vector<int>>(5, std::vector<int>(5, 2)));
  Factory factory(judge, templates(), {1});
  const auto pool = tagged_pool("p", 5);
  const auto score = factory.round_robin_score(pool, ProtocolId::LLMBarBase, nullptr, "judge");
  EXPECT_EQ(score.wins, std::vector<double>(5, 2.0));
  EXPECT_TRUE(std::holds_alternative<Skip>(select_pair(score, pool)));
}

TEST(RoundRobin, BackendFailuresAreFlaggedAndStillConserve) {
  FnBackend backend([](const ChatRequest&) -> std::string { throw BackendRefused(500, "down"); });
  Factory factory(backend, templates(), {1});
  const auto pool = tagged_pool("p", 4);
  const auto score = factory.round_robin_score(pool, ProtocolId::LLMBarBase, nullptr, "judge");
  EXPECT_EQ(score.comparisons, 6);
  EXPECT_EQ(score.flags.size(), 6u);
  double total = 0;
  for (double w : score.wins) total += w;
  EXPECT_EQ(total, 6.0);
}

TEST(RoundRobin, RejectsNonPairwiseAndMissingReferences) {
  MatrixJudge judge(strict_order(3));
  Factory factory(judge, templates());
  const auto pool = tagged_pool("p", 3);
  EXPECT_THROW(factory.round_robin_score(pool, ProtocolId::BasePoint, nullptr, "j"), PreconditionViolation);
  EXPECT_THROW(factory.round_robin_score(pool, ProtocolId::RefEval, nullptr, "j"), MissingSlot);
  EXPECT_EQ(judge.calls(), 0u);
}

FnBackend::Fn sampler() {
  return [](const ChatRequest& r) { return "sample " + std::to_string(sample_index(r.seed_tag)); };
}

TEST(Sampling, PoolOfFiveTagged) {
  std::vector<ChatRequest> seen;
  std::mutex mu;
  FnBackend backend([&](const ChatRequest& r) {
    std::lock_guard lock(mu);
    seen.push_back(r);
    return "sample " + std::to_string(sample_index(r.seed_tag));
  });
  Factory factory(backend, templates(), {3});
  const Instruction instr{"i", "Write a poem.", Dataset::Custom};
  const auto pool = factory.sample_candidates(instr, "policy", 5);
  ASSERT_EQ(pool.candidates.size(), 5u);
  for (int k = 0; k < 5; ++k) {
    EXPECT_EQ(pool.candidates[k].text, "sample " + std::to_string(k));
    EXPECT_EQ(pool.candidates[k].sampling_index, k);
    EXPECT_EQ(pool.candidates[k].source_model, "policy");
  }
  for (const auto& r : seen) {
    EXPECT_EQ(r.temperature, kSamplingTemperature);
    EXPECT_EQ(r.max_tokens, kGenerationMaxTokens);
  }
  EXPECT_EQ(factory.generation_calls(), 5u);
}

TEST(Sampling, MinimalAndInvalidPools) {
  FnBackend backend(sampler());
  Factory factory(backend, templates());
  const Instruction instr{"i", "Write.", Dataset::Custom};
  EXPECT_EQ(factory.sample_candidates(instr, "policy", 2).candidates.size(), 2u);
  EXPECT_THROW(factory.sample_candidates(instr, "policy", 1), PreconditionViolation);
}

TEST(Sampling, UnderfilledPool) {
  FnBackend backend([](const ChatRequest& r) -> std::string {
    if (sample_index(r.seed_tag) == 3) throw BackendExhausted(503, "gave up");
    return "ok";
  });
  Factory factory(backend, templates(), {1});
  const Instruction instr{"i", "Write.", Dataset::Custom};
  try {
    factory.sample_candidates(instr, "policy", 5);
    FAIL();
  } catch (const PoolUnderfilled& e) {
    EXPECT_EQ(e.obtained(), 4u);
  }
}

TEST(References, GenerationListsFailures) {
  FnBackend backend([](const ChatRequest& r) -> std::string {
    if (r.user.find("second") != std::string::npos) throw BackendExhausted(429, "gave up");
    EXPECT_EQ(r.temperature, 0.0);
    return "ref for " + r.model;
  });
  Factory factory(backend, templates(), {2});
  const std::vector<Instruction> instrs{{"a", "first", Dataset::Custom},
                                        {"b", "second", Dataset::Custom},
                                        {"c", "third", Dataset::Custom}};
  const auto gen = factory.generate_references(instrs, "gen");
  ASSERT_EQ(gen.sets.size(), 2u);
  EXPECT_EQ(gen.sets[0].instruction_id, "a");
  EXPECT_EQ(gen.sets[1].instruction_id, "c");
  EXPECT_EQ(gen.sets[0].references.size(), 1u);
  EXPECT_EQ(gen.sets[0].references[0].generator_model, "gen");
  ASSERT_EQ(gen.failures.size(), 1u);
  EXPECT_EQ(gen.failures[0].id, "b");
  EXPECT_TRUE(factory.generate_references({}, "gen").sets.empty());
}

PreferencePairRecord sample_pair(int k) {
  PreferencePairRecord p;
  p.instruction = {"ins-" + std::to_string(k), "prompt \"quoted\" ü " + std::to_string(k), Dataset::HREF};
  p.chosen = {"good\nanswer", "pol", 1};
  p.rejected = {"bad answer", "pol", 3};
  p.chosen_score = 3.5;
  p.rejected_score = 0.5;
  p.judge_protocol = ProtocolId::RefEval;
  return p;
}

TEST(DpoDataset, RoundTripAndSchema) {
  TempDir dir;
  const std::vector<PreferencePairRecord> pairs{sample_pair(1), sample_pair(2)};
  EXPECT_EQ(emit_dpo_dataset(pairs, dir / "dpo.jsonl"), 2u);
  const auto lines = jsonl::read_lines(dir / "dpo.jsonl");
  ASSERT_EQ(lines.size(), 2u);
  const auto doc = nlohmann::json::parse(lines[0]);
  for (const char* k : {"prompt", "chosen", "rejected", "chosen_score", "rejected_score", "meta"})
    EXPECT_TRUE(doc.contains(k)) << k;
  EXPECT_EQ(load_dpo_dataset(dir / "dpo.jsonl"), pairs);
}

TEST(DpoDataset, EmptyFile) {
  TempDir dir;
  EXPECT_EQ(emit_dpo_dataset({}, dir / "dpo.jsonl"), 0u);
  EXPECT_EQ(jsonl::read_text(dir / "dpo.jsonl"), "");
  EXPECT_TRUE(load_dpo_dataset(dir / "dpo.jsonl").empty());
}

SftExample sft(std::string instr, std::string ref) {
  return {{"id-" + instr.substr(0, 3), instr, Dataset::Custom}, {"id", {{std::move(ref), "g"}}}};
}

TEST(SftDataset, FilterIsInclusive) {
  TempDir dir;
  // 8 + 8 bytes = 4 tokens with the quarter-byte counter
  const std::vector<SftExample> ex{sft("12345678", "abcdefgh"), sft("123456789", "abcdefgh"), sft("a", "b")};
  const auto res = emit_sft_dataset(ex, dir / "sft.jsonl", 4);
  EXPECT_EQ(res.written, 2u);
  EXPECT_EQ(res.filtered, 1u);
  const auto lines = jsonl::read_lines(dir / "sft.jsonl");
  ASSERT_EQ(lines.size(), 2u);
  const auto doc = nlohmann::json::parse(lines[0]);
  EXPECT_EQ(doc["prompt"], "12345678");
  EXPECT_EQ(doc["completion"], "abcdefgh");
}

TEST(SftDataset, WordCounter) {
  TempDir dir;
  const std::vector<SftExample> ex{sft("one two", "three four five"), sft("one two", "three four")};
  const auto res = emit_sft_dataset(ex, dir / "sft.jsonl", 4, word_tokens);
  EXPECT_EQ(res.written, 1u);
  EXPECT_EQ(res.filtered, 1u);
  EXPECT_EQ(word_tokens("  a\tb \n c "), 3u);
  EXPECT_EQ(char_quarter_tokens(""), 0u);
  EXPECT_EQ(char_quarter_tokens("abcde"), 2u);
}

TEST(SftDataset, AllUnderLimit) {
  TempDir dir;
  const std::vector<SftExample> ex{sft("a", "b"), sft("c", "d"), sft("e", "f")};
  const auto res = emit_sft_dataset(ex, dir / "sft.jsonl");
  EXPECT_EQ(res.written, 3u);
  EXPECT_EQ(res.filtered, 0u);
}

}  // namespace
}  // namespace refjudge
