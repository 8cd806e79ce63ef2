#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "refjudge/backend.hpp"
#include "refjudge/corpus.hpp"
#include "refjudge/protocol.hpp"

namespace refjudge {

inline constexpr int kDefaultCandidates = 5;
inline constexpr std::size_t kDefaultSftMaxTokens = 2048;

struct CandidatePool {
  Instruction instruction;
  std::vector<CandidateOutput> candidates;  // sampling_index 0..n-1, in order
  std::string policy_model;
};

struct RoundRobinScore {
  std::vector<double> wins;  // indexed like the pool
  int comparisons = 0;
  ProtocolId protocol = ProtocolId::RefEval;
  std::vector<std::string> flags;  // comparisons whose calls failed
};

struct PreferencePairRecord {
  Instruction instruction;
  CandidateOutput chosen;
  CandidateOutput rejected;
  double chosen_score = 0.0;
  double rejected_score = 0.0;
  ProtocolId judge_protocol = ProtocolId::RefEval;

  bool operator==(const PreferencePairRecord& o) const;
};

struct Skip {};
using PairSelection = std::variant<PreferencePairRecord, Skip>;

struct ItemFailure {
  std::string id;
  std::string message;
};

struct ReferenceGeneration {
  std::vector<ReferenceSet> sets;
  std::vector<ItemFailure> failures;
};

struct PoolFailure {
  std::string id;
  std::size_t obtained = 0;
  std::string message;
};

struct PoolSampling {
  std::vector<CandidatePool> pools;
  std::vector<PoolFailure> failures;  // underfilled pools, dropped
};

// Credit for one swapped comparison of candidates i (shown first) and j,
// given both passes in the original frame: (credit_i, credit_j).
std::pair<double, double> comparison_credit(Decision forward, Decision backward);

// argmax / argmin of wins, lowest index on ties; Skip when every candidate
// has the same score.
PairSelection select_pair(const RoundRobinScore& score, const CandidatePool& pool);

struct FactoryOptions {
  int parallelism = 8;
  int max_tokens = kGenerationMaxTokens;
};

class Factory {
 public:
  Factory(ChatBackend& backend, const TemplateStore& templates, FactoryOptions options = {});

  // Greedy, one reference per instruction.
  ReferenceGeneration generate_references(std::span<const Instruction> instructions,
                                          const std::string& generator_model);

  // n calls tagged "sample-<k>". Throws PoolUnderfilled when any call fails.
  CandidatePool sample_candidates(const Instruction& instruction, const std::string& policy_model, int n,
                                  double temperature = kSamplingTemperature);
  PoolSampling sample_pools(std::span<const Instruction> instructions, const std::string& policy_model,
                            int n, double temperature = kSamplingTemperature);

  RoundRobinScore round_robin_score(const CandidatePool& pool, ProtocolId protocol,
                                    const ReferenceSet* refs, const std::string& judge_model);
  // refs[i] belongs to pools[i]; entries may be null for reference-free protocols.
  std::vector<RoundRobinScore> round_robin_scores(std::span<const CandidatePool> pools, ProtocolId protocol,
                                                  std::span<const ReferenceSet* const> refs,
                                                  const std::string& judge_model);

  std::uint64_t judge_calls() const { return judge_calls_; }
  std::uint64_t generation_calls() const { return generation_calls_; }

 private:
  ChatBackend& backend_;
  const TemplateStore& templates_;
  FactoryOptions options_;
  std::uint64_t judge_calls_ = 0;
  std::uint64_t generation_calls_ = 0;
};

// {prompt, chosen, rejected, chosen_score, rejected_score, meta}
nlohmann::ordered_json to_json(const PreferencePairRecord& pair);
PreferencePairRecord pair_from_json(const nlohmann::json& doc);
std::size_t emit_dpo_dataset(std::span<const PreferencePairRecord> pairs, const std::filesystem::path& path);
std::vector<PreferencePairRecord> load_dpo_dataset(const std::filesystem::path& path);

using TokenCounter = std::function<std::size_t(std::string_view)>;

// Approximate: one token per four bytes, rounded up.
std::size_t char_quarter_tokens(std::string_view text);
// Whitespace-separated words.
std::size_t word_tokens(std::string_view text);

struct SftExample {
  Instruction instruction;
  ReferenceSet references;  // references[0] is the completion
};

struct SftResult {
  std::size_t written = 0;
  std::size_t filtered = 0;
};

// Keeps examples whose instruction + reference count is <= max_tokens and
// writes them as {prompt, completion}.
SftResult emit_sft_dataset(std::span<const SftExample> examples, const std::filesystem::path& path,
                           std::size_t max_tokens = kDefaultSftMaxTokens,
                           const TokenCounter& counter = char_quarter_tokens);

}  // namespace refjudge
