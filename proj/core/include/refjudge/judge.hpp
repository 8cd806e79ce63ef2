#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "refjudge/backend.hpp"
#include "refjudge/corpus.hpp"
#include "refjudge/protocol.hpp"

namespace refjudge {

// backward is already mapped back into the original A/B frame.
struct SwappedVerdict {
  Verdict forward;
  Verdict backward;
};

struct EvalRecord {
  std::string instance_id;
  ProtocolId protocol = ProtocolId::RefEval;
  std::string judge_model;
  SwappedVerdict swapped;
  double credit = 0.0;
  Label human_label = Label::A;
  Dataset dataset = Dataset::Custom;
  std::optional<int> score_a;  // pointwise protocols only
  std::optional<int> score_b;
  std::vector<std::string> flags;  // backend or stage-one failures

  bool failed() const { return !flags.empty(); }
};

// 0.5 for each pass whose decision equals the human label.
double swap_credit(Decision forward, Decision backward, Label human_label);

// Maps a decision made with the candidates presented swapped back into the
// original frame.
Decision unswap(Decision presented);

nlohmann::ordered_json to_json(const EvalRecord& rec);
EvalRecord eval_record_from_json(const nlohmann::json& doc);
void save_records(const std::filesystem::path& path, std::span<const EvalRecord> records);
std::vector<EvalRecord> load_records(const std::filesystem::path& path);

struct JudgeOptions {
  std::string judge_model;
  int parallelism = 8;
  int max_tokens = kJudgeMaxTokens;
  // Single-reference protocols only: judge once per reference in the set and
  // take a majority vote per pass.
  bool vote_over_references = false;
};

// One instance paired with whatever references it has (may be null).
struct JudgeItem {
  const PreferenceInstance* instance = nullptr;
  const ReferenceSet* references = nullptr;
};

class Judge {
 public:
  Judge(ChatBackend& backend, const TemplateStore& templates, JudgeOptions options);

  EvalRecord judge_instance(const PreferenceInstance& instance, ProtocolId protocol,
                            const ReferenceSet* refs);

  // Judges every item; stage-one and final calls each go through one
  // run_batch. Throws MissingSlot before any call when an item lacks the
  // references the protocol needs.
  std::vector<EvalRecord> judge_all(std::span<const JudgeItem> items, ProtocolId protocol);

  // Logical judge requests issued so far, cache hits included.
  std::uint64_t calls() const { return calls_.load(); }
  const JudgeOptions& options() const { return options_; }

 private:
  std::vector<BatchResult> submit(const std::vector<ChatRequest>& reqs);
  ChatRequest request(const RenderedPrompt& prompt, int max_tokens) const;

  ChatBackend& backend_;
  const TemplateStore& templates_;
  JudgeOptions options_;
  std::atomic<std::uint64_t> calls_{0};
};

}  // namespace refjudge
