#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "refjudge/corpus.hpp"

namespace refjudge {

enum class ProtocolId {
  LLMBarBase,
  CoT,
  SelfRef,
  SelfMetricRef,
  LLMBarRef,
  PrePair,
  HrefBase,
  HrefRef,
  RefFreeOurs,
  RefEval,
  RefMatch,
  RefEvalRules,
  RefMatchRulesCoT,
  MultiRefAvg,
  MultiRefMax,
  BasePoint,
  RefEvalPoint,
  CategoryClassify,
};

inline constexpr std::array<ProtocolId, 18> kAllProtocols{
    ProtocolId::LLMBarBase,   ProtocolId::CoT,          ProtocolId::SelfRef,
    ProtocolId::SelfMetricRef, ProtocolId::LLMBarRef,   ProtocolId::PrePair,
    ProtocolId::HrefBase,     ProtocolId::HrefRef,      ProtocolId::RefFreeOurs,
    ProtocolId::RefEval,      ProtocolId::RefMatch,     ProtocolId::RefEvalRules,
    ProtocolId::RefMatchRulesCoT, ProtocolId::MultiRefAvg, ProtocolId::MultiRefMax,
    ProtocolId::BasePoint,    ProtocolId::RefEvalPoint, ProtocolId::CategoryClassify,
};

enum class ProtocolKind { Pairwise, Pointwise, Classification };
enum class ReferenceNeed { None, Single, Multi };

enum class AnswerGrammar {
  OutputToken,      // last "Output (a)" / "Output (b)" decides
  LetterAB,         // last standalone A / B decides
  ClosingSentence,  // last "Therefore, Output (x) <claim>" decides
  Likert,           // first standalone digit in 1..5
  CategoryNumber,   // first standalone digit in 1..4
};

// Work done once per instruction before the judging passes.
enum class Preliminary {
  None,
  SelfReference,              // judge writes its own reference
  SelfReferenceAndQuestions,  // ... plus at most three metric questions
  OutputAnalysis,             // one critique per candidate output
};

struct ProtocolTraits {
  ProtocolKind kind;
  ReferenceNeed needs_reference;
  int reference_count;  // 0, 1 or 3
  int stages;
  AnswerGrammar grammar;
  Preliminary preliminary;
  std::string_view closing_claim;  // ClosingSentence only, e.g. " is better"
};

const ProtocolTraits& traits(ProtocolId id);
std::string_view to_string(ProtocolId id);
ProtocolId protocol_from_string(std::string_view name);  // throws UnknownProtocol

// Stage-one prompts, stored next to the protocol fixtures.
enum class PreliminaryPrompt { SelfReference, MetricQuestions, OutputAnalysis };
std::string_view fixture_name(PreliminaryPrompt p);

struct PromptTemplate {
  std::optional<std::string> system;
  std::string user;
};

// Read-only registry of prompt fixtures: <root>/<name>/{system,user}.txt.
// All fixtures are loaded at construction; lookups are thread-safe.
class TemplateStore {
 public:
  explicit TemplateStore(std::filesystem::path root);

  // REFJUDGE_PROTOCOL_DIR if set, else the source-tree fixtures, else the
  // installed share directory.
  static TemplateStore load_default();
  static std::filesystem::path default_root();

  const PromptTemplate& get(ProtocolId id) const;
  const PromptTemplate& get(PreliminaryPrompt p) const;
  const std::filesystem::path& root() const { return root_; }

 private:
  const PromptTemplate& get(std::string_view name) const;

  std::filesystem::path root_;
  std::map<std::string, PromptTemplate, std::less<>> templates_;
};

struct RenderedPrompt {
  std::optional<std::string> system;
  std::string user;
  int stage = 1;

  bool operator==(const RenderedPrompt&) const = default;
};

// Outputs of the preliminary stage fed into the final judging prompt.
struct StageInputs {
  std::optional<std::string> self_reference;
  std::optional<std::string> questions;
  std::optional<std::string> analyses;
};

struct RenderInputs {
  std::string_view instruction;
  std::optional<std::string_view> first;   // shown as Output (a), or the scored output
  std::optional<std::string_view> second;  // shown as Output (b)
  std::span<const Reference> references;
  StageInputs stage;
};

// Fills every slot of the protocol's fixture. Slot values are inserted
// verbatim and never rescanned. Throws MissingSlot when the fixture uses a
// slot the inputs cannot supply.
RenderedPrompt render(const TemplateStore& store, ProtocolId id, const RenderInputs& in);

RenderedPrompt render(const TemplateStore& store, ProtocolId id, const Instruction& instruction,
                      const CandidateOutput& output_a, const CandidateOutput* output_b,
                      const ReferenceSet* refs, const StageInputs& stage = {});

RenderedPrompt render_preliminary(const TemplateStore& store, PreliminaryPrompt p,
                                  std::string_view instruction,
                                  std::optional<std::string_view> output = std::nullopt);

// Joins the two per-candidate critiques in presentation order for the
// {PER OUTPUT ANALYSES} slot.
std::string format_analyses(std::string_view first, std::string_view second);

enum class Decision { A, B, ParseFailure };
std::string_view to_string(Decision d);
Decision decision_from_string(std::string_view s);

struct Verdict {
  Decision decision = Decision::ParseFailure;
  std::string raw_text;
};

// Total: every response maps to A, B or ParseFailure. The decision is in the
// presented frame ("Output (a)" -> A).
Verdict parse_pairwise(ProtocolId id, std::string_view response);

struct PointScore {
  int score = 0;
  std::string raw_text;
};

PointScore parse_pointwise(std::string_view response);  // throws ScoreParseFailure

enum class Category {
  Unclassified = 0,
  CodingMath = 1,
  InformationSeeking = 2,
  ReasoningPlanning = 3,
  CreativeTasks = 4,
};

std::string_view to_string(Category c);
int parse_category(std::string_view response);  // 1..4, throws CategoryParseFailure

}  // namespace refjudge
