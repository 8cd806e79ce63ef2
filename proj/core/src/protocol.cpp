#include "refjudge/protocol.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "refjudge/errors.hpp"

namespace refjudge {
namespace {

struct ProtocolEntry {
  ProtocolId id;
  std::string_view name;
  ProtocolTraits traits;
};

using K = ProtocolKind;
using R = ReferenceNeed;
using G = AnswerGrammar;
using P = Preliminary;

constexpr std::array<ProtocolEntry, 18> kRegistry{{
    {ProtocolId::LLMBarBase, "LLMBarBase", {K::Pairwise, R::None, 0, 1, G::OutputToken, P::None, ""}},
    {ProtocolId::CoT, "CoT", {K::Pairwise, R::None, 0, 1, G::ClosingSentence, P::None, " is better"}},
    {ProtocolId::SelfRef, "SelfRef", {K::Pairwise, R::None, 0, 2, G::OutputToken, P::SelfReference, ""}},
    {ProtocolId::SelfMetricRef, "SelfMetricRef",
     {K::Pairwise, R::None, 0, 2, G::OutputToken, P::SelfReferenceAndQuestions, ""}},
    {ProtocolId::LLMBarRef, "LLMBarRef", {K::Pairwise, R::Single, 1, 1, G::OutputToken, P::None, ""}},
    {ProtocolId::PrePair, "PrePair",
     {K::Pairwise, R::None, 0, 2, G::ClosingSentence, P::OutputAnalysis, " is better"}},
    {ProtocolId::HrefBase, "HrefBase", {K::Pairwise, R::None, 0, 1, G::LetterAB, P::None, ""}},
    {ProtocolId::HrefRef, "HrefRef", {K::Pairwise, R::Single, 1, 1, G::LetterAB, P::None, ""}},
    {ProtocolId::RefFreeOurs, "RefFreeOurs", {K::Pairwise, R::None, 0, 1, G::OutputToken, P::None, ""}},
    {ProtocolId::RefEval, "RefEval", {K::Pairwise, R::Single, 1, 1, G::OutputToken, P::None, ""}},
    {ProtocolId::RefMatch, "RefMatch", {K::Pairwise, R::Single, 1, 1, G::OutputToken, P::None, ""}},
    {ProtocolId::RefEvalRules, "RefEvalRules", {K::Pairwise, R::Single, 1, 1, G::OutputToken, P::None, ""}},
    {ProtocolId::RefMatchRulesCoT, "RefMatchRulesCoT",
     {K::Pairwise, R::Single, 1, 1, G::ClosingSentence, P::None,
      " shows closer similarity to the Reference Output"}},
    {ProtocolId::MultiRefAvg, "MultiRefAvg",
     {K::Pairwise, R::Multi, 3, 1, G::ClosingSentence, P::None,
      " is overall more similar to the Reference Outputs"}},
    {ProtocolId::MultiRefMax, "MultiRefMax",
     {K::Pairwise, R::Multi, 3, 1, G::ClosingSentence, P::None, " has a best match"}},
    {ProtocolId::BasePoint, "BasePoint", {K::Pointwise, R::None, 0, 1, G::Likert, P::None, ""}},
    {ProtocolId::RefEvalPoint, "RefEvalPoint", {K::Pointwise, R::Single, 1, 1, G::Likert, P::None, ""}},
    {ProtocolId::CategoryClassify, "CategoryClassify",
     {K::Classification, R::None, 0, 1, G::CategoryNumber, P::None, ""}},
}};

const ProtocolEntry& entry(ProtocolId id) {
  for (const auto& e : kRegistry)
    if (e.id == id) return e;
  throw UnknownProtocol(std::to_string(static_cast<int>(id)));
}

std::optional<std::string> read_fixture(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();
  // one trailing LF is the file terminator, not template content
  if (!text.empty() && text.back() == '\n') text.pop_back();
  return text;
}

bool is_word_byte(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) || u >= 0x80 || c == '_';
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

// First digit in [lo, hi] that is not part of a longer number.
std::optional<int> first_standalone_digit(std::string_view s, int lo, int hi) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!is_digit(s[i])) continue;
    const bool left_ok = i == 0 || !is_digit(s[i - 1]);
    const bool right_ok = i + 1 == s.size() || !is_digit(s[i + 1]);
    if (!left_ok || !right_ok) continue;
    const int v = s[i] - '0';
    if (v >= lo && v <= hi) return v;
  }
  return std::nullopt;
}

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// Picks whichever of the two needles occurs last.
Decision last_of(std::string_view text, std::string_view needle_a, std::string_view needle_b) {
  const auto pa = text.rfind(needle_a);
  const auto pb = text.rfind(needle_b);
  if (pa == std::string_view::npos && pb == std::string_view::npos) return Decision::ParseFailure;
  if (pa == std::string_view::npos) return Decision::B;
  if (pb == std::string_view::npos) return Decision::A;
  return pa > pb ? Decision::A : Decision::B;
}

Decision last_standalone_letter(std::string_view text) {
  for (std::size_t i = text.size(); i-- > 0;) {
    const char c = text[i];
    if (c != 'A' && c != 'B') continue;
    const bool left_ok = i == 0 || !is_word_byte(text[i - 1]);
    const bool right_ok = i + 1 == text.size() || !is_word_byte(text[i + 1]);
    if (left_ok && right_ok) return c == 'A' ? Decision::A : Decision::B;
  }
  return Decision::ParseFailure;
}

struct SlotValue {
  std::string_view name;
  std::optional<std::string_view> value;
};

std::string substitute(std::string_view tmpl, std::span<const SlotValue> slots) {
  std::string out;
  out.reserve(tmpl.size() + 256);
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find('{', pos);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    out.append(tmpl.substr(pos, open - pos));
    const auto close = tmpl.find('}', open + 1);
    if (close == std::string_view::npos) {
      out.append(tmpl.substr(open));
      break;
    }
    const auto token = tmpl.substr(open + 1, close - open - 1);
    const auto it = std::find_if(slots.begin(), slots.end(),
                                 [&](const SlotValue& s) { return s.name == token; });
    if (it == slots.end()) {
      out.push_back('{');
      pos = open + 1;
      continue;
    }
    if (!it->value) throw MissingSlot(std::string(token));
    out.append(*it->value);
    pos = close + 1;
  }
  return out;
}

}  // namespace

const ProtocolTraits& traits(ProtocolId id) { return entry(id).traits; }

std::string_view to_string(ProtocolId id) { return entry(id).name; }

ProtocolId protocol_from_string(std::string_view name) {
  for (const auto& e : kRegistry)
    if (e.name == name) return e.id;
  throw UnknownProtocol(std::string(name));
}

std::string_view fixture_name(PreliminaryPrompt p) {
  switch (p) {
    case PreliminaryPrompt::SelfReference: return "SelfRefGenerate";
    case PreliminaryPrompt::MetricQuestions: return "MetricGenerate";
    case PreliminaryPrompt::OutputAnalysis: return "PrePairAnalysis";
  }
  return "";
}

TemplateStore::TemplateStore(std::filesystem::path root) : root_(std::move(root)) {
  auto load = [&](std::string_view name) {
    const auto dir = root_ / std::string(name);
    auto user = read_fixture(dir / "user.txt");
    if (!user) throw IoError("missing fixture " + (dir / "user.txt").string());
    templates_.emplace(std::string(name), PromptTemplate{read_fixture(dir / "system.txt"), std::move(*user)});
  };
  for (const auto& e : kRegistry) load(e.name);
  for (auto p : {PreliminaryPrompt::SelfReference, PreliminaryPrompt::MetricQuestions,
                 PreliminaryPrompt::OutputAnalysis})
    load(fixture_name(p));
}

std::filesystem::path TemplateStore::default_root() {
  if (const char* env = std::getenv("REFJUDGE_PROTOCOL_DIR"); env && *env) return env;
  std::error_code ec;
  if (std::filesystem::is_directory(REFJUDGE_DEFAULT_PROTOCOL_DIR, ec)) return REFJUDGE_DEFAULT_PROTOCOL_DIR;
  return REFJUDGE_INSTALLED_PROTOCOL_DIR;
}

TemplateStore TemplateStore::load_default() { return TemplateStore(default_root()); }

const PromptTemplate& TemplateStore::get(std::string_view name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) throw UnknownProtocol(std::string(name));
  return it->second;
}

const PromptTemplate& TemplateStore::get(ProtocolId id) const { return get(to_string(id)); }

const PromptTemplate& TemplateStore::get(PreliminaryPrompt p) const { return get(fixture_name(p)); }

RenderedPrompt render(const TemplateStore& store, ProtocolId id, const RenderInputs& in) {
  const auto& t = traits(id);
  const auto ref_at = [&](std::size_t i) -> std::optional<std::string_view> {
    if (t.needs_reference == ReferenceNeed::None || i >= in.references.size()) return std::nullopt;
    return std::string_view(in.references[i].text);
  };
  const auto opt = [](const std::optional<std::string>& s) -> std::optional<std::string_view> {
    if (!s) return std::nullopt;
    return std::string_view(*s);
  };

  std::optional<std::string_view> reference;
  if (t.preliminary == Preliminary::SelfReference ||
      t.preliminary == Preliminary::SelfReferenceAndQuestions) {
    reference = opt(in.stage.self_reference);
  } else {
    reference = ref_at(0);
  }

  const std::array<SlotValue, 10> slots{{
      {"INSTRUCTION", in.instruction},
      {"OUTPUT_1", in.first},
      {"OUTPUT_2", t.kind == ProtocolKind::Pairwise ? in.second : std::nullopt},
      {"OUTPUT", in.first},
      {"REFERENCE", reference},
      {"REFERENCE_1", ref_at(0)},
      {"REFERENCE_2", ref_at(1)},
      {"REFERENCE_3", ref_at(2)},
      {"QUESTIONS", opt(in.stage.questions)},
      {"PER OUTPUT ANALYSES", opt(in.stage.analyses)},
  }};

  const auto& tmpl = store.get(id);
  RenderedPrompt out;
  if (tmpl.system) out.system = substitute(*tmpl.system, slots);
  out.user = substitute(tmpl.user, slots);
  out.stage = t.stages;
  return out;
}

RenderedPrompt render(const TemplateStore& store, ProtocolId id, const Instruction& instruction,
                      const CandidateOutput& output_a, const CandidateOutput* output_b,
                      const ReferenceSet* refs, const StageInputs& stage) {
  RenderInputs in;
  in.instruction = instruction.text;
  in.first = output_a.text;
  if (output_b) in.second = output_b->text;
  if (refs) in.references = refs->references;
  in.stage = stage;
  return render(store, id, in);
}

RenderedPrompt render_preliminary(const TemplateStore& store, PreliminaryPrompt p,
                                  std::string_view instruction, std::optional<std::string_view> output) {
  const std::array<SlotValue, 2> slots{{{"INSTRUCTION", instruction}, {"OUTPUT", output}}};
  const auto& tmpl = store.get(p);
  RenderedPrompt out;
  if (tmpl.system) out.system = substitute(*tmpl.system, slots);
  out.user = substitute(tmpl.user, slots);
  out.stage = 1;
  return out;
}

std::string format_analyses(std::string_view first, std::string_view second) {
  std::string out = "Output (a): ";
  out.append(first);
  out.append("\n\nOutput (b): ");
  out.append(second);
  return out;
}

std::string_view to_string(Decision d) {
  switch (d) {
    case Decision::A: return "A";
    case Decision::B: return "B";
    case Decision::ParseFailure: return "ParseFailure";
  }
  return "ParseFailure";
}

Decision decision_from_string(std::string_view s) {
  if (s == "A") return Decision::A;
  if (s == "B") return Decision::B;
  return Decision::ParseFailure;
}

Verdict parse_pairwise(ProtocolId id, std::string_view response) {
  const auto& t = traits(id);
  const auto text = trim(response);
  Verdict v;
  v.raw_text = std::string(response);
  switch (t.grammar) {
    case AnswerGrammar::OutputToken:
      v.decision = last_of(text, "Output (a)", "Output (b)");
      break;
    case AnswerGrammar::LetterAB:
      v.decision = last_standalone_letter(text);
      break;
    case AnswerGrammar::ClosingSentence: {
      const std::string a = "Therefore, Output (a)" + std::string(t.closing_claim);
      const std::string b = "Therefore, Output (b)" + std::string(t.closing_claim);
      v.decision = last_of(text, a, b);
      break;
    }
    case AnswerGrammar::Likert:
    case AnswerGrammar::CategoryNumber:
      v.decision = Decision::ParseFailure;
      break;
  }
  return v;
}

PointScore parse_pointwise(std::string_view response) {
  const auto digit = first_standalone_digit(trim(response), 1, 5);
  if (!digit) throw ScoreParseFailure("no score in 1..5 found");
  return {*digit, std::string(response)};
}

std::string_view to_string(Category c) {
  switch (c) {
    case Category::CodingMath: return "Coding & Math";
    case Category::InformationSeeking: return "Information Seeking";
    case Category::ReasoningPlanning: return "Reasoning & Planning";
    case Category::CreativeTasks: return "Creative Tasks";
    case Category::Unclassified: return "Unclassified";
  }
  return "Unclassified";
}

int parse_category(std::string_view response) {
  const auto digit = first_standalone_digit(trim(response), 1, 4);
  if (!digit) throw CategoryParseFailure("no category number in 1..4 found");
  return *digit;
}

}  // namespace refjudge
