#include "refjudge/judge.hpp"

#include "refjudge/errors.hpp"
#include "refjudge/jsonl.hpp"
#include "refjudge/stats.hpp"

namespace refjudge {

double swap_credit(Decision forward, Decision backward, Label human_label) {
  const Decision want = human_label == Label::A ? Decision::A : Decision::B;
  return (forward == want ? 0.5 : 0.0) + (backward == want ? 0.5 : 0.0);
}

Decision unswap(Decision presented) {
  switch (presented) {
    case Decision::A: return Decision::B;
    case Decision::B: return Decision::A;
    case Decision::ParseFailure: return Decision::ParseFailure;
  }
  return Decision::ParseFailure;
}

nlohmann::ordered_json to_json(const EvalRecord& rec) {
  nlohmann::ordered_json doc;
  doc["instance_id"] = rec.instance_id;
  doc["protocol"] = std::string(to_string(rec.protocol));
  doc["judge_model"] = rec.judge_model;
  doc["forward"] = std::string(to_string(rec.swapped.forward.decision));
  doc["backward"] = std::string(to_string(rec.swapped.backward.decision));
  doc["credit"] = rec.credit;
  doc["raw_forward"] = rec.swapped.forward.raw_text;
  doc["raw_backward"] = rec.swapped.backward.raw_text;
  doc["human_label"] = std::string(to_string(rec.human_label));
  doc["dataset"] = std::string(to_string(rec.dataset));
  if (rec.score_a) doc["score_a"] = *rec.score_a;
  if (rec.score_b) doc["score_b"] = *rec.score_b;
  if (!rec.flags.empty()) doc["flags"] = rec.flags;
  return doc;
}

EvalRecord eval_record_from_json(const nlohmann::json& doc) {
  EvalRecord rec;
  rec.instance_id = doc.at("instance_id").get<std::string>();
  rec.protocol = protocol_from_string(doc.at("protocol").get<std::string>());
  rec.judge_model = doc.at("judge_model").get<std::string>();
  rec.swapped.forward = {decision_from_string(doc.at("forward").get<std::string>()),
                         doc.value("raw_forward", "")};
  rec.swapped.backward = {decision_from_string(doc.at("backward").get<std::string>()),
                          doc.value("raw_backward", "")};
  rec.credit = doc.at("credit").get<double>();
  rec.human_label = doc.value("human_label", "A") == "B" ? Label::B : Label::A;
  rec.dataset = dataset_from_string(doc.value("dataset", "Custom")).value_or(Dataset::Custom);
  if (doc.contains("score_a")) rec.score_a = doc.at("score_a").get<int>();
  if (doc.contains("score_b")) rec.score_b = doc.at("score_b").get<int>();
  if (doc.contains("flags")) rec.flags = doc.at("flags").get<std::vector<std::string>>();
  return rec;
}

void save_records(const std::filesystem::path& path, std::span<const EvalRecord> records) {
  std::vector<nlohmann::ordered_json> docs;
  docs.reserve(records.size());
  for (const auto& r : records) docs.push_back(to_json(r));
  jsonl::write(path, docs);
}

std::vector<EvalRecord> load_records(const std::filesystem::path& path) {
  std::vector<EvalRecord> out;
  const auto lines = jsonl::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(eval_record_from_json(nlohmann::json::parse(lines[i])));
    } catch (const nlohmann::json::exception& e) {
      throw MalformedRecord(i + 1, e.what());
    } catch (const UnknownProtocol& e) {
      throw MalformedRecord(i + 1, e.what());
    }
  }
  return out;
}

namespace {

const ChatResponse* ok(const BatchResult& r) { return std::get_if<ChatResponse>(&r); }

std::string failure_text(const BatchResult& r) {
  if (const auto* f = std::get_if<BackendFailure>(&r)) return f->message;
  return "";
}

std::string first_choice(const ChatResponse& resp) {
  return resp.choices.empty() ? std::string() : resp.choices.front();
}

void check_references(const JudgeItem& item, ProtocolId protocol, bool voting) {
  const auto& t = traits(protocol);
  if (voting && t.needs_reference != ReferenceNeed::Single)
    throw PreconditionViolation("reference voting needs a single-reference protocol, got " +
                                std::string(to_string(protocol)));
  if (t.needs_reference == ReferenceNeed::None) return;
  const std::size_t have = item.references ? item.references->references.size() : 0;
  const auto need = static_cast<std::size_t>(t.reference_count);
  if (have >= need) return;
  if (t.needs_reference == ReferenceNeed::Multi) throw MissingSlot("REFERENCE_" + std::to_string(have + 1));
  throw MissingSlot("REFERENCE");
}

// Per-item bookkeeping for the two request phases.
struct Plan {
  std::vector<std::size_t> stage_one;  // indices into the stage-one batch
  std::vector<std::size_t> forward;    // one per voting variant (or score_a for pointwise)
  std::vector<std::size_t> backward;   // ... (score_b for pointwise)
  std::optional<std::string> stage_error;
};

}  // namespace

Judge::Judge(ChatBackend& backend, const TemplateStore& templates, JudgeOptions options)
    : backend_(backend), templates_(templates), options_(std::move(options)) {
  if (options_.parallelism < 1) throw PreconditionViolation("parallelism must be >= 1");
}

ChatRequest Judge::request(const RenderedPrompt& prompt, int max_tokens) const {
  ChatRequest req;
  req.model = options_.judge_model;
  req.system = prompt.system;
  req.user = prompt.user;
  req.temperature = 0.0;
  req.max_tokens = max_tokens;
  req.n = 1;
  return req;
}

std::vector<BatchResult> Judge::submit(const std::vector<ChatRequest>& reqs) {
  calls_ += reqs.size();
  return run_batch(backend_, reqs, options_.parallelism);
}

EvalRecord Judge::judge_instance(const PreferenceInstance& instance, ProtocolId protocol,
                                 const ReferenceSet* refs) {
  const JudgeItem item{&instance, refs};
  return judge_all(std::span(&item, 1), protocol).front();
}

std::vector<EvalRecord> Judge::judge_all(std::span<const JudgeItem> items, ProtocolId protocol) {
  const auto& t = traits(protocol);
  if (t.kind == ProtocolKind::Classification)
    throw PreconditionViolation("classification protocols cannot judge preference instances");
  const bool voting = options_.vote_over_references;
  for (const auto& item : items) check_references(item, protocol, voting);

  std::vector<Plan> plans(items.size());

  // Stage one: runs once per instance and is shared by both passes.
  std::vector<ChatRequest> stage_reqs;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& inst = *items[i].instance;
    const std::string_view instr = inst.instruction.text;
    auto add = [&](RenderedPrompt p, int max_tokens) {
      plans[i].stage_one.push_back(stage_reqs.size());
      stage_reqs.push_back(request(p, max_tokens));
    };
    switch (t.preliminary) {
      case Preliminary::None:
        break;
      case Preliminary::SelfReference:
        add(render_preliminary(templates_, PreliminaryPrompt::SelfReference, instr), kGenerationMaxTokens);
        break;
      case Preliminary::SelfReferenceAndQuestions:
        add(render_preliminary(templates_, PreliminaryPrompt::SelfReference, instr), kGenerationMaxTokens);
        add(render_preliminary(templates_, PreliminaryPrompt::MetricQuestions, instr), options_.max_tokens);
        break;
      case Preliminary::OutputAnalysis:
        add(render_preliminary(templates_, PreliminaryPrompt::OutputAnalysis, instr, inst.output_a.text),
            options_.max_tokens);
        add(render_preliminary(templates_, PreliminaryPrompt::OutputAnalysis, instr, inst.output_b.text),
            options_.max_tokens);
        break;
    }
  }
  const auto stage_results = submit(stage_reqs);

  // Final judging prompts.
  std::vector<ChatRequest> final_reqs;
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto& plan = plans[i];
    const auto& inst = *items[i].instance;
    std::vector<std::string> stage_text;
    for (auto idx : plan.stage_one) {
      if (const auto* resp = ok(stage_results[idx])) {
        stage_text.push_back(first_choice(*resp));
      } else if (!plan.stage_error) {
        plan.stage_error = failure_text(stage_results[idx]);
      }
    }
    if (plan.stage_error) continue;

    RenderInputs in;
    in.instruction = inst.instruction.text;
    if (items[i].references) in.references = items[i].references->references;

    switch (t.preliminary) {
      case Preliminary::None:
        break;
      case Preliminary::SelfReference:
        in.stage.self_reference = stage_text[0];
        break;
      case Preliminary::SelfReferenceAndQuestions:
        in.stage.self_reference = stage_text[0];
        in.stage.questions = stage_text[1];
        break;
      case Preliminary::OutputAnalysis:
        break;
    }

    if (t.kind == ProtocolKind::Pointwise) {
      in.first = inst.output_a.text;
      plan.forward.push_back(final_reqs.size());
      final_reqs.push_back(request(render(templates_, protocol, in), options_.max_tokens));
      in.first = inst.output_b.text;
      plan.backward.push_back(final_reqs.size());
      final_reqs.push_back(request(render(templates_, protocol, in), options_.max_tokens));
      continue;
    }

    const std::size_t variants = voting ? in.references.size() : 1;
    const auto all_refs = in.references;
    for (int pass = 0; pass < 2; ++pass) {
      const bool swapped = pass == 1;
      in.first = swapped ? inst.output_b.text : inst.output_a.text;
      in.second = swapped ? inst.output_a.text : inst.output_b.text;
      if (t.preliminary == Preliminary::OutputAnalysis)
        in.stage.analyses = swapped ? format_analyses(stage_text[1], stage_text[0])
                                    : format_analyses(stage_text[0], stage_text[1]);
      for (std::size_t v = 0; v < variants; ++v) {
        if (voting) in.references = all_refs.subspan(v, 1);
        (swapped ? plan.backward : plan.forward).push_back(final_reqs.size());
        final_reqs.push_back(request(render(templates_, protocol, in), options_.max_tokens));
      }
    }
  }
  const auto final_results = submit(final_reqs);

  std::vector<EvalRecord> records;
  records.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& inst = *items[i].instance;
    const auto& plan = plans[i];
    EvalRecord rec;
    rec.instance_id = inst.instruction.id;
    rec.protocol = protocol;
    rec.judge_model = options_.judge_model;
    rec.human_label = inst.human_label;
    rec.dataset = inst.instruction.source_dataset;

    if (plan.stage_error) {
      rec.flags.push_back("stage_one: " + *plan.stage_error);
    } else if (t.kind == ProtocolKind::Pointwise) {
      std::optional<PointScore> scores[2];
      const std::size_t idx[2] = {plan.forward[0], plan.backward[0]};
      std::string raw[2];
      for (int s = 0; s < 2; ++s) {
        const auto& r = final_results[idx[s]];
        if (const auto* resp = ok(r)) {
          raw[s] = first_choice(*resp);
          try {
            scores[s] = parse_pointwise(raw[s]);
          } catch (const ScoreParseFailure&) {
          }
        } else {
          rec.flags.push_back(std::string(s == 0 ? "score_a: " : "score_b: ") + failure_text(r));
        }
      }
      rec.swapped.forward.raw_text = raw[0];
      rec.swapped.backward.raw_text = raw[1];
      if (scores[0]) rec.score_a = scores[0]->score;
      if (scores[1]) rec.score_b = scores[1]->score;
      if (scores[0] && scores[1]) {
        // a tie splits the two passes so it earns half credit either way
        switch (pointwise_compare(*scores[0], *scores[1])) {
          case PointwiseOutcome::A:
            rec.swapped.forward.decision = rec.swapped.backward.decision = Decision::A;
            break;
          case PointwiseOutcome::B:
            rec.swapped.forward.decision = rec.swapped.backward.decision = Decision::B;
            break;
          case PointwiseOutcome::Tie:
            rec.swapped.forward.decision = Decision::A;
            rec.swapped.backward.decision = Decision::B;
            break;
        }
      }
    } else {
      auto collect = [&](const std::vector<std::size_t>& idxs, bool swapped, const char* tag) {
        std::vector<Verdict> verdicts;
        for (auto idx : idxs) {
          const auto& r = final_results[idx];
          if (const auto* resp = ok(r)) {
            Verdict v = parse_pairwise(protocol, first_choice(*resp));
            if (swapped) v.decision = unswap(v.decision);
            verdicts.push_back(std::move(v));
          } else {
            rec.flags.push_back(std::string(tag) + ": " + failure_text(r));
            verdicts.push_back({Decision::ParseFailure, ""});
          }
        }
        return verdicts.size() == 1 ? verdicts.front() : multi_ref_vote(verdicts);
      };
      rec.swapped.forward = collect(plan.forward, false, "forward");
      rec.swapped.backward = collect(plan.backward, true, "backward");
    }
    rec.credit = swap_credit(rec.swapped.forward.decision, rec.swapped.backward.decision, rec.human_label);
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace refjudge
