#include "refjudge/factory.hpp"

#include <algorithm>
#include <cctype>

#include "refjudge/errors.hpp"
#include "refjudge/judge.hpp"
#include "refjudge/jsonl.hpp"

namespace refjudge {

bool PreferencePairRecord::operator==(const PreferencePairRecord& o) const {
  auto same_instr = [](const Instruction& a, const Instruction& b) {
    return a.id == b.id && a.text == b.text && a.source_dataset == b.source_dataset;
  };
  auto same_out = [](const CandidateOutput& a, const CandidateOutput& b) {
    return a.text == b.text && a.source_model == b.source_model && a.sampling_index == b.sampling_index;
  };
  return same_instr(instruction, o.instruction) && same_out(chosen, o.chosen) &&
         same_out(rejected, o.rejected) && chosen_score == o.chosen_score &&
         rejected_score == o.rejected_score && judge_protocol == o.judge_protocol;
}

std::pair<double, double> comparison_credit(Decision forward, Decision backward) {
  if (forward == Decision::A && backward == Decision::A) return {1.0, 0.0};
  if (forward == Decision::B && backward == Decision::B) return {0.0, 1.0};
  return {0.5, 0.5};
}

PairSelection select_pair(const RoundRobinScore& score, const CandidatePool& pool) {
  if (score.wins.size() != pool.candidates.size() || score.wins.empty())
    throw PreconditionViolation("score does not cover the pool");
  std::size_t best = 0, worst = 0;
  for (std::size_t i = 1; i < score.wins.size(); ++i) {
    if (score.wins[i] > score.wins[best]) best = i;
    if (score.wins[i] < score.wins[worst]) worst = i;
  }
  if (score.wins[best] == score.wins[worst]) return Skip{};
  PreferencePairRecord rec;
  rec.instruction = pool.instruction;
  rec.chosen = pool.candidates[best];
  rec.rejected = pool.candidates[worst];
  rec.chosen_score = score.wins[best];
  rec.rejected_score = score.wins[worst];
  rec.judge_protocol = score.protocol;
  return rec;
}

Factory::Factory(ChatBackend& backend, const TemplateStore& templates, FactoryOptions options)
    : backend_(backend), templates_(templates), options_(options) {
  if (options_.parallelism < 1) throw PreconditionViolation("parallelism must be >= 1");
}

ReferenceGeneration Factory::generate_references(std::span<const Instruction> instructions,
                                                 const std::string& generator_model) {
  std::vector<ChatRequest> reqs;
  reqs.reserve(instructions.size());
  for (const auto& instr : instructions) {
    const auto prompt = render_preliminary(templates_, PreliminaryPrompt::SelfReference, instr.text);
    ChatRequest req;
    req.model = generator_model;
    req.system = prompt.system;
    req.user = prompt.user;
    req.temperature = 0.0;
    req.max_tokens = options_.max_tokens;
    reqs.push_back(std::move(req));
  }
  generation_calls_ += reqs.size();
  const auto results = run_batch(backend_, reqs, options_.parallelism);

  ReferenceGeneration out;
  for (std::size_t i = 0; i < instructions.size(); ++i) {
    if (const auto* resp = std::get_if<ChatResponse>(&results[i]); resp && !resp->choices.empty()) {
      out.sets.push_back({instructions[i].id, {{resp->choices.front(), generator_model}}});
    } else if (const auto* f = std::get_if<BackendFailure>(&results[i])) {
      out.failures.push_back({instructions[i].id, f->message});
    } else {
      out.failures.push_back({instructions[i].id, "empty completion"});
    }
  }
  return out;
}

PoolSampling Factory::sample_pools(std::span<const Instruction> instructions, const std::string& policy_model,
                                   int n, double temperature) {
  if (n < 2) throw PreconditionViolation("a candidate pool needs n >= 2");
  if (temperature < 0.0) throw PreconditionViolation("temperature must be >= 0");
  std::vector<ChatRequest> reqs;
  reqs.reserve(instructions.size() * static_cast<std::size_t>(n));
  for (const auto& instr : instructions) {
    const auto prompt = render_preliminary(templates_, PreliminaryPrompt::SelfReference, instr.text);
    for (int k = 0; k < n; ++k) {
      ChatRequest req;
      req.model = policy_model;
      req.system = prompt.system;
      req.user = prompt.user;
      req.temperature = temperature;
      req.max_tokens = options_.max_tokens;
      req.seed_tag = "sample-" + std::to_string(k);
      reqs.push_back(std::move(req));
    }
  }
  generation_calls_ += reqs.size();
  const auto results = run_batch(backend_, reqs, options_.parallelism);

  PoolSampling out;
  for (std::size_t i = 0; i < instructions.size(); ++i) {
    CandidatePool pool{instructions[i], {}, policy_model};
    std::string first_error;
    for (int k = 0; k < n; ++k) {
      const auto& r = results[i * static_cast<std::size_t>(n) + static_cast<std::size_t>(k)];
      if (const auto* resp = std::get_if<ChatResponse>(&r); resp && !resp->choices.empty()) {
        pool.candidates.push_back({resp->choices.front(), policy_model, k});
      } else if (first_error.empty()) {
        const auto* f = std::get_if<BackendFailure>(&r);
        first_error = f ? f->message : "empty completion";
      }
    }
    if (pool.candidates.size() == static_cast<std::size_t>(n)) {
      out.pools.push_back(std::move(pool));
    } else {
      out.failures.push_back({instructions[i].id, pool.candidates.size(), first_error});
    }
  }
  return out;
}

CandidatePool Factory::sample_candidates(const Instruction& instruction, const std::string& policy_model,
                                         int n, double temperature) {
  auto sampled = sample_pools(std::span(&instruction, 1), policy_model, n, temperature);
  if (sampled.pools.empty())
    throw PoolUnderfilled(sampled.failures.front().obtained, static_cast<std::size_t>(n));
  return std::move(sampled.pools.front());
}

RoundRobinScore Factory::round_robin_score(const CandidatePool& pool, ProtocolId protocol,
                                           const ReferenceSet* refs, const std::string& judge_model) {
  const ReferenceSet* const r[] = {refs};
  return round_robin_scores(std::span(&pool, 1), protocol, r, judge_model).front();
}

std::vector<RoundRobinScore> Factory::round_robin_scores(std::span<const CandidatePool> pools,
                                                         ProtocolId protocol,
                                                         std::span<const ReferenceSet* const> refs,
                                                         const std::string& judge_model) {
  if (traits(protocol).kind != ProtocolKind::Pairwise)
    throw PreconditionViolation("round-robin scoring needs a pairwise protocol");
  if (refs.size() != pools.size()) throw PreconditionViolation("one reference entry per pool required");

  struct Comparison {
    std::size_t pool, i, j;
  };
  std::vector<PreferenceInstance> instances;
  std::vector<Comparison> comparisons;
  std::vector<JudgeItem> items;
  for (std::size_t p = 0; p < pools.size(); ++p) {
    const auto& c = pools[p].candidates;
    for (std::size_t i = 0; i < c.size(); ++i) {
      for (std::size_t j = i + 1; j < c.size(); ++j) {
        PreferenceInstance inst;
        inst.instruction = pools[p].instruction;
        inst.instruction.id += "#" + std::to_string(i) + "-" + std::to_string(j);
        inst.output_a = c[i];
        inst.output_b = c[j];
        instances.push_back(std::move(inst));
        comparisons.push_back({p, i, j});
      }
    }
  }
  items.reserve(instances.size());
  for (std::size_t k = 0; k < instances.size(); ++k)
    items.push_back({&instances[k], refs[comparisons[k].pool]});

  Judge judge(backend_, templates_, {judge_model, options_.parallelism, kJudgeMaxTokens, false});
  const auto records = judge.judge_all(items, protocol);
  judge_calls_ += judge.calls();

  std::vector<RoundRobinScore> scores(pools.size());
  for (std::size_t p = 0; p < pools.size(); ++p) {
    scores[p].wins.assign(pools[p].candidates.size(), 0.0);
    scores[p].protocol = protocol;
  }
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& cmp = comparisons[k];
    auto& score = scores[cmp.pool];
    const auto [ci, cj] =
        comparison_credit(records[k].swapped.forward.decision, records[k].swapped.backward.decision);
    score.wins[cmp.i] += ci;
    score.wins[cmp.j] += cj;
    ++score.comparisons;
    if (records[k].failed()) score.flags.push_back(instances[k].instruction.id);
  }
  return scores;
}

nlohmann::ordered_json to_json(const PreferencePairRecord& pair) {
  nlohmann::ordered_json doc;
  doc["prompt"] = pair.instruction.text;
  doc["chosen"] = pair.chosen.text;
  doc["rejected"] = pair.rejected.text;
  doc["chosen_score"] = pair.chosen_score;
  doc["rejected_score"] = pair.rejected_score;
  nlohmann::ordered_json meta;
  meta["instruction_id"] = pair.instruction.id;
  meta["dataset"] = std::string(to_string(pair.instruction.source_dataset));
  meta["judge_protocol"] = std::string(to_string(pair.judge_protocol));
  meta["chosen_model"] = pair.chosen.source_model;
  meta["rejected_model"] = pair.rejected.source_model;
  meta["chosen_index"] = pair.chosen.sampling_index ? nlohmann::ordered_json(*pair.chosen.sampling_index)
                                                    : nlohmann::ordered_json(nullptr);
  meta["rejected_index"] = pair.rejected.sampling_index
                               ? nlohmann::ordered_json(*pair.rejected.sampling_index)
                               : nlohmann::ordered_json(nullptr);
  doc["meta"] = std::move(meta);
  return doc;
}

PreferencePairRecord pair_from_json(const nlohmann::json& doc) {
  PreferencePairRecord rec;
  const auto& meta = doc.at("meta");
  rec.instruction.id = meta.at("instruction_id").get<std::string>();
  rec.instruction.text = doc.at("prompt").get<std::string>();
  rec.instruction.source_dataset =
      dataset_from_string(meta.value("dataset", "Custom")).value_or(Dataset::Custom);
  rec.chosen.text = doc.at("chosen").get<std::string>();
  rec.rejected.text = doc.at("rejected").get<std::string>();
  rec.chosen.source_model = meta.value("chosen_model", "");
  rec.rejected.source_model = meta.value("rejected_model", "");
  if (meta.contains("chosen_index") && !meta.at("chosen_index").is_null())
    rec.chosen.sampling_index = meta.at("chosen_index").get<int>();
  if (meta.contains("rejected_index") && !meta.at("rejected_index").is_null())
    rec.rejected.sampling_index = meta.at("rejected_index").get<int>();
  rec.chosen_score = doc.at("chosen_score").get<double>();
  rec.rejected_score = doc.at("rejected_score").get<double>();
  rec.judge_protocol = protocol_from_string(meta.at("judge_protocol").get<std::string>());
  return rec;
}

std::size_t emit_dpo_dataset(std::span<const PreferencePairRecord> pairs, const std::filesystem::path& path) {
  std::vector<nlohmann::ordered_json> docs;
  docs.reserve(pairs.size());
  for (const auto& p : pairs) docs.push_back(to_json(p));
  jsonl::write(path, docs);
  return docs.size();
}

std::vector<PreferencePairRecord> load_dpo_dataset(const std::filesystem::path& path) {
  std::vector<PreferencePairRecord> out;
  const auto lines = jsonl::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    try {
      out.push_back(pair_from_json(nlohmann::json::parse(lines[i])));
    } catch (const nlohmann::json::exception& e) {
      throw MalformedRecord(i + 1, e.what());
    }
  }
  return out;
}

std::size_t char_quarter_tokens(std::string_view text) { return (text.size() + 3) / 4; }

std::size_t word_tokens(std::string_view text) {
  std::size_t words = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++words;
    in_word = !space;
  }
  return words;
}

SftResult emit_sft_dataset(std::span<const SftExample> examples, const std::filesystem::path& path,
                           std::size_t max_tokens, const TokenCounter& counter) {
  if (!counter) throw PreconditionViolation("token counter required");
  SftResult result;
  std::vector<nlohmann::ordered_json> docs;
  for (const auto& ex : examples) {
    if (ex.references.references.empty()) throw PreconditionViolation("no reference for " + ex.instruction.id);
    const auto& completion = ex.references.references.front().text;
    if (counter(ex.instruction.text) + counter(completion) > max_tokens) {
      ++result.filtered;
      continue;
    }
    nlohmann::ordered_json doc;
    doc["prompt"] = ex.instruction.text;
    doc["completion"] = completion;
    docs.push_back(std::move(doc));
  }
  jsonl::write(path, docs);
  result.written = docs.size();
  return result;
}

}  // namespace refjudge
