#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "refjudge/backend.hpp"
#include "refjudge/corpus.hpp"
#include "refjudge/dpo.hpp"
#include "refjudge/errors.hpp"
#include "refjudge/factory.hpp"
#include "refjudge/judge.hpp"
#include "refjudge/jsonl.hpp"
#include "refjudge/protocol.hpp"
#include "refjudge/report.hpp"
#include "refjudge/stats.hpp"

#ifndef REFJUDGE_VERSION_STRING
#define REFJUDGE_VERSION_STRING "0.0.0"
#endif

namespace refjudge::cli {
namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  struct Backend {
    std::string base_url;
    std::string api_key_env = "REFJUDGE_API_KEY";
    int parallelism = 8;
    int max_attempts = 5;
    int base_delay_ms = 1000;
    int timeout_s = 120;
    std::string cache_dir;  // empty: <outputs>/cache
    bool cache = true;
    std::string mock;
  } backend;
  struct Judge {
    std::string model;
    std::string protocol = "RefEval";
    bool vote_over_references = false;
  } judge;
  struct Factory {
    std::string policy_model;
    int n_candidates = kDefaultCandidates;
    double temperature = kSamplingTemperature;
    std::string generator_model;
    std::size_t sft_max_tokens = kDefaultSftMaxTokens;
    std::string token_counter = "chars";
  } factory;
  struct Paths {
    std::string corpus;
    std::string references;
    std::string instructions;
    std::string categories;
    std::string outputs = "refjudge-out";
  } paths;
  std::string dataset = "Custom";
  std::uint64_t seed = kDefaultSeed;
  int resamples = kDefaultResamples;
  double confidence = kDefaultConfidence;
};

// Strict reader: unknown keys are configuration mistakes.
class ConfigReader {
 public:
  ConfigReader(const nlohmann::json& doc, std::string where) : doc_(doc), where_(std::move(where)) {
    if (!doc_.is_object()) throw UsageError(where_ + " must be a JSON object");
  }
  ~ConfigReader() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [key, _] : doc_.items())
      if (!seen_.count(key)) throw UsageError("unknown config key " + where_ + "." + key);
  }

  template <class T>
  void read(const char* key, T& target) {
    seen_.insert(key);
    if (auto it = doc_.find(key); it != doc_.end()) {
      try {
        target = it->get<T>();
      } catch (const nlohmann::json::exception&) {
        throw UsageError("config key " + where_ + "." + key + " has the wrong type");
      }
    }
  }

  const nlohmann::json* section(const char* key) {
    seen_.insert(key);
    auto it = doc_.find(key);
    return it == doc_.end() ? nullptr : &*it;
  }

 private:
  const nlohmann::json& doc_;
  std::string where_;
  std::set<std::string> seen_;
};

void load_config(const fs::path& path, RunConfig& c) {
  if (!fs::exists(path)) throw UsageError("config file not found: " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(jsonl::read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError("config " + path.string() + ": " + e.what());
  }
  ConfigReader top(doc, "config");
  if (const auto* s = top.section("backend")) {
    ConfigReader r(*s, "backend");
    r.read("base_url", c.backend.base_url);
    r.read("api_key_env", c.backend.api_key_env);
    r.read("parallelism", c.backend.parallelism);
    r.read("max_attempts", c.backend.max_attempts);
    r.read("base_delay_ms", c.backend.base_delay_ms);
    r.read("timeout_s", c.backend.timeout_s);
    r.read("cache_dir", c.backend.cache_dir);
    r.read("cache", c.backend.cache);
    r.read("mock", c.backend.mock);
  }
  if (const auto* s = top.section("judge")) {
    ConfigReader r(*s, "judge");
    r.read("model", c.judge.model);
    r.read("protocol", c.judge.protocol);
    r.read("references", c.paths.references);
    r.read("vote_over_references", c.judge.vote_over_references);
  }
  if (const auto* s = top.section("factory")) {
    ConfigReader r(*s, "factory");
    r.read("policy_model", c.factory.policy_model);
    r.read("n_candidates", c.factory.n_candidates);
    r.read("temperature", c.factory.temperature);
    r.read("generator_model", c.factory.generator_model);
    r.read("sft_max_tokens", c.factory.sft_max_tokens);
    r.read("token_counter", c.factory.token_counter);
  }
  if (const auto* s = top.section("paths")) {
    ConfigReader r(*s, "paths");
    r.read("corpus", c.paths.corpus);
    r.read("references", c.paths.references);
    r.read("instructions", c.paths.instructions);
    r.read("categories", c.paths.categories);
    r.read("outputs", c.paths.outputs);
  }
  if (const auto* s = top.section("bootstrap")) {
    ConfigReader r(*s, "bootstrap");
    r.read("resamples", c.resamples);
    r.read("confidence", c.confidence);
  }
  top.read("dataset", c.dataset);
  top.read("seed", c.seed);
}

void validate(const RunConfig& c) {
  if (c.backend.parallelism < 1) throw UsageError("parallelism must be >= 1");
  if (c.backend.max_attempts < 1) throw UsageError("max_attempts must be >= 1");
  if (c.factory.n_candidates < 2) throw UsageError("n_candidates must be >= 2");
  if (c.factory.temperature < 0.0) throw UsageError("temperature must be >= 0");
  if (c.resamples < 1) throw UsageError("resamples must be >= 1");
  if (!(c.confidence > 0.0 && c.confidence < 1.0)) throw UsageError("confidence must be in (0,1)");
  if (c.factory.token_counter != "chars" && c.factory.token_counter != "words")
    throw UsageError("token_counter must be \"chars\" or \"words\"");
  if (!dataset_from_string(c.dataset)) throw UsageError("unknown dataset " + c.dataset);
}

ojson snapshot(const RunConfig& c) {
  ojson doc;
  doc["backend"] = {{"base_url", c.backend.base_url},
                    {"api_key_env", c.backend.api_key_env},
                    {"parallelism", c.backend.parallelism},
                    {"max_attempts", c.backend.max_attempts},
                    {"base_delay_ms", c.backend.base_delay_ms},
                    {"timeout_s", c.backend.timeout_s},
                    {"cache_dir", c.backend.cache_dir},
                    {"cache", c.backend.cache},
                    {"mock", c.backend.mock}};
  doc["judge"] = {{"model", c.judge.model},
                  {"protocol", c.judge.protocol},
                  {"vote_over_references", c.judge.vote_over_references}};
  doc["factory"] = {{"policy_model", c.factory.policy_model},
                    {"n_candidates", c.factory.n_candidates},
                    {"temperature", c.factory.temperature},
                    {"generator_model", c.factory.generator_model},
                    {"sft_max_tokens", c.factory.sft_max_tokens},
                    {"token_counter", c.factory.token_counter}};
  doc["paths"] = {{"corpus", c.paths.corpus},
                  {"references", c.paths.references},
                  {"instructions", c.paths.instructions},
                  {"categories", c.paths.categories},
                  {"outputs", c.paths.outputs}};
  doc["bootstrap"] = {{"resamples", c.resamples}, {"confidence", c.confidence}};
  doc["dataset"] = c.dataset;
  doc["seed"] = c.seed;
  return doc;
}

// Flags are collected separately and applied on top of the config file.
class Overrides {
 public:
  explicit Overrides(CLI::App* app) : app_(app) {}

  template <class T>
  CLI::Option* option(const std::string& name, const std::string& desc, std::function<void(RunConfig&, const T&)> apply) {
    auto holder = std::make_shared<T>();
    auto* opt = app_->add_option(name, *holder, desc);
    items_.push_back({opt, [holder, apply](RunConfig& c) { apply(c, *holder); }});
    return opt;
  }

  CLI::Option* flag(const std::string& name, const std::string& desc, std::function<void(RunConfig&)> apply) {
    auto* opt = app_->add_flag(name, desc);
    items_.push_back({opt, std::move(apply)});
    return opt;
  }

  void apply(RunConfig& c) const {
    for (const auto& [opt, fn] : items_)
      if (opt->count() > 0) fn(c);
  }

 private:
  CLI::App* app_;
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> items_;
};

struct Command {
  CLI::App* app = nullptr;
  std::unique_ptr<Overrides> overrides;
  std::string config_path;
};

void add_common(Command& cmd, bool backend) {
  auto& o = *cmd.overrides;
  cmd.app->add_option("--config", cmd.config_path, "JSON run configuration");
  o.option<std::string>("--out", "output directory", [](RunConfig& c, const std::string& v) { c.paths.outputs = v; });
  o.option<std::uint64_t>("--seed", "seed for bootstrap resampling", [](RunConfig& c, const std::uint64_t& v) { c.seed = v; });
  if (!backend) return;
  o.option<int>("--parallelism", "requests in flight", [](RunConfig& c, const int& v) { c.backend.parallelism = v; });
  o.option<std::string>("--mock", "scripted mock backend (JSON)", [](RunConfig& c, const std::string& v) { c.backend.mock = v; });
  o.option<std::string>("--base-url", "OpenAI-compatible endpoint, e.g. https://host/v1",
                        [](RunConfig& c, const std::string& v) { c.backend.base_url = v; });
  o.option<std::string>("--api-key-env", "environment variable holding the credential",
                        [](RunConfig& c, const std::string& v) { c.backend.api_key_env = v; });
  o.option<int>("--max-attempts", "attempts per request", [](RunConfig& c, const int& v) { c.backend.max_attempts = v; });
  o.option<std::string>("--cache-dir", "response cache directory (default <out>/cache)",
                        [](RunConfig& c, const std::string& v) { c.backend.cache_dir = v; });
  o.flag("--no-cache", "do not read or write the response cache", [](RunConfig& c) { c.backend.cache = false; });
}

void add_bootstrap(Command& cmd) {
  auto& o = *cmd.overrides;
  o.option<int>("--resamples", "bootstrap resamples", [](RunConfig& c, const int& v) { c.resamples = v; });
  o.option<double>("--confidence", "bootstrap confidence", [](RunConfig& c, const double& v) { c.confidence = v; });
}

RunConfig resolve(const Command& cmd) {
  RunConfig c;
  if (!cmd.config_path.empty()) load_config(cmd.config_path, c);
  cmd.overrides->apply(c);
  validate(c);
  return c;
}

// --- backend stack -----------------------------------------------------------

struct BackendStack {
  std::unique_ptr<ScriptedMock> mock;
  std::unique_ptr<OpenAIBackend> http;
  std::unique_ptr<ResponseCache> cache;
  std::unique_ptr<CachedBackend> cached;

  ChatBackend& top() {
    if (cached) return *cached;
    if (mock) return *mock;
    return *http;
  }

  ojson stats() const {
    ojson doc;
    doc["transport_calls"] = mock ? mock->calls() : http->stats().requests;
    if (http) {
      doc["http_attempts"] = http->stats().attempts;
      doc["http_retries"] = http->stats().retries;
    }
    doc["cache_hits"] = cached ? cached->stats().hits : 0;
    doc["cache_misses"] = cached ? cached->stats().misses : 0;
    return doc;
  }
};

std::unique_ptr<BackendStack> make_backend(const RunConfig& c) {
  auto stack = std::make_unique<BackendStack>();
  if (!c.backend.mock.empty()) {
    if (!fs::exists(c.backend.mock)) throw UsageError("mock script not found: " + c.backend.mock);
    stack->mock = ScriptedMock::from_file(c.backend.mock);
  } else if (!c.backend.base_url.empty()) {
    EndpointConfig ep;
    ep.base_url = c.backend.base_url;
    ep.api_key_env = c.backend.api_key_env;
    ep.timeout = std::chrono::seconds(c.backend.timeout_s);
    ep.retry.max_attempts = c.backend.max_attempts;
    ep.retry.base_delay = std::chrono::milliseconds(c.backend.base_delay_ms);
    try {
      stack->http = std::make_unique<OpenAIBackend>(ep, make_http_transport(ep.base_url, ep.timeout));
    } catch (const PreconditionViolation& e) {
      throw UsageError(e.what());
    }
  } else {
    throw UsageError("no backend: pass --mock or --base-url (or set backend.base_url)");
  }
  if (c.backend.cache) {
    const fs::path dir = c.backend.cache_dir.empty() ? fs::path(c.paths.outputs) / "cache" : fs::path(c.backend.cache_dir);
    stack->cache = std::make_unique<ResponseCache>(dir);
    ChatBackend& inner = stack->mock ? static_cast<ChatBackend&>(*stack->mock) : *stack->http;
    stack->cached = std::make_unique<CachedBackend>(inner, *stack->cache);
  }
  return stack;
}

// --- helpers -----------------------------------------------------------------

fs::path require_file(const std::string& path, const char* flag) {
  if (path.empty()) throw UsageError(std::string(flag) + " is required");
  if (!fs::exists(path)) throw IoError(std::string(flag) + " path not found: " + path);
  return path;
}

const std::string& require_value(const std::string& v, const char* flag) {
  if (v.empty()) throw UsageError(std::string(flag) + " is required");
  return v;
}

ProtocolId parse_protocol(const std::string& name) {
  try {
    return protocol_from_string(name);
  } catch (const UnknownProtocol& e) {
    throw UsageError(e.what());
  }
}

BootstrapOptions bootstrap_of(const RunConfig& c) { return {c.resamples, c.confidence, c.seed}; }

void write_json(const fs::path& path, const ojson& doc) { jsonl::write_text(path, doc.dump(2) + "\n"); }

void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& c, ojson counts) {
  ojson doc;
  doc["command"] = command;
  doc["version"] = REFJUDGE_VERSION_STRING;
  doc["seed"] = c.seed;
  doc["config"] = snapshot(c);
  doc["counts"] = std::move(counts);
  write_json(dir / "manifest.json", doc);
}

void write_stats(const fs::path& dir, const BackendStack& backend) { write_json(dir / "stats.json", backend.stats()); }

std::string report_label(ProtocolId p, const std::string& judge_model, const std::string& group) {
  return std::string(to_string(p)) + "@" + judge_model + "/" + group;
}

// Per-dataset rows plus an "all" row for each protocol/judge combination.
ReportMap build_reports(std::span<const EvalRecord> records, const BootstrapOptions& opts, ojson* macro_out) {
  std::map<std::string, std::vector<EvalRecord>> groups;
  std::map<std::string, std::map<std::string, double>> per_dataset_means;
  std::map<std::string, std::vector<EvalRecord>> all;
  for (const auto& r : records) {
    groups[report_label(r.protocol, r.judge_model, std::string(to_string(r.dataset)))].push_back(r);
    all[report_label(r.protocol, r.judge_model, "all")].push_back(r);
  }
  ReportMap reports;
  for (const auto& [label, recs] : groups) reports[label] = compute_accuracy(recs, opts);
  for (const auto& [label, recs] : all) reports[label] = compute_accuracy(recs, opts);
  if (macro_out) {
    std::map<std::string, std::vector<double>> means;
    for (const auto& [label, recs] : groups) {
      const auto prefix = label.substr(0, label.rfind('/'));
      means[prefix].push_back(reports[label].mean);
    }
    for (const auto& [prefix, m] : means) (*macro_out)[prefix] = macro_average(m);
  }
  return reports;
}

// Exit status for a run that produced `good` results and the given failures.
int outcome(std::size_t good, const std::vector<BackendFailure::Kind>& failure_kinds) {
  if (failure_kinds.empty()) return kOk;
  const bool all_exhausted = std::all_of(failure_kinds.begin(), failure_kinds.end(),
                                         [](auto k) { return k == BackendFailure::Kind::Exhausted; });
  return good == 0 && all_exhausted ? kBackendExhausted : kPartial;
}

BackendFailure::Kind kind_from_flags(const std::vector<std::string>& flags) {
  for (const auto& f : flags)
    if (f.find("gave up after") != std::string::npos) return BackendFailure::Kind::Exhausted;
  return BackendFailure::Kind::Other;
}

// --- commands ----------------------------------------------------------------

int cmd_eval(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto corpus_path = require_file(c.paths.corpus, "--corpus");
  const ProtocolId protocol = parse_protocol(c.judge.protocol);
  const auto& t = traits(protocol);
  if (t.kind == ProtocolKind::Classification) throw UsageError("eval needs a pairwise or pointwise protocol");
  require_value(c.judge.model, "--judge-model");
  if (c.judge.vote_over_references && t.needs_reference != ReferenceNeed::Single)
    throw UsageError("--vote needs a single-reference protocol");

  auto corpus = load_corpus(corpus_path, *dataset_from_string(c.dataset));
  for (const auto& d : corpus.diagnostics) err << "warning: " << d.message << "\n";

  std::vector<ReferenceSet> refs;
  std::map<std::string, const ReferenceSet*> ref_by_id;
  if (t.needs_reference != ReferenceNeed::None) {
    refs = load_references(require_file(c.paths.references, "--refs"));
    const auto attached = attach_references(corpus.instances, refs);
    for (const auto& a : attached.paired) ref_by_id[a.instance->instruction.id] = a.references;
  }

  const fs::path dir = c.paths.outputs;
  auto backend = make_backend(c);
  const auto templates = TemplateStore::load_default();

  std::vector<JudgeItem> items;
  std::vector<ojson> failures;
  std::vector<BackendFailure::Kind> failure_kinds;
  for (const auto& inst : corpus.instances) {
    const ReferenceSet* set = nullptr;
    if (t.needs_reference != ReferenceNeed::None) {
      auto it = ref_by_id.find(inst.instruction.id);
      set = it == ref_by_id.end() ? nullptr : it->second;
      const std::size_t have = set ? set->references.size() : 0;
      if (have < static_cast<std::size_t>(t.reference_count)) {
        failures.push_back({{"instance_id", inst.instruction.id},
                            {"reason", "needs " + std::to_string(t.reference_count) + " reference(s), has " +
                                           std::to_string(have)}});
        failure_kinds.push_back(BackendFailure::Kind::Other);
        continue;
      }
    }
    items.push_back({&inst, set});
  }

  Judge judge(backend->top(), templates,
              {c.judge.model, c.backend.parallelism, kJudgeMaxTokens, c.judge.vote_over_references});
  const auto records = judge.judge_all(items, protocol);

  std::vector<EvalRecord> good;
  for (const auto& r : records) {
    if (r.failed()) {
      ojson f;
      f["instance_id"] = r.instance_id;
      f["reason"] = r.flags;
      f["record"] = to_json(r);
      failures.push_back(std::move(f));
      failure_kinds.push_back(kind_from_flags(r.flags));
    } else {
      good.push_back(r);
    }
  }

  save_records(dir / "records.jsonl", good);
  jsonl::write(dir / "failures.jsonl", failures);

  ojson counts;
  counts["instances"] = corpus.instances.size();
  counts["skipped_ties"] = corpus.manifest.skipped_ties;
  counts["records"] = good.size();
  counts["failures"] = failures.size();
  counts["judge_calls"] = judge.calls();

  if (!good.empty()) {
    ojson macro = ojson::object();
    const auto reports = build_reports(good, bootstrap_of(c), &macro);
    std::optional<CategoryBreakdown> cats;
    if (!c.paths.categories.empty())
      cats = breakdown(good, load_categories(require_file(c.paths.categories, "--categories")), bootstrap_of(c));
    const CategoryBreakdown* b = cats ? &*cats : nullptr;
    jsonl::write_text(dir / "report.json", render_report(reports, b, ReportFormat::Json));
    const std::string text = render_report(reports, b, ReportFormat::Text);
    jsonl::write_text(dir / "report.txt", text);
    counts["macro_mean"] = macro;
    out << text;
  } else {
    err << "error: no instance could be judged\n";
  }

  write_manifest(dir, "eval", c, counts);
  write_stats(dir, *backend);
  if (!failures.empty()) err << failures.size() << " instance(s) failed; see " << (dir / "failures.jsonl").string() << "\n";
  return outcome(good.size(), failure_kinds);
}

std::vector<Instruction> instructions_of(const RunConfig& c) {
  if (!c.paths.instructions.empty()) return load_instructions(require_file(c.paths.instructions, "--instructions"));
  if (!c.paths.corpus.empty()) {
    const auto corpus = load_corpus(require_file(c.paths.corpus, "--corpus"), *dataset_from_string(c.dataset));
    std::vector<Instruction> out;
    for (const auto& inst : corpus.instances) out.push_back(inst.instruction);
    return out;
  }
  throw UsageError("--instructions (or --corpus) is required");
}

int cmd_build_pairs(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto instructions = load_instructions(require_file(c.paths.instructions, "--instructions"));
  const ProtocolId protocol = parse_protocol(c.judge.protocol);
  if (traits(protocol).kind != ProtocolKind::Pairwise) throw UsageError("build-pairs needs a pairwise protocol");
  require_value(c.judge.model, "--judge-model");
  require_value(c.factory.policy_model, "--policy-model");
  if (c.paths.references.empty() && c.factory.generator_model.empty())
    throw UsageError("build-pairs needs --refs or --generator-model");

  const fs::path dir = c.paths.outputs;
  auto backend = make_backend(c);
  const auto templates = TemplateStore::load_default();
  Factory factory(backend->top(), templates, {c.backend.parallelism, kGenerationMaxTokens});

  std::vector<ojson> failures;
  std::vector<BackendFailure::Kind> failure_kinds;
  std::vector<ReferenceSet> refs;
  if (!c.paths.references.empty()) {
    refs = load_references(require_file(c.paths.references, "--refs"));
  } else {
    auto gen = factory.generate_references(instructions, c.factory.generator_model);
    refs = std::move(gen.sets);
    save_references(dir / "references.jsonl", refs);
    for (const auto& f : gen.failures) {
      failures.push_back({{"id", f.id}, {"stage", "reference"}, {"reason", f.message}});
      failure_kinds.push_back(BackendFailure::Kind::Other);
    }
  }
  std::map<std::string, const ReferenceSet*> ref_by_id;
  for (const auto& r : refs) {
    if (!ref_by_id.emplace(r.instruction_id, &r).second) throw DuplicateId(r.instruction_id);
  }

  std::vector<Instruction> usable;
  std::vector<SftExample> sft;
  for (const auto& instr : instructions) {
    auto it = ref_by_id.find(instr.id);
    if (it == ref_by_id.end() || it->second->references.empty()) {
      if (c.paths.references.empty()) continue;  // already listed as a generation failure
      failures.push_back({{"id", instr.id}, {"stage", "reference"}, {"reason", "no reference"}});
      failure_kinds.push_back(BackendFailure::Kind::Other);
      continue;
    }
    usable.push_back(instr);
    sft.push_back({instr, *it->second});
  }

  auto sampled = factory.sample_pools(usable, c.factory.policy_model, c.factory.n_candidates, c.factory.temperature);
  for (const auto& f : sampled.failures) {
    failures.push_back({{"id", f.id},
                        {"stage", "sampling"},
                        {"reason", PoolUnderfilled(f.obtained, static_cast<std::size_t>(c.factory.n_candidates)).what() +
                                       std::string(": ") + f.message}});
    failure_kinds.push_back(f.message.find("gave up after") != std::string::npos ? BackendFailure::Kind::Exhausted
                                                                                  : BackendFailure::Kind::Other);
  }

  std::vector<const ReferenceSet*> pool_refs;
  for (const auto& pool : sampled.pools) pool_refs.push_back(ref_by_id.at(pool.instruction.id));
  const auto scores = factory.round_robin_scores(sampled.pools, protocol, pool_refs, c.judge.model);

  std::vector<PreferencePairRecord> pairs;
  std::size_t skips = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    for (const auto& flag : scores[i].flags) err << "warning: comparison " << flag << " had failed judge calls\n";
    auto sel = select_pair(scores[i], sampled.pools[i]);
    if (auto* p = std::get_if<PreferencePairRecord>(&sel)) {
      pairs.push_back(std::move(*p));
    } else {
      ++skips;
    }
  }

  emit_dpo_dataset(pairs, dir / "dpo.jsonl");
  const TokenCounter counter = c.factory.token_counter == "words" ? TokenCounter(word_tokens) : TokenCounter(char_quarter_tokens);
  const auto sft_result = emit_sft_dataset(sft, dir / "sft.jsonl", c.factory.sft_max_tokens, counter);
  jsonl::write(dir / "failures.jsonl", failures);

  ojson summary;
  summary["pairs"] = pairs.size();
  summary["skips"] = skips;
  summary["judge_calls"] = factory.judge_calls();
  summary["judge_calls_per_instruction"] =
      sampled.pools.empty() ? 0.0 : static_cast<double>(factory.judge_calls()) / static_cast<double>(sampled.pools.size());
  summary["generation_calls"] = factory.generation_calls();
  summary["instructions"] = instructions.size();
  summary["sft_written"] = sft_result.written;
  summary["sft_filtered"] = sft_result.filtered;
  summary["failures"] = failures.size();
  write_manifest(dir, "build-pairs", c, summary);
  write_stats(dir, *backend);
  out << summary.dump() << "\n";
  return outcome(pairs.size() + skips, failure_kinds);
}

int cmd_gen_refs(const RunConfig& c, std::ostream& out, std::ostream&) {
  const auto instructions = instructions_of(c);
  require_value(c.factory.generator_model, "--generator-model");
  const fs::path dir = c.paths.outputs;
  auto backend = make_backend(c);
  const auto templates = TemplateStore::load_default();
  Factory factory(backend->top(), templates, {c.backend.parallelism, kGenerationMaxTokens});
  const auto gen = factory.generate_references(instructions, c.factory.generator_model);

  save_references(dir / "references.jsonl", gen.sets);
  std::vector<ojson> failures;
  std::vector<BackendFailure::Kind> kinds;
  for (const auto& f : gen.failures) {
    failures.push_back({{"id", f.id}, {"reason", f.message}});
    kinds.push_back(f.message.find("gave up after") != std::string::npos ? BackendFailure::Kind::Exhausted
                                                                          : BackendFailure::Kind::Other);
  }
  jsonl::write(dir / "failures.jsonl", failures);
  ojson counts{{"instructions", instructions.size()},
               {"references", gen.sets.size()},
               {"failures", failures.size()},
               {"generation_calls", factory.generation_calls()}};
  write_manifest(dir, "gen-refs", c, counts);
  write_stats(dir, *backend);
  out << counts.dump() << "\n";
  return outcome(gen.sets.size(), kinds);
}

int cmd_agree(const RunConfig& c, const std::vector<std::string>& files, std::ostream& out) {
  if (files.size() != 2) throw UsageError("agree takes exactly two record files");
  const auto a = load_records(require_file(files[0], "records"));
  const auto b_raw = load_records(require_file(files[1], "records"));

  // align the second file to the first by instance id
  std::map<std::string, const EvalRecord*> by_id;
  for (const auto& r : b_raw) by_id[r.instance_id] = &r;
  if (by_id.size() != a.size()) throw Misaligned("record files cover different instances");
  std::vector<EvalRecord> b;
  for (const auto& r : a) {
    auto it = by_id.find(r.instance_id);
    if (it == by_id.end()) throw Misaligned("instance '" + r.instance_id + "' missing from " + files[1]);
    if (it->second->protocol != r.protocol) throw Misaligned("records use different protocols");
    b.push_back(*it->second);
  }

  std::map<std::string, std::pair<std::vector<EvalRecord>, std::vector<EvalRecord>>> groups;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto& g = groups[std::string(to_string(a[i].dataset))];
    g.first.push_back(a[i]);
    g.second.push_back(b[i]);
  }
  ojson doc;
  ojson per = ojson::object();
  std::vector<double> values;
  for (const auto& [name, g] : groups) {
    const double v = inter_judge_agreement(g.first, g.second);
    per[name] = v;
    values.push_back(v);
  }
  doc["instances"] = a.size();
  doc["overall"] = inter_judge_agreement(a, b);
  doc["per_dataset"] = per;
  doc["macro_average"] = macro_average(values);
  if (!c.paths.outputs.empty() && c.paths.outputs != RunConfig{}.paths.outputs) {
    write_json(fs::path(c.paths.outputs) / "agreement.json", doc);
    write_manifest(c.paths.outputs, "agree", c, doc);
  }
  out << doc.dump(2) << "\n";
  return kOk;
}

int cmd_dpo_check(const std::string& quads_path, std::optional<double> beta, bool grid, std::ostream& out) {
  const auto lines = jsonl::read_lines(require_file(quads_path, "--quads"));
  std::vector<LogProbQuad> quads;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      quads.push_back(quad_from_json(nlohmann::json::parse(lines[i])));
    } catch (const nlohmann::json::exception& e) {
      throw MalformedRecord(i + 1, e.what());
    }
  }
  if (quads.empty()) throw EmptyInput("no quads in " + quads_path);

  std::vector<double> betas;
  if (grid) betas.assign(kBetaGrid.begin(), kBetaGrid.end());
  if (beta || !grid) betas.insert(betas.begin(), beta.value_or(0.1));

  char buf[128];
  for (double b : betas) {
    std::snprintf(buf, sizeof buf, "beta %g\n", b);
    out << buf;
    for (std::size_t i = 0; i < quads.size(); ++i) {
      const auto g = dpo_grad(quads[i], b);
      std::snprintf(buf, sizeof buf, "%zu\tz=%.9f\tloss=%.9f\tdpc=%.9f\tdpr=%.9f\n", i + 1, dpo_margin(quads[i], b),
                    dpo_loss(quads[i], b), g.policy_chosen, g.policy_rejected);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "mean\tloss=%.9f\n", batch_loss(quads, b));
    out << buf;
  }
  return kOk;
}

int cmd_classify(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto instructions = instructions_of(c);
  require_value(c.judge.model, "--judge-model");
  const fs::path dir = c.paths.outputs;
  auto backend = make_backend(c);
  const auto templates = TemplateStore::load_default();
  const auto result = classify_instructions(backend->top(), templates, instructions, c.judge.model, c.backend.parallelism);
  save_categories(dir / "categories.jsonl", result.by_id);
  ojson counts;
  counts["categories"] = to_json(result);
  counts["failures"] = result.failures.size();
  counts["judge_calls"] = result.calls;
  write_manifest(dir, "classify", c, counts);
  write_stats(dir, *backend);
  for (const auto& f : result.failures) err << "warning: " << f.id << ": " << f.message << "\n";
  out << counts.dump(2) << "\n";
  std::vector<BackendFailure::Kind> kinds(result.failures.size(), BackendFailure::Kind::Other);
  return outcome(instructions.size() - result.failures.size(), kinds);
}

int cmd_report(const RunConfig& c, const std::vector<std::string>& files, const std::string& format,
               const std::string& out_file, std::ostream& out) {
  if (files.empty()) throw UsageError("report needs at least one record file");
  const auto fmt = report_format_from_string(format);
  if (!fmt) throw UsageError("--format must be text, csv or json");
  std::vector<EvalRecord> records;
  for (const auto& f : files) {
    auto recs = load_records(require_file(f, "records"));
    records.insert(records.end(), recs.begin(), recs.end());
  }
  if (records.empty()) throw EmptyInput("record files hold no records");
  const auto reports = build_reports(records, bootstrap_of(c), nullptr);
  std::optional<CategoryBreakdown> cats;
  if (!c.paths.categories.empty())
    cats = breakdown(records, load_categories(require_file(c.paths.categories, "--categories")), bootstrap_of(c));
  const std::string doc = render_report(reports, cats ? &*cats : nullptr, *fmt);
  if (out_file.empty()) {
    out << doc;
  } else {
    jsonl::write_text(out_file, doc);
  }
  return kOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reference-guided LLM-as-a-judge evaluation and preference-data toolkit", "refjudge"};
  app.require_subcommand(1);
  app.set_version_flag("--version", REFJUDGE_VERSION_STRING);

  auto make = [&](const char* name, const char* desc) {
    Command cmd;
    cmd.app = app.add_subcommand(name, desc);
    cmd.overrides = std::make_unique<Overrides>(cmd.app);
    return cmd;
  };

  // eval
  Command eval = make("eval", "judge a preference corpus and report accuracy");
  add_common(eval, true);
  add_bootstrap(eval);
  {
    auto& o = *eval.overrides;
    o.option<std::string>("--corpus", "preference corpus (JSONL)", [](RunConfig& c, const std::string& v) { c.paths.corpus = v; });
    o.option<std::string>("--dataset", "dataset name for count checks (Nat, Adv, MT, Ins, HREF, Custom)",
                          [](RunConfig& c, const std::string& v) { c.dataset = v; });
    o.option<std::string>("--protocol", "protocol name", [](RunConfig& c, const std::string& v) { c.judge.protocol = v; });
    o.option<std::string>("--judge-model", "judge model", [](RunConfig& c, const std::string& v) { c.judge.model = v; });
    o.option<std::string>("--refs", "reference sets (JSONL)", [](RunConfig& c, const std::string& v) { c.paths.references = v; });
    o.option<std::string>("--categories", "instruction categories from classify",
                          [](RunConfig& c, const std::string& v) { c.paths.categories = v; });
    o.flag("--vote", "judge once per reference and take a majority vote",
           [](RunConfig& c) { c.judge.vote_over_references = true; });
  }

  // build-pairs
  Command pairs = make("build-pairs", "sample candidates, score them round-robin and emit DPO/SFT data");
  add_common(pairs, true);
  {
    auto& o = *pairs.overrides;
    o.option<std::string>("--instructions", "instructions (JSONL)", [](RunConfig& c, const std::string& v) { c.paths.instructions = v; });
    o.option<std::string>("--refs", "reference sets (JSONL)", [](RunConfig& c, const std::string& v) { c.paths.references = v; });
    o.option<std::string>("--protocol", "judging protocol", [](RunConfig& c, const std::string& v) { c.judge.protocol = v; });
    o.option<std::string>("--judge-model", "judge model", [](RunConfig& c, const std::string& v) { c.judge.model = v; });
    o.option<std::string>("--policy-model", "model sampled for candidates",
                          [](RunConfig& c, const std::string& v) { c.factory.policy_model = v; });
    o.option<std::string>("--generator-model", "reference generator when --refs is absent",
                          [](RunConfig& c, const std::string& v) { c.factory.generator_model = v; });
    o.option<int>("--n-candidates", "samples per instruction", [](RunConfig& c, const int& v) { c.factory.n_candidates = v; });
    o.option<double>("--temperature", "sampling temperature", [](RunConfig& c, const double& v) { c.factory.temperature = v; });
    o.option<std::size_t>("--sft-max-tokens", "SFT length filter", [](RunConfig& c, const std::size_t& v) { c.factory.sft_max_tokens = v; });
    o.option<std::string>("--token-counter", "chars or words", [](RunConfig& c, const std::string& v) { c.factory.token_counter = v; });
  }

  // gen-refs
  Command gen = make("gen-refs", "generate one reference per instruction");
  add_common(gen, true);
  {
    auto& o = *gen.overrides;
    o.option<std::string>("--instructions", "instructions (JSONL)", [](RunConfig& c, const std::string& v) { c.paths.instructions = v; });
    o.option<std::string>("--corpus", "take instructions from a preference corpus",
                          [](RunConfig& c, const std::string& v) { c.paths.corpus = v; });
    o.option<std::string>("--generator-model", "reference generator",
                          [](RunConfig& c, const std::string& v) { c.factory.generator_model = v; });
  }

  // agree
  Command agree = make("agree", "inter-judge agreement between two record files");
  add_common(agree, false);
  std::vector<std::string> agree_files;
  agree.app->add_option("records", agree_files, "two records.jsonl files")->expected(2);

  // dpo-check
  Command dpo = make("dpo-check", "evaluate the DPO loss and gradients over log-prob quads");
  std::string quads_path;
  double beta_value = 0.1;
  bool beta_grid = false;
  dpo.app->add_option("--quads,quads", quads_path, "JSONL of {lp_pc, lp_pr, lp_rc, lp_rr}");
  auto* beta_opt = dpo.app->add_option("--beta", beta_value, "beta (default 0.1)");
  dpo.app->add_flag("--grid", beta_grid, "also evaluate the beta grid 0.005..0.1");

  // classify
  Command classify = make("classify", "classify instructions into four categories");
  add_common(classify, true);
  {
    auto& o = *classify.overrides;
    o.option<std::string>("--instructions", "instructions (JSONL)", [](RunConfig& c, const std::string& v) { c.paths.instructions = v; });
    o.option<std::string>("--corpus", "take instructions from a preference corpus",
                          [](RunConfig& c, const std::string& v) { c.paths.corpus = v; });
    o.option<std::string>("--judge-model,--model", "classifier model", [](RunConfig& c, const std::string& v) { c.judge.model = v; });
  }

  // report
  Command report = make("report", "render accuracy reports from record files");
  add_common(report, false);
  add_bootstrap(report);
  std::vector<std::string> report_files;
  std::string report_format = "text";
  std::string report_out;
  report.app->add_option("--records,records", report_files, "records.jsonl files");
  report.app->add_option("--format", report_format, "text, csv or json");
  report.app->add_option("--output,-o", report_out, "write the document here instead of stdout");
  report.overrides->option<std::string>("--categories", "instruction categories from classify",
                                        [](RunConfig& c, const std::string& v) { c.paths.categories = v; });

  std::vector<const char*> argv{"refjudge"};
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (eval.app->parsed()) return cmd_eval(resolve(eval), out, err);
    if (pairs.app->parsed()) return cmd_build_pairs(resolve(pairs), out, err);
    if (gen.app->parsed()) return cmd_gen_refs(resolve(gen), out, err);
    if (agree.app->parsed()) return cmd_agree(resolve(agree), agree_files, out);
    if (dpo.app->parsed())
      return cmd_dpo_check(quads_path, beta_opt->count() ? std::optional(beta_value) : std::nullopt, beta_grid, out);
    if (classify.app->parsed()) return cmd_classify(resolve(classify), out, err);
    if (report.app->parsed()) return cmd_report(resolve(report), report_files, report_format, report_out, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const BackendExhausted& e) {
    err << "error: " << e.what() << "\n";
    return kBackendExhausted;
  } catch (const BackendRefused& e) {
    err << "error: " << e.what() << "\n";
    return kBackendExhausted;
  } catch (const PreconditionViolation& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const UnknownProtocol& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  }
  return kUsage;
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace refjudge::cli
