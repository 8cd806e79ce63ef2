#include "refjudge/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <unordered_map>
#include <unordered_set>

#include "refjudge/errors.hpp"
#include "refjudge/jsonl.hpp"

namespace refjudge {
namespace {

struct DatasetInfo {
  Dataset dataset;
  std::string_view name;
  std::optional<std::size_t> expected;
};

constexpr std::array<DatasetInfo, 6> kDatasets{{
    {Dataset::Nat, "Nat", 100},
    {Dataset::Adv, "Adv", 319},
    {Dataset::MT, "MT", 200},
    {Dataset::Ins, "Ins", 411},
    {Dataset::HREF, "HREF", 355},
    {Dataset::Custom, "Custom", std::nullopt},
}};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

template <class Json>
const Json& require(const Json& doc, const char* key, std::size_t line_no) {
  auto it = doc.find(key);
  if (it == doc.end()) throw MalformedRecord(line_no, std::string("missing field '") + key + "'");
  return *it;
}

template <class Json>
std::string require_string(const Json& doc, const char* key, std::size_t line_no) {
  const auto& v = require(doc, key, line_no);
  if (!v.is_string()) throw MalformedRecord(line_no, std::string("field '") + key + "' must be a string");
  return v.template get<std::string>();
}

bool blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

std::string_view to_string(Dataset d) {
  for (const auto& info : kDatasets)
    if (info.dataset == d) return info.name;
  return "Custom";
}

std::optional<Dataset> dataset_from_string(std::string_view name) {
  for (const auto& info : kDatasets)
    if (info.name == name) return info.dataset;
  return std::nullopt;
}

std::optional<std::size_t> expected_count(Dataset d) {
  for (const auto& info : kDatasets)
    if (info.dataset == d) return info.expected;
  return std::nullopt;
}

std::string_view to_string(Label l) { return l == Label::A ? "A" : "B"; }

Label flipped(Label l) { return l == Label::A ? Label::B : Label::A; }

std::string flatten_turns(std::span<const std::string> turns) {
  std::string out;
  for (std::size_t i = 0; i < turns.size(); ++i) {
    if (i > 0) {
      out += '\n';
      out += kTurnDelimiter;
      out += '\n';
    }
    out += turns[i];
  }
  return out;
}

LoadedCorpus parse_corpus(std::span<const std::string> lines, Dataset dataset) {
  LoadedCorpus result;
  result.manifest.dataset = dataset;
  result.manifest.expected_count = expected_count(dataset);
  std::unordered_set<std::string> seen;

  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (blank(lines[i])) continue;
    nlohmann::ordered_json doc;
    try {
      doc = nlohmann::ordered_json::parse(lines[i]);
    } catch (const nlohmann::json::parse_error& e) {
      throw MalformedRecord(line_no, e.what());
    }
    if (!doc.is_object()) throw MalformedRecord(line_no, "record is not a JSON object");

    PreferenceInstance inst;
    inst.instruction.id = require_string(doc, "id", line_no);
    if (inst.instruction.id.empty()) throw MalformedRecord(line_no, "empty id");

    const std::string ds = require_string(doc, "dataset", line_no);
    auto parsed_ds = dataset_from_string(ds);
    if (!parsed_ds) throw MalformedRecord(line_no, "unknown dataset '" + ds + "'");
    inst.instruction.source_dataset = *parsed_ds;

    const auto& instr = require(doc, "instruction", line_no);
    if (instr.is_string()) {
      inst.instruction.text = instr.get<std::string>();
    } else if (instr.is_array()) {
      std::vector<std::string> turns;
      for (const auto& t : instr) {
        if (!t.is_string()) throw MalformedRecord(line_no, "instruction turns must be strings");
        turns.push_back(t.get<std::string>());
      }
      inst.instruction.text = flatten_turns(turns);
    } else {
      throw MalformedRecord(line_no, "field 'instruction' must be a string or array of turns");
    }
    if (inst.instruction.text.empty()) throw MalformedRecord(line_no, "empty instruction");

    inst.output_a.text = require_string(doc, "output_a", line_no);
    inst.output_b.text = require_string(doc, "output_b", line_no);

    const std::string label = require_string(doc, "human_label", line_no);
    if (label == "A") {
      inst.human_label = Label::A;
    } else if (label == "B") {
      inst.human_label = Label::B;
    } else if (lower(label) == "tie") {
      ++result.manifest.skipped_ties;
      result.diagnostics.push_back({Diagnostic::Kind::TieLabel, inst.instruction.id,
                                    "line " + std::to_string(line_no) + ": tie label skipped"});
      continue;
    } else {
      throw MalformedRecord(line_no, "human_label must be \"A\" or \"B\"");
    }

    if (auto it = doc.find("meta"); it != doc.end()) {
      if (!it->is_object()) throw MalformedRecord(line_no, "field 'meta' must be an object");
      inst.meta = *it;
    }

    if (!seen.insert(inst.instruction.id).second) throw DuplicateId(inst.instruction.id);
    result.instances.push_back(std::move(inst));
  }

  result.manifest.actual_count = result.instances.size();
  if (result.manifest.expected_count &&
      *result.manifest.expected_count != result.manifest.actual_count) {
    result.diagnostics.push_back(
        {Diagnostic::Kind::CountMismatch, std::string(to_string(dataset)),
         "expected " + std::to_string(*result.manifest.expected_count) + " instances, loaded " +
             std::to_string(result.manifest.actual_count)});
  }
  return result;
}

LoadedCorpus load_corpus(const std::filesystem::path& path, Dataset dataset) {
  const auto lines = jsonl::read_lines(path);
  return parse_corpus(lines, dataset);
}

nlohmann::ordered_json to_json(const PreferenceInstance& inst) {
  nlohmann::ordered_json doc;
  doc["id"] = inst.instruction.id;
  doc["dataset"] = std::string(to_string(inst.instruction.source_dataset));
  doc["instruction"] = inst.instruction.text;
  doc["output_a"] = inst.output_a.text;
  doc["output_b"] = inst.output_b.text;
  doc["human_label"] = std::string(to_string(inst.human_label));
  if (!inst.meta.is_null()) doc["meta"] = inst.meta;
  return doc;
}

void save_corpus(const std::filesystem::path& path, std::span<const PreferenceInstance> instances) {
  std::vector<nlohmann::ordered_json> docs;
  docs.reserve(instances.size());
  for (const auto& inst : instances) docs.push_back(to_json(inst));
  jsonl::write(path, docs);
}

ReferenceSet reference_set_from_json(const nlohmann::json& doc) {
  ReferenceSet set;
  set.instruction_id = doc.at("instruction_id").get<std::string>();
  for (const auto& r : doc.at("references")) {
    set.references.push_back({r.at("text").get<std::string>(), r.value("generator_model", "")});
  }
  return set;
}

std::vector<ReferenceSet> load_references(const std::filesystem::path& path) {
  std::vector<ReferenceSet> sets;
  const auto lines = jsonl::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (blank(lines[i])) continue;
    try {
      sets.push_back(reference_set_from_json(nlohmann::json::parse(lines[i])));
    } catch (const nlohmann::json::exception& e) {
      throw MalformedRecord(i + 1, e.what());
    }
  }
  return sets;
}

nlohmann::ordered_json to_json(const ReferenceSet& refs) {
  nlohmann::ordered_json doc;
  doc["instruction_id"] = refs.instruction_id;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : refs.references) {
    nlohmann::ordered_json item;
    item["text"] = r.text;
    item["generator_model"] = r.generator_model;
    arr.push_back(std::move(item));
  }
  doc["references"] = std::move(arr);
  return doc;
}

void save_references(const std::filesystem::path& path, std::span<const ReferenceSet> refs) {
  std::vector<nlohmann::ordered_json> docs;
  for (const auto& r : refs) docs.push_back(to_json(r));
  jsonl::write(path, docs);
}

std::vector<Instruction> load_instructions(const std::filesystem::path& path) {
  std::vector<Instruction> out;
  std::unordered_set<std::string> seen;
  const auto lines = jsonl::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (blank(lines[i])) continue;
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::parse_error& e) {
      throw MalformedRecord(line_no, e.what());
    }
    if (!doc.is_object()) throw MalformedRecord(line_no, "record is not a JSON object");
    Instruction instr;
    instr.id = require_string(doc, "id", line_no);
    instr.text = require_string(doc, "instruction", line_no);
    if (instr.id.empty() || instr.text.empty()) throw MalformedRecord(line_no, "empty id or instruction");
    if (auto it = doc.find("dataset"); it != doc.end() && it->is_string()) {
      instr.source_dataset = dataset_from_string(it->get<std::string>()).value_or(Dataset::Custom);
    }
    if (!seen.insert(instr.id).second) throw DuplicateId(instr.id);
    out.push_back(std::move(instr));
  }
  return out;
}

void save_instructions(const std::filesystem::path& path, std::span<const Instruction> instructions) {
  std::vector<nlohmann::ordered_json> docs;
  for (const auto& instr : instructions) {
    nlohmann::ordered_json doc;
    doc["id"] = instr.id;
    doc["instruction"] = instr.text;
    doc["dataset"] = std::string(to_string(instr.source_dataset));
    docs.push_back(std::move(doc));
  }
  jsonl::write(path, docs);
}

AttachResult attach_references(std::span<const PreferenceInstance> instances,
                               std::span<const ReferenceSet> refs) {
  std::unordered_map<std::string_view, const PreferenceInstance*> by_id;
  for (const auto& inst : instances) by_id.emplace(inst.instruction.id, &inst);

  std::unordered_map<std::string_view, const ReferenceSet*> ref_by_id;
  for (const auto& set : refs) {
    if (!by_id.contains(set.instruction_id)) throw DanglingReference(set.instruction_id);
    if (!ref_by_id.emplace(set.instruction_id, &set).second) throw DuplicateId(set.instruction_id);
  }

  AttachResult result;
  for (const auto& inst : instances) {
    auto it = ref_by_id.find(inst.instruction.id);
    if (it == ref_by_id.end()) {
      result.unpaired.push_back(&inst);
      result.diagnostics.push_back(
          {Diagnostic::Kind::Unpaired, inst.instruction.id, "no reference set for instance"});
    } else {
      result.paired.push_back({&inst, it->second});
    }
  }
  return result;
}

}  // namespace refjudge
