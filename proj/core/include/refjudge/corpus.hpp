#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace refjudge {

// The five human-annotated meta-evaluation sets plus anything user supplied.
enum class Dataset { Nat, Adv, MT, Ins, HREF, Custom };

std::string_view to_string(Dataset d);
std::optional<Dataset> dataset_from_string(std::string_view name);

// Published instance count for the five named sets, nullopt for Custom.
std::optional<std::size_t> expected_count(Dataset d);

inline constexpr std::size_t kNamedCorpusTotal = 1385;

struct Instruction {
  std::string id;
  std::string text;
  Dataset source_dataset = Dataset::Custom;
};

struct CandidateOutput {
  std::string text;
  std::string source_model;
  std::optional<int> sampling_index;
};

enum class Label { A, B };

std::string_view to_string(Label l);
Label flipped(Label l);

struct PreferenceInstance {
  Instruction instruction;
  CandidateOutput output_a;
  CandidateOutput output_b;
  Label human_label = Label::A;
  nlohmann::ordered_json meta;  // null when the record carried no meta
};

struct Reference {
  std::string text;
  std::string generator_model;
};

// Index 0 is the primary reference used by single-reference protocols.
struct ReferenceSet {
  std::string instruction_id;
  std::vector<Reference> references;
};

struct CorpusManifest {
  Dataset dataset = Dataset::Custom;
  std::optional<std::size_t> expected_count;
  std::size_t actual_count = 0;
  std::size_t skipped_ties = 0;
};

struct Diagnostic {
  enum class Kind { TieLabel, CountMismatch, Unpaired };
  Kind kind;
  std::string id;
  std::string message;
};

struct LoadedCorpus {
  std::vector<PreferenceInstance> instances;
  CorpusManifest manifest;
  std::vector<Diagnostic> diagnostics;
};

// Turn delimiter used when a multi-turn conversation is flattened into a
// single instruction slot.
inline constexpr std::string_view kTurnDelimiter = "---TURN---";
std::string flatten_turns(std::span<const std::string> turns);

// Line-delimited corpus records:
//   {"id","dataset","instruction","output_a","output_b","human_label","meta"?}
// "instruction" may also be an array of turns, which is flattened.
// Throws MalformedRecord / DuplicateId / IoError. Tie-labelled records are
// skipped and reported as diagnostics.
LoadedCorpus load_corpus(const std::filesystem::path& path, Dataset dataset);
LoadedCorpus parse_corpus(std::span<const std::string> lines, Dataset dataset);

nlohmann::ordered_json to_json(const PreferenceInstance& inst);
void save_corpus(const std::filesystem::path& path, std::span<const PreferenceInstance> instances);

// {"instruction_id", "references": [{"text","generator_model"}]}
std::vector<ReferenceSet> load_references(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const ReferenceSet& refs);
ReferenceSet reference_set_from_json(const nlohmann::json& doc);
void save_references(const std::filesystem::path& path, std::span<const ReferenceSet> refs);

// Instruction-only files used by the data factory: {"id","instruction","dataset"?}
std::vector<Instruction> load_instructions(const std::filesystem::path& path);
void save_instructions(const std::filesystem::path& path, std::span<const Instruction> instructions);

struct AttachedInstance {
  const PreferenceInstance* instance;
  const ReferenceSet* references;
};

struct AttachResult {
  std::vector<AttachedInstance> paired;
  std::vector<const PreferenceInstance*> unpaired;
  std::vector<Diagnostic> diagnostics;
};

// Pairs instances with reference sets by instruction id. The result points
// into both inputs, which must outlive it. Throws DanglingReference when a
// set matches no instance, DuplicateId when two sets share an id.
AttachResult attach_references(std::span<const PreferenceInstance> instances,
                               std::span<const ReferenceSet> refs);

}  // namespace refjudge
