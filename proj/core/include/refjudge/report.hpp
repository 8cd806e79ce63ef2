#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "refjudge/backend.hpp"
#include "refjudge/corpus.hpp"
#include "refjudge/factory.hpp"
#include "refjudge/protocol.hpp"
#include "refjudge/stats.hpp"

namespace refjudge {

inline constexpr std::array<Category, 4> kCategories{Category::CodingMath, Category::InformationSeeking,
                                                     Category::ReasoningPlanning, Category::CreativeTasks};

struct Classification {
  std::map<std::string, Category> by_id;  // every instruction, Unclassified included
  std::map<Category, std::size_t> counts;
  std::vector<ItemFailure> failures;  // backend failures (also Unclassified)
  std::uint64_t calls = 0;
};

Classification classify_instructions(ChatBackend& backend, const TemplateStore& templates,
                                     std::span<const Instruction> instructions,
                                     const std::string& classifier_model, int parallelism = 8);

nlohmann::ordered_json to_json(const Classification& c);
// {"id": <1..4 | 0>} lines, as written by the classify command.
std::map<std::string, Category> load_categories(const std::filesystem::path& path);
void save_categories(const std::filesystem::path& path, const std::map<std::string, Category>& by_id);

struct CategoryBreakdown {
  std::map<Category, AccuracyReport> per_category;  // categories with at least one record
  std::map<Category, std::size_t> counts;           // all four, zero-filled
  std::size_t unclassified = 0;
};

CategoryBreakdown breakdown(std::span<const EvalRecord> records,
                            const std::map<std::string, Category>& categories,
                            const BootstrapOptions& opts = {});

enum class ReportFormat { Text, Csv, Json };
std::optional<ReportFormat> report_format_from_string(std::string_view s);

using ReportMap = std::map<std::string, AccuracyReport>;

// Rows are ordered by label. Throws EmptyInput when reports is empty.
std::string render_report(const ReportMap& reports, const CategoryBreakdown* breakdown, ReportFormat format);

nlohmann::ordered_json to_json(const AccuracyReport& rep);
AccuracyReport accuracy_report_from_json(const nlohmann::json& doc);
ReportMap reports_from_json(const nlohmann::json& doc);

// RFC 4180 field quoting.
std::string csv_field(std::string_view s);

}  // namespace refjudge
