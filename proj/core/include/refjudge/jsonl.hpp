#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace refjudge::jsonl {

using ordered_json = nlohmann::ordered_json;

// Reads a text file and splits it on '\n'. A trailing newline does not
// produce an empty final line. Throws IoError.
std::vector<std::string> read_lines(const std::filesystem::path& path);

// Compact single-line serialization used by every line-delimited file.
std::string dump(const ordered_json& value);

// Writes one document per line, LF-terminated, via a temporary file and
// rename so readers never observe a partial file.
void write(const std::filesystem::path& path, const std::vector<ordered_json>& docs);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace refjudge::jsonl
