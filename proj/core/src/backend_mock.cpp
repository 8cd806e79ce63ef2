#include "refjudge/backend.hpp"
#include "refjudge/errors.hpp"
#include "refjudge/jsonl.hpp"

namespace refjudge {
namespace {

std::vector<std::string> response_list(const nlohmann::json& v, const std::string& where) {
  if (v.is_string()) return {v.get<std::string>()};
  if (v.is_array() && !v.empty()) {
    std::vector<std::string> out;
    for (const auto& item : v) {
      if (!item.is_string()) throw Error(where + ": responses must be strings");
      out.push_back(item.get<std::string>());
    }
    return out;
  }
  throw Error(where + ": expected a string or a nonempty array of strings");
}

std::string expand(std::string text, int sample) {
  static constexpr std::string_view kToken = "{sample}";
  const std::string value = std::to_string(sample);
  for (auto pos = text.find(kToken); pos != std::string::npos; pos = text.find(kToken, pos + value.size()))
    text.replace(pos, kToken.size(), value);
  return text;
}

std::int64_t approx_tokens(std::size_t chars) { return static_cast<std::int64_t>((chars + 3) / 4); }

}  // namespace

int sample_index(const std::optional<std::string>& seed_tag) {
  static constexpr std::string_view kPrefix = "sample-";
  if (!seed_tag || !seed_tag->starts_with(kPrefix)) return 0;
  try {
    return std::stoi(seed_tag->substr(kPrefix.size()));
  } catch (const std::exception&) {
    return 0;
  }
}

ScriptedMock::ScriptedMock(const nlohmann::json& script) {
  if (!script.is_object()) throw Error("mock script must be a JSON object");
  if (auto it = script.find("entries"); it != script.end()) {
    for (const auto& [key, value] : it->items()) entries_[key] = response_list(value, "entries." + key);
  }
  if (auto it = script.find("rules"); it != script.end()) {
    std::size_t idx = 0;
    for (const auto& r : *it) {
      const std::string where = "rules[" + std::to_string(idx++) + "]";
      Rule rule;
      if (r.contains("contains")) rule.contains = r.at("contains").get<std::string>();
      if (r.contains("regex")) {
        try {
          rule.regex.emplace(r.at("regex").get<std::string>(), std::regex::ECMAScript);
        } catch (const std::regex_error& e) {
          throw Error(where + ": bad regex: " + e.what());
        }
      }
      if (r.contains("model")) rule.model = r.at("model").get<std::string>();
      rule.responses = response_list(r.at("responses"), where);
      rules_.push_back(std::move(rule));
    }
  }
  if (auto it = script.find("default"); it != script.end()) default_ = response_list(*it, "default");
}

std::unique_ptr<ScriptedMock> ScriptedMock::from_file(const std::filesystem::path& path) {
  try {
    return std::make_unique<ScriptedMock>(nlohmann::json::parse(jsonl::read_text(path)));
  } catch (const nlohmann::json::exception& e) {
    throw Error("mock script " + path.string() + ": " + e.what());
  }
}

ChatResponse ScriptedMock::complete(const ChatRequest& req) {
  ++calls_;
  const std::vector<std::string>* responses = nullptr;
  const std::string key = cache_key(req);
  if (auto it = entries_.find(key); it != entries_.end()) responses = &it->second;
  if (!responses) {
    for (const auto& rule : rules_) {
      if (rule.model && *rule.model != req.model) continue;
      if (rule.contains && req.user.find(*rule.contains) == std::string::npos) continue;
      if (rule.regex && !std::regex_search(req.user, *rule.regex)) continue;
      responses = &rule.responses;
      break;
    }
  }
  if (!responses && !default_.empty()) responses = &default_;
  if (!responses) throw MockMiss(key);

  const int k = sample_index(req.seed_tag);
  ChatResponse resp;
  for (int j = 0; j < req.n; ++j) {
    const auto& text = (*responses)[static_cast<std::size_t>(k + j) % responses->size()];
    resp.choices.push_back(expand(text, k + j));
    resp.usage.completion_tokens += approx_tokens(resp.choices.back().size());
  }
  resp.usage.prompt_tokens = approx_tokens(req.user.size() + (req.system ? req.system->size() : 0));
  return resp;
}

}  // namespace refjudge
