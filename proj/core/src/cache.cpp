#include <ctime>

#include "refjudge/backend.hpp"
#include "refjudge/errors.hpp"
#include "refjudge/jsonl.hpp"

namespace refjudge {
namespace {

std::string utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw IoError("cannot create cache directory " + dir_.string() + ": " + ec.message());
}

std::filesystem::path ResponseCache::path_for(const std::string& key) const {
  return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<ChatResponse> ResponseCache::get(const std::string& key) const {
  const auto path = path_for(key);
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  try {
    const auto doc = nlohmann::json::parse(jsonl::read_text(path));
    return chat_response_from_json(doc.at("response"));
  } catch (const nlohmann::json::exception&) {
    // a torn or hand-edited entry is treated as a miss and rewritten
    return std::nullopt;
  } catch (const IoError&) {
    return std::nullopt;
  }
}

void ResponseCache::put(const std::string& key, const ChatRequest& req, const ChatResponse& resp) {
  nlohmann::ordered_json doc;
  doc["key"] = key;
  doc["request"] = {{"model", req.model},
                    {"system", req.system ? nlohmann::json(*req.system) : nlohmann::json(nullptr)},
                    {"user", req.user},
                    {"temperature", req.temperature},
                    {"max_tokens", req.max_tokens},
                    {"n", req.n},
                    {"seed_tag", req.seed_tag ? nlohmann::json(*req.seed_tag) : nlohmann::json(nullptr)}};
  doc["response"] = to_json(resp);
  doc["created_at"] = utc_now();
  const std::string text = doc.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
  std::lock_guard lock(write_mu_);
  jsonl::write_text(path_for(key), text);
}

ChatResponse CachedBackend::complete(const ChatRequest& req) {
  const std::string key = cache_key(req);
  if (auto hit = cache_.get(key)) {
    ++hits_;
    hit->from_cache = true;
    return *hit;
  }
  ++misses_;
  ChatResponse resp = inner_.complete(req);
  resp.from_cache = false;
  cache_.put(key, req, resp);
  return resp;
}

}  // namespace refjudge
