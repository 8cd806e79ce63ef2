#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <regex>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace refjudge {

inline constexpr int kJudgeMaxTokens = 1024;
inline constexpr int kGenerationMaxTokens = 2048;
inline constexpr double kSamplingTemperature = 0.8;

struct ChatRequest {
  std::string model;
  std::optional<std::string> system;
  std::string user;
  double temperature = 0.0;
  int max_tokens = kJudgeMaxTokens;
  int n = 1;
  std::optional<std::string> seed_tag;
};

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct ChatResponse {
  std::vector<std::string> choices;
  Usage usage;
  bool from_cache = false;
};

// Hex SHA-256 over the request content; identical requests share a key.
std::string cache_key(const ChatRequest& req);

nlohmann::json to_json(const ChatResponse& resp);
ChatResponse chat_response_from_json(const nlohmann::json& doc);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  // Must be safe to call from several threads at once.
  virtual ChatResponse complete(const ChatRequest& req) = 0;
};

// A per-item failure inside a batch.
struct BackendFailure {
  enum class Kind { Exhausted, Refused, MockMiss, Other };
  Kind kind = Kind::Other;
  int status = 0;
  std::string message;
};

using BatchResult = std::variant<ChatResponse, BackendFailure>;

// Results come back in request order. At most min(parallelism, reqs.size())
// calls are in flight at once.
std::vector<BatchResult> run_batch(ChatBackend& backend, std::span<const ChatRequest> reqs,
                                   int parallelism);

// --- HTTP -----------------------------------------------------------------

struct HttpResponse {
  int status = 0;  // 0: no response (connection error or timeout)
  std::string body;
  std::string error;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse post_json(const std::string& path, const std::string& body,
                                 const std::string& bearer_token) = 0;
};

// base_url like "https://api.example.com/v1"; requests go to <base_url>/chat/completions.
std::unique_ptr<HttpTransport> make_http_transport(const std::string& base_url,
                                                   std::chrono::seconds timeout);

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{1000};
  double multiplier = 2.0;
};

bool is_retryable_status(int status);

struct EndpointConfig {
  std::string base_url;
  std::string api_key_env = "REFJUDGE_API_KEY";  // empty: send no credential
  std::chrono::seconds timeout{120};
  RetryPolicy retry;
};

struct TransportStats {
  std::uint64_t requests = 0;
  std::uint64_t attempts = 0;
  std::uint64_t retries = 0;
};

class OpenAIBackend final : public ChatBackend {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  // Reads the credential from the configured environment variable; throws
  // PreconditionViolation when it is required but unset.
  OpenAIBackend(EndpointConfig config, std::unique_ptr<HttpTransport> transport,
                Sleeper sleeper = {}, std::uint64_t jitter_seed = std::random_device{}());

  ChatResponse complete(const ChatRequest& req) override;
  TransportStats stats() const;

  static std::string request_body(const ChatRequest& req);

 private:
  std::chrono::milliseconds backoff(int attempt);

  EndpointConfig config_;
  std::unique_ptr<HttpTransport> transport_;
  Sleeper sleeper_;
  std::string api_key_;
  std::mutex rng_mu_;
  std::mt19937_64 rng_;
  std::atomic<std::uint64_t> requests_{0};
  std::atomic<std::uint64_t> attempts_{0};
  std::atomic<std::uint64_t> retries_{0};
};

// --- scripted mock ---------------------------------------------------------

// Script format:
//   {"entries": {"<cache key>": "text" | ["text", ...]},
//    "rules":   [{"contains": "...", "regex": "...", "model": "...",
//                 "responses": ["...", ...]}],
//    "default": "text" | ["text", ...]}
// Lookup order: exact key, first matching rule, default; otherwise MockMiss.
// A rule matches when every condition it names holds on the user message
// (model compares the request model). With a "sample-<k>" seed tag, choice j
// is responses[(k + j) % size]; "{sample}" in a response expands to k + j.
class ScriptedMock final : public ChatBackend {
 public:
  explicit ScriptedMock(const nlohmann::json& script);
  static std::unique_ptr<ScriptedMock> from_file(const std::filesystem::path& path);

  ChatResponse complete(const ChatRequest& req) override;
  std::uint64_t calls() const { return calls_.load(); }

 private:
  struct Rule {
    std::optional<std::string> contains;
    std::optional<std::regex> regex;
    std::optional<std::string> model;
    std::vector<std::string> responses;
  };

  std::map<std::string, std::vector<std::string>> entries_;
  std::vector<Rule> rules_;
  std::vector<std::string> default_;
  std::atomic<std::uint64_t> calls_{0};
};

// Sample index encoded in a "sample-<k>" seed tag, else 0.
int sample_index(const std::optional<std::string>& seed_tag);

// --- cache -----------------------------------------------------------------

// One JSON document per key under the cache directory.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  std::optional<ChatResponse> get(const std::string& key) const;
  void put(const std::string& key, const ChatRequest& req, const ChatResponse& resp);
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path path_for(const std::string& key) const;

  std::filesystem::path dir_;
  std::mutex write_mu_;
};

struct CacheStats {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
};

class CachedBackend final : public ChatBackend {
 public:
  CachedBackend(ChatBackend& inner, ResponseCache& cache) : inner_(inner), cache_(cache) {}

  ChatResponse complete(const ChatRequest& req) override;
  CacheStats stats() const { return {hits_.load(), misses_.load()}; }

 private:
  ChatBackend& inner_;
  ResponseCache& cache_;
  std::atomic<std::uint64_t> hits_{0};
  std::atomic<std::uint64_t> misses_{0};
};

}  // namespace refjudge
