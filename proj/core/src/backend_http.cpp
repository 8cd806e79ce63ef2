#include <cstdlib>
#include <stdexcept>
#include <thread>

#include <httplib.h>

#include "refjudge/backend.hpp"
#include "refjudge/errors.hpp"

namespace refjudge {
namespace {

class HttplibTransport final : public HttpTransport {
 public:
  HttplibTransport(std::string origin, std::string prefix, std::chrono::seconds timeout)
      : origin_(std::move(origin)), prefix_(std::move(prefix)), timeout_(timeout) {}

  HttpResponse post_json(const std::string& path, const std::string& body,
                         const std::string& bearer_token) override {
    // httplib clients are not safe for concurrent use; one per call keeps
    // run_batch workers independent.
    httplib::Client client(origin_);
    client.set_connection_timeout(timeout_.count(), 0);
    client.set_read_timeout(timeout_.count(), 0);
    client.set_write_timeout(timeout_.count(), 0);
    httplib::Headers headers;
    if (!bearer_token.empty()) headers.emplace("Authorization", "Bearer " + bearer_token);
    auto res = client.Post(prefix_ + path, headers, body, "application/json");
    if (!res) return {0, "", httplib::to_string(res.error())};
    return {res->status, res->body, ""};
  }

 private:
  std::string origin_;
  std::string prefix_;
  std::chrono::seconds timeout_;
};

ChatResponse parse_completion(const std::string& body, int n) {
  const auto doc = nlohmann::json::parse(body);
  ChatResponse resp;
  for (const auto& choice : doc.at("choices")) {
    const auto& content = choice.at("message").at("content");
    resp.choices.push_back(content.is_string() ? content.get<std::string>() : std::string());
  }
  if (static_cast<int>(resp.choices.size()) != n)
    throw std::length_error("endpoint returned " + std::to_string(resp.choices.size()) + " choices, expected " +
                            std::to_string(n));
  if (auto it = doc.find("usage"); it != doc.end() && it->is_object()) {
    resp.usage.prompt_tokens = it->value("prompt_tokens", std::int64_t{0});
    resp.usage.completion_tokens = it->value("completion_tokens", std::int64_t{0});
  }
  return resp;
}

}  // namespace

std::unique_ptr<HttpTransport> make_http_transport(const std::string& base_url,
                                                   std::chrono::seconds timeout) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) throw PreconditionViolation("base URL needs a scheme: " + base_url);
  const auto path_start = base_url.find('/', scheme_end + 3);
  std::string origin = base_url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return std::make_unique<HttplibTransport>(std::move(origin), std::move(prefix), timeout);
}

bool is_retryable_status(int status) { return status == 0 || status == 429 || status >= 500; }

OpenAIBackend::OpenAIBackend(EndpointConfig config, std::unique_ptr<HttpTransport> transport,
                             Sleeper sleeper, std::uint64_t jitter_seed)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      sleeper_(std::move(sleeper)),
      rng_(jitter_seed) {
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  if (config_.retry.max_attempts < 1) throw PreconditionViolation("max_attempts must be >= 1");
  if (!config_.api_key_env.empty()) {
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (!key || !*key)
      throw PreconditionViolation("credential variable " + config_.api_key_env + " is not set");
    api_key_ = key;
  }
}

std::string OpenAIBackend::request_body(const ChatRequest& req) {
  nlohmann::json messages = nlohmann::json::array();
  if (req.system) messages.push_back({{"role", "system"}, {"content", *req.system}});
  messages.push_back({{"role", "user"}, {"content", req.user}});
  nlohmann::json body = {{"model", req.model},
                         {"messages", std::move(messages)},
                         {"temperature", req.temperature},
                         {"max_tokens", req.max_tokens},
                         {"n", req.n}};
  return body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

std::chrono::milliseconds OpenAIBackend::backoff(int attempt) {
  double cap = static_cast<double>(config_.retry.base_delay.count());
  for (int i = 1; i < attempt; ++i) cap *= config_.retry.multiplier;
  std::lock_guard lock(rng_mu_);
  std::uniform_real_distribution<double> dist(0.0, cap);
  return std::chrono::milliseconds(static_cast<std::int64_t>(dist(rng_)));
}

ChatResponse OpenAIBackend::complete(const ChatRequest& req) {
  ++requests_;
  const std::string body = request_body(req);
  HttpResponse last;
  for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
    ++attempts_;
    last = transport_->post_json("/chat/completions", body, api_key_);
    if (last.status >= 200 && last.status < 300) {
      try {
        return parse_completion(last.body, req.n);
      } catch (const nlohmann::json::exception& e) {
        throw BackendRefused(last.status, std::string("malformed completion body: ") + e.what());
      } catch (const std::length_error& e) {
        throw BackendRefused(last.status, e.what());
      }
    }
    if (!is_retryable_status(last.status))
      throw BackendRefused(last.status, "endpoint refused request with HTTP " +
                                            std::to_string(last.status) + ": " + last.body.substr(0, 200));
    if (attempt < config_.retry.max_attempts) {
      ++retries_;
      sleeper_(backoff(attempt));
    }
  }
  const std::string detail = last.status == 0 ? last.error : "HTTP " + std::to_string(last.status);
  throw BackendExhausted(last.status, "gave up after " + std::to_string(config_.retry.max_attempts) +
                                          " attempts: " + detail);
}

TransportStats OpenAIBackend::stats() const {
  return {requests_.load(), attempts_.load(), retries_.load()};
}

}  // namespace refjudge
