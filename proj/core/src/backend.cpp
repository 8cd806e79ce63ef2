#include "refjudge/backend.hpp"

#include <algorithm>
#include <thread>

#include <openssl/evp.h>

#include "refjudge/errors.hpp"

namespace refjudge {

std::string cache_key(const ChatRequest& req) {
  nlohmann::json doc = nlohmann::json::array();
  doc.push_back(req.model);
  doc.push_back(req.system ? nlohmann::json(*req.system) : nlohmann::json(nullptr));
  doc.push_back(req.user);
  doc.push_back(req.temperature);
  doc.push_back(req.max_tokens);
  doc.push_back(req.n);
  doc.push_back(req.seed_tag ? nlohmann::json(*req.seed_tag) : nlohmann::json(nullptr));
  const std::string text = doc.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);

  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 failed");

  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xf]);
  }
  return hex;
}

nlohmann::json to_json(const ChatResponse& resp) {
  return {{"choices", resp.choices},
          {"usage",
           {{"prompt_tokens", resp.usage.prompt_tokens},
            {"completion_tokens", resp.usage.completion_tokens}}}};
}

ChatResponse chat_response_from_json(const nlohmann::json& doc) {
  ChatResponse resp;
  resp.choices = doc.at("choices").get<std::vector<std::string>>();
  if (auto it = doc.find("usage"); it != doc.end()) {
    resp.usage.prompt_tokens = it->value("prompt_tokens", std::int64_t{0});
    resp.usage.completion_tokens = it->value("completion_tokens", std::int64_t{0});
  }
  return resp;
}

namespace {

BatchResult call_one(ChatBackend& backend, const ChatRequest& req) {
  try {
    return backend.complete(req);
  } catch (const BackendExhausted& e) {
    return BackendFailure{BackendFailure::Kind::Exhausted, e.last_status(), e.what()};
  } catch (const BackendRefused& e) {
    return BackendFailure{BackendFailure::Kind::Refused, e.status(), e.what()};
  } catch (const MockMiss& e) {
    return BackendFailure{BackendFailure::Kind::MockMiss, 0, e.what()};
  } catch (const std::exception& e) {
    return BackendFailure{BackendFailure::Kind::Other, 0, e.what()};
  }
}

}  // namespace

std::vector<BatchResult> run_batch(ChatBackend& backend, std::span<const ChatRequest> reqs,
                                   int parallelism) {
  if (parallelism < 1) throw PreconditionViolation("parallelism must be >= 1");
  std::vector<BatchResult> results(reqs.size());
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(parallelism), reqs.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < reqs.size(); ++i) results[i] = call_one(backend, reqs[i]);
    return results;
  }

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next.fetch_add(1); i < reqs.size(); i = next.fetch_add(1))
      results[i] = call_one(backend, reqs[i]);
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  pool.clear();
  return results;
}

}  // namespace refjudge
