#include "refjudge/dpo.hpp"

#include <cmath>

#include "refjudge/errors.hpp"

namespace refjudge {
namespace {

void check(const LogProbQuad& q, double beta) {
  if (!std::isfinite(q.lp_policy_chosen) || !std::isfinite(q.lp_policy_rejected) ||
      !std::isfinite(q.lp_ref_chosen) || !std::isfinite(q.lp_ref_rejected))
    throw NonFiniteInput("log-probabilities must be finite");
  if (!std::isfinite(beta)) throw NonFiniteInput("beta must be finite");
  if (!(beta > 0.0)) throw PreconditionViolation("beta must be positive");
}

}  // namespace

double neg_log_sigmoid(double z) {
  if (z > 0.0) return std::log1p(std::exp(-z));
  return -z + std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double dpo_margin(const LogProbQuad& q, double beta) {
  check(q, beta);
  const double z = beta * ((q.lp_policy_chosen - q.lp_ref_chosen) - (q.lp_policy_rejected - q.lp_ref_rejected));
  if (!std::isfinite(z)) throw NonFiniteInput("margin overflowed");
  return z;
}

double dpo_loss(const LogProbQuad& quad, double beta) { return neg_log_sigmoid(dpo_margin(quad, beta)); }

DpoGrad dpo_grad(const LogProbQuad& quad, double beta) {
  // 1 - sigmoid(z) == sigmoid(-z), which keeps precision for large z
  const double s = beta * sigmoid(-dpo_margin(quad, beta));
  return {-s, s, s, -s};
}

double batch_loss(std::span<const LogProbQuad> quads, double beta) {
  if (quads.empty()) throw EmptyInput("batch of zero quads");
  double sum = 0.0;
  for (const auto& q : quads) sum += dpo_loss(q, beta);
  return sum / static_cast<double>(quads.size());
}

LogProbQuad quad_from_json(const nlohmann::json& doc) {
  auto get = [&](const char* key) {
    const auto& v = doc.at(key);
    if (!v.is_number()) throw NonFiniteInput(std::string("field '") + key + "' is not a number");
    return v.get<double>();
  };
  return {get("lp_pc"), get("lp_pr"), get("lp_rc"), get("lp_rr")};
}

nlohmann::ordered_json to_json(const LogProbQuad& quad) {
  nlohmann::ordered_json doc;
  doc["lp_pc"] = quad.lp_policy_chosen;
  doc["lp_pr"] = quad.lp_policy_rejected;
  doc["lp_rc"] = quad.lp_ref_chosen;
  doc["lp_rr"] = quad.lp_ref_rejected;
  return doc;
}

}  // namespace refjudge
