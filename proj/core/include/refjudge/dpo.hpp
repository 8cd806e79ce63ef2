#pragma once

#include <array>
#include <span>

#include <nlohmann/json.hpp>

namespace refjudge {

// Sequence-level log-probabilities of the chosen (y_w) and rejected (y_l)
// responses under the policy and the frozen reference model.
struct LogProbQuad {
  double lp_policy_chosen = 0.0;
  double lp_policy_rejected = 0.0;
  double lp_ref_chosen = 0.0;
  double lp_ref_rejected = 0.0;
};

inline constexpr std::array<double, 5> kBetaGrid{0.005, 0.01, 0.02, 0.05, 0.1};

struct DpoGrad {
  double policy_chosen = 0.0;
  double policy_rejected = 0.0;
  double ref_chosen = 0.0;
  double ref_rejected = 0.0;
};

// z = beta * ((pc - rc) - (pr - rr)). Throws NonFiniteInput / PreconditionViolation.
double dpo_margin(const LogProbQuad& quad, double beta);

// -log sigmoid(z), evaluated without overflow for any finite z.
double dpo_loss(const LogProbQuad& quad, double beta);
DpoGrad dpo_grad(const LogProbQuad& quad, double beta);
double batch_loss(std::span<const LogProbQuad> quads, double beta);

// softplus(-z) and sigmoid(z) in stable form.
double neg_log_sigmoid(double z);
double sigmoid(double z);

// {lp_pc, lp_pr, lp_rc, lp_rr}
LogProbQuad quad_from_json(const nlohmann::json& doc);
nlohmann::ordered_json to_json(const LogProbQuad& quad);

}  // namespace refjudge
