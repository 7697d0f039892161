#include "seqstate/policy/wis.hpp"

#include <algorithm>
#include <cmath>

namespace seqstate::policy {

WisResult wis_estimate(std::span<const double> weights, std::span<const double> returns) {
  if (weights.empty() || weights.size() != returns.size()) {
    throw ContractError("wis_estimate: need one weight per return and at least one trajectory");
  }
  WisResult out;
  out.weights.reserve(weights.size());
  double sw = 0.0, sw2 = 0.0, swr = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double raw = weights[i];
    if (std::isnan(raw) || raw < 0.0) throw ContractError("wis_estimate: weights must be >= 0");
    const double w = raw == 0.0 ? 0.0 : std::clamp(raw, kMinWeight, kMaxWeight);
    out.weights.push_back(w);
    sw += w;
    sw2 += w * w;
    swr += w * returns[i];
  }
  if (sw == 0.0) throw NumericalError("wis_estimate: every importance weight is zero");
  out.value = swr / sw;
  out.ess = sw * sw / sw2;
  return out;
}

WisResult wis_evaluate(const ActionProbabilities& eval_policy, const ActionProbabilities& behavior,
                       std::span<const Episode> episodes) {
  if (episodes.empty()) throw ContractError("wis_evaluate: no episodes");
  const double log_min = std::log(kMinWeight), log_max = std::log(kMaxWeight);
  std::vector<double> weights, returns;
  weights.reserve(episodes.size());
  returns.reserve(episodes.size());
  for (const Episode& e : episodes) {
    const Matrix pe = eval_policy(e.states);
    const Matrix pb = behavior(e.states);
    if (pe.rows() != e.length() || pb.rows() != e.length() || pe.cols() != kNumActions || pb.cols() != kNumActions) {
      throw ContractError("wis_evaluate: policies must return T x 25 probabilities");
    }
    double log_w = 0.0;
    for (Index t = 0; t < e.length(); ++t) {
      const int a = e.actions[static_cast<std::size_t>(t)];
      const double num = pe(t, a), den = pb(t, a);
      if (num == den) continue;  // keeps identical policies at exactly 1
      log_w += std::log(num) - std::log(den);
    }
    // The clip is applied in log space so long products cannot overflow.
    weights.push_back(std::exp(std::clamp(log_w, log_min, log_max)));
    returns.push_back(e.terminal_reward);
  }
  return wis_estimate(weights, returns);
}

WisResult wis_evaluate(const QPolicy& policy, const BcPolicy& behavior, std::span<const Episode> episodes,
                       double epsilon) {
  return wis_evaluate([&](const Matrix& s) { return policy.action_probabilities(s, epsilon); },
                      [&](const Matrix& s) { return behavior.probabilities(s); }, episodes);
}

}  // namespace seqstate::policy
