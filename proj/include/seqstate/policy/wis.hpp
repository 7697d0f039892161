#pragma once

// Weighted importance sampling over whole trajectories.

#include <functional>
#include <span>
#include <vector>

#include "seqstate/policy/bcq.hpp"
#include "seqstate/policy/buffer.hpp"

namespace seqstate::policy {

inline constexpr double kMinWeight = 1e-8;
inline constexpr double kMaxWeight = 1e8;

struct WisResult {
  double value = 0.0;
  double ess = 0.0;
  std::vector<double> weights;  // after clipping
};

// sum(w R) / sum(w) and (sum w)^2 / sum(w^2). Weights are clipped first.
// ContractError on empty or mismatched input, NumericalError if every weight is 0.
WisResult wis_estimate(std::span<const double> weights, std::span<const double> returns);

// T x 25 action probabilities for one trajectory's states.
using ActionProbabilities = std::function<Matrix(const Matrix& states)>;

// w_n = prod_t pi_e(a_t | s_t) / pi_b(a_t | s_t), accumulated in log space;
// returns are the episodes' terminal rewards.
WisResult wis_evaluate(const ActionProbabilities& eval_policy, const ActionProbabilities& behavior,
                       std::span<const Episode> episodes);

WisResult wis_evaluate(const QPolicy& policy, const BcPolicy& behavior, std::span<const Episode> episodes,
                       double epsilon);

}  // namespace seqstate::policy
