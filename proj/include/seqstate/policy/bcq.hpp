#pragma once

// Discrete batch-constrained Q-learning and a behavior-cloning classifier.

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqstate/encoders/model.hpp"
#include "seqstate/errors.hpp"
#include "seqstate/numcore/layers.hpp"
#include "seqstate/policy/buffer.hpp"

namespace seqstate::policy {

using numcore::ParamList;
using numcore::Var;

inline constexpr int kNumActions = cohort::kNumActions;

// Actions whose probability ratio to the most likely action is >= tau.
// The argmax always qualifies, so the result is never empty. Sorted.
std::vector<int> bcq_filter(std::span<const double> probs, double tau);

struct BcConfig {
  Index hidden = 64;
  int epochs = 30;
  Index batch_size = 256;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

// Two-layer classifier latent -> 25 action probabilities.
class BcPolicy {
 public:
  BcPolicy() = default;
  BcPolicy(Index latent_dim, Index hidden, std::uint64_t seed);

  Var logits(const Var& states) const { return net_(states); }
  Matrix probabilities(const Matrix& states) const;
  Index latent_dim() const { return net_.layers.front().in(); }
  Index hidden() const { return net_.layers.front().out(); }
  const ParamList& params() const { return params_; }

 private:
  numcore::Mlp net_;
  ParamList params_;
};

struct BcResult {
  BcPolicy policy;
  double train_accuracy = 0.0;
  std::vector<int> missing_actions;  // classes never seen in the buffer
};

// Cross-entropy training on (state, action). NumericalError on divergence.
BcResult behavior_clone(const TransitionBuffer& buffer, const BcConfig& config);

struct BcqConfig {
  long iterations = 20000;
  long eval_every = 500;
  Index batch_size = 128;
  double learning_rate = 1e-3;
  double gamma = 0.99;
  double tau = 0.3;
  double epsilon = 0.01;  // greedy smoothing used for evaluation
  long target_update = 1000;
  Index hidden = 64;
  double clip_norm = 10.0;
  std::uint64_t seed = 0;
};

// 128 hidden units for DDM latents, learning rate 1e-5 for CDE latents.
BcqConfig default_bcq_config(encoders::EncoderKind kind);

nlohmann::json bcq_config_to_json(const BcqConfig& config);
BcqConfig bcq_config_from_json(const nlohmann::json& j);

// Q-network, generative filter and target network. Q and filter are
// separate three-layer MLPs over the latent state.
class QPolicy {
 public:
  QPolicy() = default;
  QPolicy(Index latent_dim, Index hidden, double tau, std::uint64_t seed);

  Var q(const Var& states) const { return q_(states); }
  Var q_target(const Var& states) const { return target_(states); }
  Var filter_logits(const Var& states) const { return filter_(states); }

  Matrix q_values(const Matrix& states) const;
  Matrix filter_probabilities(const Matrix& states) const;
  // argmax of Q over the filter's candidate set, per row.
  std::vector<int> greedy_actions(const Matrix& states) const;
  // (1 - eps) on the greedy action plus eps / 25 everywhere.
  Matrix action_probabilities(const Matrix& states, double epsilon) const;

  void sync_target();

  Index latent_dim() const { return q_.layers.front().in(); }
  Index hidden() const { return q_.layers.front().out(); }
  double tau() const { return tau_; }
  // Q then filter; these are what gets optimized and saved.
  const ParamList& params() const { return params_; }
  const ParamList& q_params() const { return q_params_; }
  const ParamList& filter_params() const { return filter_params_; }
  const ParamList& target_params() const { return target_params_; }

 private:
  numcore::Mlp q_, filter_, target_;
  ParamList params_, q_params_, filter_params_, target_params_;
  double tau_ = 0.3;
};

struct CurveRow {
  long iteration = 0;
  double wis_return = 0.0;
  double ess = 0.0;
  double q_loss = 0.0;       // mean since the previous row
  double filter_loss = 0.0;  // mean since the previous row
};

struct WisResult;
using PolicyEvaluator = std::function<WisResult(const QPolicy&)>;

struct BcqResult {
  QPolicy policy;
  std::vector<CurveRow> curve;
};

// Runs config.iterations updates. Every eval_every iterations (and never at
// 0) a curve row is recorded, with WIS filled in when `evaluate` is given.
BcqResult train_bcq(const TransitionBuffer& buffer, const BcqConfig& config, const PolicyEvaluator& evaluate = {},
                    const std::function<void(const CurveRow&)>& on_row = {});

std::string curve_csv(std::span<const CurveRow> rows);

}  // namespace seqstate::policy
