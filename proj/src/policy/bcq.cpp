#include "seqstate/policy/bcq.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "seqstate/io.hpp"
#include "seqstate/numcore/optim.hpp"
#include "seqstate/policy/wis.hpp"

namespace seqstate::policy {

using numcore::Activation;
using numcore::Mlp;
using numcore::Rng;

std::vector<int> bcq_filter(std::span<const double> probs, double tau) {
  if (probs.empty()) throw ContractError("bcq_filter: empty distribution");
  double best = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ContractError("bcq_filter: probabilities must be finite and >= 0");
    best = std::max(best, p);
  }
  if (best <= 0.0) throw ContractError("bcq_filter: all probabilities are zero");
  std::vector<int> out;
  for (std::size_t a = 0; a < probs.size(); ++a) {
    // p / max >= tau, without the division
    if (probs[a] > 0.0 && probs[a] >= tau * best) out.push_back(static_cast<int>(a));
  }
  return out;
}

namespace {

Matrix gather(const Matrix& m, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

void check_states(const Matrix& states, Index d) {
  if (states.cols() != d) {
    throw ContractError("state width " + std::to_string(states.cols()) + " != policy input " + std::to_string(d));
  }
}

}  // namespace

BcPolicy::BcPolicy(Index latent_dim, Index hidden, std::uint64_t seed) {
  if (latent_dim < 1 || hidden < 1) throw ContractError("BcPolicy: widths must be >= 1");
  Rng rng(seed);
  net_ = Mlp({latent_dim, hidden, kNumActions}, Activation::kRelu, Activation::kNone, rng);
  net_.collect("behavior", params_);
}

Matrix BcPolicy::probabilities(const Matrix& states) const {
  check_states(states, latent_dim());
  numcore::NoGradGuard guard;
  return numcore::softmax_rows(net_(numcore::constant(states)).value());
}

BcResult behavior_clone(const TransitionBuffer& buffer, const BcConfig& config) {
  if (buffer.size() == 0) throw ContractError("behavior_clone: empty buffer");
  if (config.epochs < 1 || config.batch_size < 1) throw ContractError("behavior_clone: epochs and batch_size must be >= 1");
  BcResult result;
  result.policy = BcPolicy(buffer.latent_dim(), config.hidden, config.seed);
  const auto counts = buffer.action_counts();
  for (int a = 0; a < kNumActions; ++a) {
    if (counts[static_cast<std::size_t>(a)] == 0) result.missing_actions.push_back(a);
  }
  const ParamList& params = result.policy.params();
  numcore::AdamState opt;
  opt.learning_rate = config.learning_rate;
  std::vector<Index> order(buffer.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Index>(i);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng rng(numcore::derive_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const std::span<const Index> rows(order.data() + start, stop - start);
      std::vector<int> labels;
      labels.reserve(rows.size());
      for (Index r : rows) labels.push_back(buffer.actions[static_cast<std::size_t>(r)]);
      numcore::zero_grad(params);
      const Var loss = numcore::cross_entropy(result.policy.logits(numcore::constant(gather(buffer.states, rows))), labels);
      if (!std::isfinite(loss.item())) {
        throw NumericalError("behavior cloning diverged in epoch " + std::to_string(epoch));
      }
      numcore::backward(loss);
      numcore::adam_step(opt, params);
    }
  }
  const Matrix probs = result.policy.probabilities(buffer.states);
  std::size_t hits = 0;
  for (Index i = 0; i < probs.rows(); ++i) {
    Index best = 0;
    probs.row(i).maxCoeff(&best);
    if (best == buffer.actions[static_cast<std::size_t>(i)]) ++hits;
  }
  result.train_accuracy = static_cast<double>(hits) / static_cast<double>(probs.rows());
  return result;
}

BcqConfig default_bcq_config(encoders::EncoderKind kind) {
  BcqConfig c;
  if (kind == encoders::EncoderKind::kDDM) c.hidden = 128;
  if (kind == encoders::EncoderKind::kCDE) c.learning_rate = 1e-5;
  return c;
}

nlohmann::json bcq_config_to_json(const BcqConfig& c) {
  return nlohmann::json{{"iterations", c.iterations}, {"eval_every", c.eval_every},
                        {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
                        {"gamma", c.gamma},           {"tau", c.tau},
                        {"epsilon", c.epsilon},       {"target_update", c.target_update},
                        {"hidden", c.hidden},         {"clip_norm", c.clip_norm},
                        {"seed", c.seed}};
}

BcqConfig bcq_config_from_json(const nlohmann::json& j) {
  BcqConfig c;
  c.iterations = j.value("iterations", c.iterations);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.gamma = j.value("gamma", c.gamma);
  c.tau = j.value("tau", c.tau);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.target_update = j.value("target_update", c.target_update);
  c.hidden = j.value("hidden", c.hidden);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.seed = j.value("seed", c.seed);
  return c;
}

QPolicy::QPolicy(Index latent_dim, Index hidden, double tau, std::uint64_t seed) : tau_(tau) {
  if (latent_dim < 1 || hidden < 1) throw ContractError("QPolicy: widths must be >= 1");
  if (!(tau >= 0.0 && tau <= 1.0)) throw ContractError("QPolicy: tau must lie in [0, 1]");
  Rng rng(seed);
  const std::vector<Index> widths{latent_dim, hidden, hidden, kNumActions};
  q_ = Mlp(widths, Activation::kRelu, Activation::kNone, rng);
  filter_ = Mlp(widths, Activation::kRelu, Activation::kNone, rng);
  target_ = Mlp(widths, Activation::kRelu, Activation::kNone, rng);
  q_.collect("q", q_params_);
  filter_.collect("filter", filter_params_);
  target_.collect("target", target_params_);
  params_ = q_params_;
  params_.insert(params_.end(), filter_params_.begin(), filter_params_.end());
  sync_target();
}

void QPolicy::sync_target() {
  for (std::size_t i = 0; i < q_params_.size(); ++i) {
    target_params_[i].second.mutable_value() = q_params_[i].second.value();
  }
}

Matrix QPolicy::q_values(const Matrix& states) const {
  check_states(states, latent_dim());
  numcore::NoGradGuard guard;
  return q_(numcore::constant(states)).value();
}

Matrix QPolicy::filter_probabilities(const Matrix& states) const {
  check_states(states, latent_dim());
  numcore::NoGradGuard guard;
  return numcore::softmax_rows(filter_(numcore::constant(states)).value());
}

namespace {

int constrained_argmax(std::span<const double> q, std::span<const double> probs, double tau) {
  const std::vector<int> candidates = bcq_filter(probs, tau);
  if (candidates.empty()) throw NumericalError("BCQ filter produced no candidate action");
  int best = candidates.front();
  for (int a : candidates) {
    if (q[static_cast<std::size_t>(a)] > q[static_cast<std::size_t>(best)]) best = a;
  }
  return best;
}

}  // namespace

std::vector<int> QPolicy::greedy_actions(const Matrix& states) const {
  const Matrix q = q_values(states);
  const Matrix p = filter_probabilities(states);
  std::vector<int> out(static_cast<std::size_t>(states.rows()));
  for (Index i = 0; i < states.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = constrained_argmax({q.row(i).data(), kNumActions}, {p.row(i).data(), kNumActions}, tau_);
  }
  return out;
}

Matrix QPolicy::action_probabilities(const Matrix& states, double epsilon) const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ContractError("epsilon must lie in [0, 1]");
  const std::vector<int> greedy = greedy_actions(states);
  Matrix out = Matrix::Constant(states.rows(), kNumActions, epsilon / kNumActions);
  for (Index i = 0; i < states.rows(); ++i) out(i, greedy[static_cast<std::size_t>(i)]) += 1.0 - epsilon;
  return out;
}

BcqResult train_bcq(const TransitionBuffer& buffer, const BcqConfig& config, const PolicyEvaluator& evaluate,
                    const std::function<void(const CurveRow&)>& on_row) {
  if (buffer.size() == 0) throw ContractError("train_bcq: empty buffer");
  if (config.iterations < 1 || config.eval_every < 1 || config.batch_size < 1 || config.target_update < 1) {
    throw ContractError("train_bcq: iterations, eval_every, batch_size and target_update must be >= 1");
  }
  if (!(config.gamma >= 0.0 && config.gamma <= 1.0)) throw ContractError("train_bcq: gamma must lie in [0, 1]");
  BcqResult result;
  result.policy = QPolicy(buffer.latent_dim(), config.hidden, config.tau, config.seed);
  QPolicy& policy = result.policy;
  Rng rng(numcore::derive_seed(config.seed, 0x5eed));
  numcore::AdamState q_opt, f_opt;
  q_opt.learning_rate = f_opt.learning_rate = config.learning_rate;
  const Index b = config.batch_size;

  double q_sum = 0.0, f_sum = 0.0;
  long window = 0;
  for (long it = 1; it <= config.iterations; ++it) {
    const std::vector<Index> rows = buffer.sample(rng, b);
    const Matrix s = gather(buffer.states, rows);
    std::vector<int> actions(rows.size());
    Matrix mask = Matrix::Zero(b, kNumActions);
    Matrix target = Matrix::Zero(b, kNumActions);
    {
      numcore::NoGradGuard guard;
      const Matrix s2 = gather(buffer.next_states, rows);
      const Matrix q_next = policy.q(numcore::constant(s2)).value();
      const Matrix p_next = numcore::softmax_rows(policy.filter_logits(numcore::constant(s2)).value());
      const Matrix q_frozen = policy.q_target(numcore::constant(s2)).value();
      for (Index i = 0; i < b; ++i) {
        const std::size_t r = static_cast<std::size_t>(rows[static_cast<std::size_t>(i)]);
        const int a = buffer.actions[r];
        actions[static_cast<std::size_t>(i)] = a;
        double y = buffer.rewards[r];
        if (!buffer.done[r] && config.gamma > 0.0) {
          const int next = constrained_argmax({q_next.row(i).data(), kNumActions}, {p_next.row(i).data(), kNumActions}, config.tau);
          y += config.gamma * q_frozen(i, next);
        }
        mask(i, a) = 1.0;
        target(i, a) = y;
      }
    }
    const Var states = numcore::constant(s);
    // Mean over rows of (Q(s, a) - y)^2; the masked mse averages over all 25 columns.
    const Var q_loss =
        numcore::scale(numcore::mse(numcore::mul(policy.q(states), numcore::constant(mask)), target), kNumActions);
    const Var f_loss = numcore::cross_entropy(policy.filter_logits(states), actions);
    if (!std::isfinite(q_loss.item()) || !std::isfinite(f_loss.item())) {
      throw NumericalError("BCQ training diverged at iteration " + std::to_string(it));
    }
    numcore::zero_grad(policy.params());
    numcore::backward(numcore::add(q_loss, f_loss));
    numcore::clip_grad_norm(policy.q_params(), config.clip_norm);
    numcore::clip_grad_norm(policy.filter_params(), config.clip_norm);
    numcore::adam_step(q_opt, policy.q_params());
    numcore::adam_step(f_opt, policy.filter_params());
    q_sum += q_loss.item();
    f_sum += f_loss.item();
    ++window;

    if (it % config.target_update == 0) policy.sync_target();
    if (it % config.eval_every == 0) {
      CurveRow row;
      row.iteration = it;
      row.q_loss = q_sum / static_cast<double>(window);
      row.filter_loss = f_sum / static_cast<double>(window);
      row.wis_return = row.ess = std::numeric_limits<double>::quiet_NaN();
      if (evaluate) {
        const WisResult w = evaluate(policy);
        row.wis_return = w.value;
        row.ess = w.ess;
      }
      result.curve.push_back(row);
      if (on_row) on_row(row);
      q_sum = f_sum = 0.0;
      window = 0;
    }
  }
  return result;
}

std::string curve_csv(std::span<const CurveRow> rows) {
  std::ostringstream out;
  out << "iteration,wis_return,ess,q_loss,filter_loss\n";
  for (const CurveRow& r : rows) {
    out << r.iteration << ',' << format_double(r.wis_return) << ',' << format_double(r.ess) << ','
        << format_double(r.q_loss) << ',' << format_double(r.filter_loss) << '\n';
  }
  return out.str();
}

}  // namespace seqstate::policy
