#include "seqstate/encoders/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "seqstate/io.hpp"
#include "seqstate/numcore/optim.hpp"
#include "seqstate/numcore/stats.hpp"

namespace seqstate::encoders {

using cohort::Cohort;
using cohort::Trajectory;

TrainConfig default_train_config(EncoderKind kind, Index latent_dim) {
  TrainConfig c;
  switch (kind) {
    case EncoderKind::kRNN: c.learning_rate = 1e-4; c.epochs = 600; c.lambda = 100; break;
    case EncoderKind::kAIS: c.learning_rate = 5e-4; c.epochs = 600; c.lambda = 100; break;
    case EncoderKind::kAE: c.learning_rate = 5e-4; c.epochs = 600; c.lambda = 100; break;
    case EncoderKind::kDDM:
      c.epochs = 600;
      c.lambda = 0.25;
      c.learning_rate = latent_dim == 4 ? 1e-3 : latent_dim == 32 ? 5e-4 : 1e-4;
      break;
    case EncoderKind::kDST: c.learning_rate = 1e-3; c.epochs = 50; c.lambda = 1; break;
    case EncoderKind::kODE: c.learning_rate = 1e-3; c.epochs = 100; c.lambda = 1; break;
    case EncoderKind::kCDE: c.learning_rate = 2e-4; c.epochs = 200; c.lambda = 1; break;
  }
  return c;
}

Regularizer correlation_regularizer(const Var& latents, const std::array<std::span<const double>, 3>& scores,
                                    const std::array<double, 3>& lambda) {
  if (latents.rows() < 2) throw ContractError("correlation_regularizer: batch needs at least 2 rows");
  Regularizer out;
  std::vector<Var> terms;
  for (std::size_t k = 0; k < 3; ++k) {
    if (static_cast<Index>(scores[k].size()) != latents.rows()) {
      throw ContractError("correlation_regularizer: score length does not match latent rows");
    }
    const Var rho = numcore::mean(numcore::column_pearson(latents, scores[k]));
    out.rho[k] = rho.item();
    terms.push_back(numcore::scale(rho, lambda[k]));
  }
  out.penalty = numcore::add(numcore::add(terms[0], terms[1]), terms[2]);
  return out;
}

Objective batch_objective(const EncoderModel& model, const Batch& batch, const TrainConfig& config) {
  if (batch.pair_rows.empty()) throw ContractError("batch has no (t, t+1) pairs");
  const ForwardPass fp = model.forward(batch);
  Objective obj;
  obj.mse = numcore::mse(fp.predictions, batch.targets);
  obj.total = obj.mse;
  if (fp.aux_loss.defined()) obj.total = numcore::add(obj.total, numcore::scale(fp.aux_loss, config.inverse_weight));
  if (config.regularize && batch.valid_rows.size() >= 2) {
    const Var valid = numcore::gather_rows(fp.latents, batch.valid_rows);
    obj.reg = correlation_regularizer(valid, {batch.scores[0], batch.scores[1], batch.scores[2]},
                                      {config.lambda, config.lambda, config.lambda});
    obj.total = numcore::sub(obj.total, obj.reg.penalty);
  } else if (batch.valid_rows.size() >= 2) {
    // Logged only; no graph needed.
    numcore::NoGradGuard guard;
    const Var valid = numcore::constant(numcore::gather_rows(fp.latents, batch.valid_rows).value());
    obj.reg.rho = correlation_regularizer(valid, {batch.scores[0], batch.scores[1], batch.scores[2]},
                                          {0.0, 0.0, 0.0}).rho;
  }
  return obj;
}

namespace {

std::vector<const Trajectory*> pointers(const Cohort& c) {
  std::vector<const Trajectory*> out;
  out.reserve(c.trajectories.size());
  for (const Trajectory& t : c.trajectories) out.push_back(&t);
  return out;
}

struct SquaredError {
  double sum = 0.0;
  double count = 0.0;
};

SquaredError accumulate_error(const EncoderModel& model, std::span<const Trajectory* const> group) {
  const Batch batch = make_batch(group, model.spec().mode);
  if (batch.pair_rows.empty()) return {};
  const ForwardPass fp = model.forward(batch);
  const Matrix& p = fp.predictions.value();
  return {(p - batch.targets).squaredNorm(), static_cast<double>(p.size())};
}

}  // namespace

double prediction_mse(const EncoderModel& model, const Cohort& data, Index batch_size) {
  if (batch_size < 1) throw ContractError("batch_size must be >= 1");
  numcore::NoGradGuard guard;
  const auto all = pointers(data);
  SquaredError total;
  for (std::size_t start = 0; start < all.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t n = std::min(all.size() - start, static_cast<std::size_t>(batch_size));
    const SquaredError e = accumulate_error(model, std::span(all).subspan(start, n));
    total.sum += e.sum;
    total.count += e.count;
  }
  if (total.count == 0.0) throw DataError("no (t, t+1) pairs to evaluate");
  return total.sum / total.count;
}

double mean_predictor_mse(const Cohort& train, const Cohort& eval) {
  Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(cohort::kNumObs);
  double n = 0.0;
  for (const Trajectory& t : train.trajectories) {
    for (Index s = 1; s < t.length(); ++s) {
      mean += t.obs.row(s);
      n += 1.0;
    }
  }
  if (n == 0.0) throw DataError("mean predictor: no training targets");
  mean /= n;
  double sum = 0.0;
  double count = 0.0;
  for (const Trajectory& t : eval.trajectories) {
    for (Index s = 1; s < t.length(); ++s) {
      sum += (t.obs.row(s) - mean).squaredNorm();
      count += cohort::kNumObs;
    }
  }
  if (count == 0.0) throw DataError("mean predictor: no evaluation targets");
  return sum / count;
}

TrainResult train_encoder(EncoderModel& model, const Cohort& train, const Cohort& val, const TrainConfig& config,
                          const EpochCallback& on_epoch) {
  if (config.epochs < 1) throw ContractError("epochs must be >= 1");
  if (config.batch_size < 1) throw ContractError("batch_size must be >= 1");
  if (!(config.learning_rate > 0.0)) throw ContractError("learning rate must be positive");
  if (train.trajectories.empty() || val.trajectories.empty()) throw DataError("train and val splits must be nonempty");

  const auto start_time = std::chrono::steady_clock::now();
  const numcore::ParamList& params = model.params();
  numcore::AdamState adam;
  adam.learning_rate = config.learning_rate;
  numcore::zero_grad(params);

  TrainResult result;
  result.best_val_mse = std::numeric_limits<double>::infinity();
  std::vector<Matrix> best;

  std::vector<const Trajectory*> order = pointers(train);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    numcore::Rng rng(numcore::derive_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    EpochRecord rec;
    rec.epoch = epoch;
    double mse_sum = 0.0;
    double pair_sum = 0.0;
    int batches = 0;
    for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t n = std::min(order.size() - s, static_cast<std::size_t>(config.batch_size));
      const Batch batch = make_batch(std::span(order).subspan(s, n), model.spec().mode);
      if (batch.pair_rows.empty()) continue;
      const Objective obj = batch_objective(model, batch, config);
      const double loss = obj.total.item();
      if (!std::isfinite(loss)) throw TrainingDiverged("non-finite loss", epoch);
      numcore::backward(obj.total);
      numcore::clip_grad_norm(params, config.clip_norm);
      numcore::adam_step(adam, params);
      numcore::zero_grad(params);
      const double pairs = static_cast<double>(batch.pair_rows.size());
      mse_sum += obj.mse.item() * pairs;
      pair_sum += pairs;
      for (std::size_t k = 0; k < 3; ++k) rec.rho[k] += obj.reg.rho[k];
      ++batches;
    }
    if (batches == 0) throw DataError("training split has no (t, t+1) pairs");
    rec.train_mse = mse_sum / pair_sum;
    for (double& r : rec.rho) r /= batches;
    rec.val_mse = prediction_mse(model, val);
    if (!std::isfinite(rec.val_mse)) throw TrainingDiverged("non-finite validation MSE", epoch);
    if (rec.val_mse < result.best_val_mse) {
      result.best_val_mse = rec.val_mse;
      result.best_epoch = epoch;
      if (config.keep_best) {
        best.clear();
        for (const auto& [name, p] : params) best.push_back(p.value());
      }
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  if (config.keep_best && !best.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      Var p = params[i].second;
      p.mutable_value() = best[i];
    }
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return result;
}

std::string history_csv(std::span<const EpochRecord> history) {
  std::ostringstream out;
  out << "epoch,train_mse,val_mse,rho_sofa,rho_saps2,rho_oasis\n";
  for (const EpochRecord& r : history) {
    out << r.epoch << ',' << format_double(r.train_mse) << ',' << format_double(r.val_mse) << ','
        << format_double(r.rho[0]) << ',' << format_double(r.rho[1]) << ',' << format_double(r.rho[2]) << '\n';
  }
  return out.str();
}

}  // namespace seqstate::encoders
