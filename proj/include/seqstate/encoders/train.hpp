#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "seqstate/encoders/model.hpp"
#include "seqstate/errors.hpp"

namespace seqstate::encoders {

struct TrainConfig {
  int epochs = 50;
  double learning_rate = 1e-3;
  Index batch_size = 128;
  std::uint64_t seed = 0;  // shuffling
  double lambda = 1.0;     // lambda_1 = lambda_2 = lambda_3
  bool regularize = false;
  double clip_norm = 10.0;
  double inverse_weight = 1.0;  // DDM inverse-model cross-entropy
  // Restores the parameters of the epoch with the lowest validation MSE.
  bool keep_best = true;
};

// Per-kind learning rate, epochs and lambda; DDM's learning rate depends on d_s.
TrainConfig default_train_config(EncoderKind kind, Index latent_dim);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_mse = 0.0;
  double val_mse = 0.0;
  std::array<double, 3> rho{};  // batch mean of sofa, saps2, oasis correlation
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_mse = 0.0;
  double seconds = 0.0;
};

class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(const std::string& what, int epoch)
      : NumericalError("epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Trains in place. Splits must already be normalized with training-split stats.
TrainResult train_encoder(EncoderModel& model, const cohort::Cohort& train, const cohort::Cohort& val,
                          const TrainConfig& config, const EpochCallback& on_epoch = {});

struct Regularizer {
  Var penalty;                 // 1x1, sum_k lambda_k * rho_k
  std::array<double, 3> rho{};
};

// rho_k = mean over latent columns of pearson(latents[:, j], scores[k]).
// The returned penalty is subtracted from the prediction loss.
Regularizer correlation_regularizer(const Var& latents, const std::array<std::span<const double>, 3>& scores,
                                    const std::array<double, 3>& lambda);

struct Objective {
  Var total;
  Var mse;
  Regularizer reg;  // penalty undefined when regularization is off
};

// The full training objective on one batch.
Objective batch_objective(const EncoderModel& model, const Batch& batch, const TrainConfig& config);

// Mean squared error of next-observation predictions over all (t, t+1) pairs.
double prediction_mse(const EncoderModel& model, const cohort::Cohort& data, Index batch_size = 256);

// MSE of predicting every O_{t+1} in `eval` by the mean observation of `train`.
double mean_predictor_mse(const cohort::Cohort& train, const cohort::Cohort& eval);

std::string history_csv(std::span<const EpochRecord> history);

}  // namespace seqstate::encoders
