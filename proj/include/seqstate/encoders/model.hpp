#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "seqstate/encoders/batch.hpp"
#include "seqstate/numcore/layers.hpp"
#include "seqstate/seqmath/ode.hpp"

namespace seqstate::encoders {

using numcore::ParamList;
using numcore::Var;

enum class EncoderKind { kAE, kRNN, kAIS, kDDM, kDST, kODE, kCDE };

inline constexpr std::array<EncoderKind, 7> kAllKinds = {
    EncoderKind::kAE, EncoderKind::kRNN, EncoderKind::kAIS, EncoderKind::kDDM,
    EncoderKind::kDST, EncoderKind::kODE, EncoderKind::kCDE};

const char* kind_name(EncoderKind kind);
EncoderKind parse_kind(const std::string& name);  // ContractError on unknown
bool is_recurrent(EncoderKind kind);

struct EncoderSpec {
  EncoderKind kind = EncoderKind::kAIS;
  Index latent_dim = 16;
  InputMode mode = InputMode::kObs;
  std::uint64_t seed = 0;  // initialization seed
  // ODE-RNN between-step solver.
  double ode_rtol = 1e-3;
  double ode_atol = 1e-4;
  // CDE solver: fixed rk4 with this many substeps per unit interval by default.
  seqmath::OdeMethod cde_method = seqmath::OdeMethod::kRk4Fixed;
  int cde_substeps = 4;
};

struct ForwardPass {
  Var latents;      // rows() x d_s, every batch row (padding included)
  Var predictions;  // pair_rows x 33, aligned with Batch::targets
  Var aux_loss;     // extra loss term (DDM inverse model), empty otherwise
};

class EncoderModel {
 public:
  explicit EncoderModel(const EncoderSpec& spec);
  virtual ~EncoderModel() = default;
  EncoderModel(const EncoderModel&) = delete;
  EncoderModel& operator=(const EncoderModel&) = delete;

  const EncoderSpec& spec() const { return spec_; }
  EncoderKind kind() const { return spec_.kind; }
  Index latent_dim() const { return spec_.latent_dim; }
  Index obs_width() const { return encoders::obs_width(spec_.mode); }
  Index input_width() const;  // obs_width + 25
  const ParamList& params() const { return params_; }
  std::size_t parameter_count() const;
  std::string arch_tag() const;

  virtual Var encode(const Batch& batch) const = 0;
  virtual ForwardPass forward(const Batch& batch) const;

  // State available when A_t is chosen. Equal to encode() except for DDM,
  // whose row t has already consumed A_t.
  virtual Var decision_states(const Batch& batch) const { return encode(batch); }
  // Predictions from latent rows. Rows are read as consecutive steps of one
  // trajectory (this matters only for DST, whose decoder is a sequence model).
  virtual Var decode(const Var& latents, const Matrix& actions) const = 0;

 protected:
  void check_batch(const Batch& batch) const;
  // [O_t, onehot(A_{t-1})] for every batch row.
  Var history_input(const Batch& batch) const;

  EncoderSpec spec_;
  ParamList params_;
};

std::unique_ptr<EncoderModel> build_encoder(const EncoderSpec& spec);
std::unique_ptr<EncoderModel> build_encoder(EncoderKind kind, Index latent_dim, InputMode mode,
                                            std::uint64_t seed = 0);

struct LatentSequence {
  std::string trajectory_id;
  Matrix latents;  // T x d_s
};

LatentSequence encode_trajectory(const EncoderModel& model, const cohort::Trajectory& trajectory);
// Batched inference over many trajectories; output order follows the input.
std::vector<LatentSequence> encode_trajectories(const EncoderModel& model,
                                                std::span<const cohort::Trajectory> trajectories,
                                                Index batch_size = 256);

// Same, through decision_states(). This is what a policy conditions on.
std::vector<LatentSequence> decision_trajectories(const EncoderModel& model,
                                                  std::span<const cohort::Trajectory> trajectories,
                                                  Index batch_size = 256);

// One or more latent rows with their actions -> rows x 33 predictions.
Matrix predict_next_obs(const EncoderModel& model, const Matrix& latents, std::span<const int> actions);

// Table 4 parameter ranges as printed. `within_reported_range` compares at
// the printed precision, so 5,974 counts as "6k" and 337,569 as "337k".
struct ParamRange {
  double low;
  double high;
  double low_resolution;
  double high_resolution;
};
ParamRange reported_param_range(EncoderKind kind);
bool within_reported_range(EncoderKind kind, std::size_t count);

}  // namespace seqstate::encoders
