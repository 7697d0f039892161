#include "seqstate/encoders/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "seqstate/errors.hpp"
#include "seqstate/numcore/ops.hpp"
#include "seqstate/seqmath/signature.hpp"
#include "seqstate/seqmath/spline.hpp"

namespace seqstate::encoders {

using cohort::kNumActions;
using cohort::kNumObs;
using numcore::Activation;
using numcore::Dense;
using numcore::GruCell;
using numcore::LstmCell;
using numcore::Mlp;
using numcore::Rng;

const char* kind_name(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::kAE: return "AE";
    case EncoderKind::kRNN: return "RNN";
    case EncoderKind::kAIS: return "AIS";
    case EncoderKind::kDDM: return "DDM";
    case EncoderKind::kDST: return "DST";
    case EncoderKind::kODE: return "ODE";
    case EncoderKind::kCDE: return "CDE";
  }
  return "?";
}

EncoderKind parse_kind(const std::string& name) {
  std::string upper = name;
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  for (EncoderKind k : kAllKinds) {
    if (upper == kind_name(k)) return k;
  }
  throw ContractError("unknown encoder kind '" + name + "'");
}

bool is_recurrent(EncoderKind kind) { return kind != EncoderKind::kAE; }

EncoderModel::EncoderModel(const EncoderSpec& spec) : spec_(spec) {
  if (spec.latent_dim < 1) throw ContractError("latent dimension must be >= 1");
  if (spec.cde_substeps < 1) throw ContractError("cde_substeps must be >= 1");
}

Index EncoderModel::input_width() const { return obs_width() + kNumActions; }

std::size_t EncoderModel::parameter_count() const { return numcore::parameter_count(params_); }

std::string EncoderModel::arch_tag() const {
  return std::string("encoder/") + kind_name(spec_.kind) + "/d" + std::to_string(spec_.latent_dim) + "/" +
         mode_name(spec_.mode);
}

void EncoderModel::check_batch(const Batch& batch) const {
  if (batch.obs.cols() != obs_width()) {
    throw ContractError("batch width " + std::to_string(batch.obs.cols()) + " does not match input mode " +
                        mode_name(spec_.mode));
  }
}

Var EncoderModel::history_input(const Batch& batch) const {
  Matrix x(batch.rows(), input_width());
  x << batch.obs, batch.prev_action;
  return numcore::constant(std::move(x));
}

ForwardPass EncoderModel::forward(const Batch& batch) const {
  ForwardPass out;
  out.latents = encode(batch);
  const Var pairs = numcore::gather_rows(out.latents, batch.pair_rows);
  Matrix actions(static_cast<Index>(batch.pair_rows.size()), kNumActions);
  for (std::size_t i = 0; i < batch.pair_rows.size(); ++i) {
    actions.row(static_cast<Index>(i)) = batch.action.row(batch.pair_rows[i]);
  }
  out.predictions = decode(pairs, actions);
  return out;
}

namespace {

// Runs a GRU over time-major projected input; returns all hidden rows stacked.
Var run_gru(const GruCell& cell, const Var& projected, Index steps, Index batch) {
  Var h = numcore::constant(Matrix::Zero(batch, cell.hidden()));
  std::vector<Var> hs;
  hs.reserve(static_cast<std::size_t>(steps));
  for (Index t = 0; t < steps; ++t) {
    h = cell.step(numcore::slice_rows(projected, t * batch, batch), h);
    hs.push_back(h);
  }
  return numcore::vstack(hs);
}

// Applies `step` to the first n rows (the trajectories still running) and
// carries the rest over unchanged; their values are padding.
template <class F>
Var evolve_prefix(const Var& state, Index n, F&& step) {
  if (n == state.rows()) return step(state);
  const Var moved = step(numcore::slice_rows(state, 0, n));
  return numcore::vstack({moved, numcore::slice_rows(state, n, state.rows() - n)});
}

Var with_actions(const Var& latents, const Matrix& actions) {
  return numcore::concat_cols({latents, numcore::constant(actions)});
}

// RNN and AIS share the encoder; AIS appends A_t to the decoder input.
class RecurrentEncoder final : public EncoderModel {
 public:
  explicit RecurrentEncoder(const EncoderSpec& spec) : EncoderModel(spec) {
    Rng rng(spec.seed);
    const Index d = spec.latent_dim;
    fc_ = Mlp({input_width(), 64, 128}, Activation::kRelu, Activation::kRelu, rng);
    gru_ = GruCell(128, d, rng);
    decoder_ = Mlp({d + (uses_action() ? kNumActions : 0), 64, 128, kNumObs}, Activation::kRelu,
                   Activation::kNone, rng);
    fc_.collect("psi.fc", params_);
    gru_.collect("psi.gru", params_);
    decoder_.collect("phi", params_);
  }

  Var encode(const Batch& batch) const override {
    check_batch(batch);
    const Var pre = fc_(history_input(batch));
    return run_gru(gru_, gru_.project(pre), batch.steps, batch.size);
  }

  Var decode(const Var& latents, const Matrix& actions) const override {
    return decoder_(uses_action() ? with_actions(latents, actions) : latents);
  }

 private:
  bool uses_action() const { return spec_.kind == EncoderKind::kAIS; }
  Mlp fc_;
  GruCell gru_;
  Mlp decoder_;
};

class FeedForwardEncoder final : public EncoderModel {
 public:
  explicit FeedForwardEncoder(const EncoderSpec& spec) : EncoderModel(spec) {
    Rng rng(spec.seed);
    const Index d = spec.latent_dim;
    encoder_ = Mlp({input_width(), 64, 128, d}, Activation::kRelu, Activation::kNone, rng);
    decoder_ = Mlp({d + kNumActions, 64, 128, kNumObs}, Activation::kRelu, Activation::kNone, rng);
    encoder_.collect("psi", params_);
    decoder_.collect("phi", params_);
  }

  Var encode(const Batch& batch) const override {
    check_batch(batch);
    return encoder_(history_input(batch));
  }

  Var decode(const Var& latents, const Matrix& actions) const override {
    return decoder_(with_actions(latents, actions));
  }

 private:
  Mlp encoder_;
  Mlp decoder_;
};

// Encoder z_t = enc(O_t); an LSTM over [z_t, embed(A_t)] whose hidden output
// passed through tanh estimates z_{t+1} and serves as the state. The cell
// vector carries the spread of the latent distribution; the deterministic
// objective only consumes the mean.
class DdmEncoder final : public EncoderModel {
 public:
  explicit DdmEncoder(const EncoderSpec& spec) : EncoderModel(spec) {
    Rng rng(spec.seed);
    const Index d = spec.latent_dim;
    enc_ = Mlp({obs_width(), d, 288, d}, Activation::kElu, Activation::kTanh, rng);
    action_embed_ = Mlp({kNumActions, d, d}, Activation::kElu, Activation::kNone, rng);
    combine_ = Dense(2 * d, d, rng);
    lstm_ = LstmCell(d, d, rng);
    inverse_ = Mlp({2 * d, d, kNumActions}, Activation::kElu, Activation::kNone, rng);
    decoder_ = Mlp({d, 288, d, kNumObs}, Activation::kElu, Activation::kNone, rng);
    enc_.collect("psi.enc", params_);
    action_embed_.collect("psi.action", params_);
    combine_.collect("psi.combine", params_);
    lstm_.collect("psi.lstm", params_);
    inverse_.collect("psi.inverse", params_);
    decoder_.collect("phi", params_);
  }

  Var encode(const Batch& batch) const override { return encode_with_codes(batch).first; }

  // Before A_t the best estimate of z_t is the previous step's prediction;
  // at t = 0 there is none yet and the code of O_0 itself is used.
  Var decision_states(const Batch& batch) const override {
    auto [latents, codes] = encode_with_codes(batch);
    if (batch.steps == 1) return codes;
    return numcore::vstack({numcore::slice_rows(codes, 0, batch.size),
                            numcore::slice_rows(latents, 0, (batch.steps - 1) * batch.size)});
  }

  ForwardPass forward(const Batch& batch) const override {
    auto [latents, codes] = encode_with_codes(batch);
    ForwardPass out;
    out.latents = latents;
    out.predictions = decoder_(numcore::gather_rows(latents, batch.pair_rows));
    const Var pair = numcore::concat_cols(
        {numcore::gather_rows(codes, batch.pair_rows), numcore::gather_rows(codes, batch.next_rows)});
    std::vector<int> labels;
    labels.reserve(batch.pair_rows.size());
    for (Index r : batch.pair_rows) labels.push_back(batch.action_ids[static_cast<std::size_t>(r)]);
    if (!labels.empty()) out.aux_loss = numcore::cross_entropy(inverse_(pair), labels);
    return out;
  }

  Var decode(const Var& latents, const Matrix&) const override { return decoder_(latents); }

 private:
  std::pair<Var, Var> encode_with_codes(const Batch& batch) const {
    check_batch(batch);
    const Index d = spec_.latent_dim;
    const Var codes = enc_(numcore::constant(batch.obs));
    const Var embedded = action_embed_(numcore::constant(batch.action));
    const Var projected = lstm_.project(combine_(numcore::concat_cols({codes, embedded})));
    Var h = numcore::constant(Matrix::Zero(batch.size, d));
    Var c = h;
    std::vector<Var> states;
    states.reserve(static_cast<std::size_t>(batch.steps));
    for (Index t = 0; t < batch.steps; ++t) {
      std::tie(h, c) = lstm_.step(numcore::slice_rows(projected, t * batch.size, batch.size), h, c);
      states.push_back(numcore::tanh(h));
    }
    return {numcore::vstack(states), codes};
  }

  Mlp enc_;
  Mlp action_embed_;
  Dense combine_;
  LstmCell lstm_;
  Mlp inverse_;
  Mlp decoder_;
};

constexpr int kSigDepth = 2;
constexpr Index kAugmented = 8;

// Pointwise augmentation, stream signature, two stacked GRUs. The decoder
// maps latents pointwise to 32 channels, takes their stream signature and
// reads the prediction off each prefix signature.
class DstEncoder final : public EncoderModel {
 public:
  explicit DstEncoder(const EncoderSpec& spec) : EncoderModel(spec) {
    Rng rng(spec.seed);
    const Index d = spec.latent_dim;
    const Index channels = input_width() + kAugmented;
    augment_ = Mlp({input_width(), 64, kAugmented}, Activation::kRelu, Activation::kNone, rng);
    gru1_ = GruCell(seqmath::signature_length(channels, kSigDepth), d, rng);
    gru2_ = GruCell(d, d, rng);
    pointwise_ = Mlp({d, 64, 32}, Activation::kRelu, Activation::kNone, rng);
    head_ = Mlp({seqmath::signature_length(32, kSigDepth), 64, kNumObs}, Activation::kRelu, Activation::kNone,
                rng);
    augment_.collect("psi.augment", params_);
    gru1_.collect("psi.gru1", params_);
    gru2_.collect("psi.gru2", params_);
    pointwise_.collect("phi.pointwise", params_);
    head_.collect("phi.head", params_);
  }

  Var encode(const Batch& batch) const override {
    check_batch(batch);
    const Var x = history_input(batch);
    const Var stream = numcore::concat_cols({x, augment_(x)});
    const Var sig = seqmath::stream_signature_batched(stream, batch.steps, batch.size, kSigDepth, true);
    const Var h1 = run_gru(gru1_, gru1_.project(sig), batch.steps, batch.size);
    return run_gru(gru2_, gru2_.project(h1), batch.steps, batch.size);
  }

  ForwardPass forward(const Batch& batch) const override {
    ForwardPass out;
    out.latents = encode(batch);
    const Var all = decode_stream(out.latents, batch.steps, batch.size);
    out.predictions = numcore::gather_rows(all, batch.pair_rows);
    return out;
  }

  Var decode(const Var& latents, const Matrix&) const override {
    return decode_stream(latents, latents.rows(), 1);
  }

 private:
  Var decode_stream(const Var& latents, Index steps, Index batch) const {
    const Var p = pointwise_(latents);
    return head_(seqmath::stream_signature_batched(p, steps, batch, kSigDepth, true));
  }

  Mlp augment_;
  GruCell gru1_;
  GruCell gru2_;
  Mlp pointwise_;
  Mlp head_;
};

// GRU updates at observations; between observations the hidden state follows
// dh/dt = f(h) over one unit of time.
class OdeRnnEncoder final : public EncoderModel {
 public:
  explicit OdeRnnEncoder(const EncoderSpec& spec) : EncoderModel(spec) {
    Rng rng(spec.seed);
    const Index d = spec.latent_dim;
    gru_ = GruCell(input_width(), d, rng);
    field_ = Mlp({d, 50, 50, d}, Activation::kTanh, Activation::kNone, rng);
    decoder_ = Mlp({d, 100, 100, kNumObs}, Activation::kRelu, Activation::kNone, rng);
    gru_.collect("psi.gru", params_);
    field_.collect("psi.field", params_);
    decoder_.collect("phi", params_);
  }

  Var encode(const Batch& batch) const override {
    check_batch(batch);
    const Var projected = gru_.project(history_input(batch));
    seqmath::OdeSolverConfig cfg;
    cfg.method = seqmath::OdeMethod::kDopri5;
    cfg.rtol = spec_.ode_rtol;
    cfg.atol = spec_.ode_atol;
    const seqmath::VectorField f = [this](double, const Var& y) { return field_(y); };
    Var h = numcore::constant(Matrix::Zero(batch.size, spec_.latent_dim));
    std::vector<Var> hs;
    for (Index t = 0; t < batch.steps; ++t) {
      if (t > 0) h = evolve_prefix(h, batch.active(t), [&](const Var& y) {
        return seqmath::ode_solve(f, y, t - 1.0, static_cast<double>(t), cfg);
      });
      h = gru_.step(numcore::slice_rows(projected, t * batch.size, batch.size), h);
      hs.push_back(h);
    }
    return numcore::vstack(hs);
  }

  Var decode(const Var& latents, const Matrix&) const override { return decoder_(latents); }

 private:
  GruCell gru_;
  Mlp field_;
  Mlp decoder_;
};

// dz = f(z) dX along a natural cubic spline through [t, O_t, onehot(A_{t-1})].
// The interval [t-1, t] uses the spline fitted to knots 0..t only, so the
// state at step t never depends on later observations.
class CdeEncoder final : public EncoderModel {
 public:
  explicit CdeEncoder(const EncoderSpec& spec) : EncoderModel(spec) {
    Rng rng(spec.seed);
    const Index d = spec.latent_dim;
    const Index c = channels();
    initial_ = Dense(c, d, rng);
    field_ = Mlp({d, 100, 100, 100, 100, d * c}, Activation::kRelu, Activation::kTanh, rng);
    decoder_ = Mlp({d, 100, 100, kNumObs}, Activation::kRelu, Activation::kNone, rng);
    initial_.collect("psi.initial", params_);
    field_.collect("psi.field", params_);
    decoder_.collect("phi", params_);
  }

  Var encode(const Batch& batch) const override {
    check_batch(batch);
    const Index b = batch.size;
    const Index c = channels();
    const Index d = spec_.latent_dim;
    Matrix path(batch.rows(), c);
    for (Index t = 0; t < batch.steps; ++t) {
      path.block(t * b, 0, b, 1).setConstant(static_cast<double>(t));
      path.block(t * b, 1, b, obs_width()) = batch.obs.middleRows(t * b, b);
      path.block(t * b, 1 + obs_width(), b, kNumActions) = batch.prev_action.middleRows(t * b, b);
    }
    seqmath::OdeSolverConfig cfg;
    cfg.method = spec_.cde_method;
    cfg.rk4_steps = spec_.cde_substeps;
    cfg.rtol = spec_.ode_rtol;
    cfg.atol = spec_.ode_atol;

    Var z = initial_(numcore::constant(path.topRows(b)));
    std::vector<Var> zs{z};
    std::vector<double> knots;
    for (Index t = 1; t < batch.steps; ++t) {
      knots.resize(static_cast<std::size_t>(t) + 1);
      std::iota(knots.begin(), knots.end(), 0.0);
      const Index n = batch.active(t);
      const seqmath::VectorField f = [&, t, n](double s, const Var& y) {
        const Eigen::RowVectorXd w = seqmath::spline_deriv_weights(knots, s);
        Matrix dx = Matrix::Zero(n, c);
        for (Index k = 0; k <= t; ++k) dx.noalias() += w(k) * path.middleRows(k * b, n);
        return numcore::block_contract(field_(y), numcore::constant(std::move(dx)), d);
      };
      z = evolve_prefix(z, n, [&](const Var& y) { return seqmath::ode_solve(f, y, t - 1.0, static_cast<double>(t), cfg); });
      zs.push_back(z);
    }
    return numcore::vstack(zs);
  }

  Var decode(const Var& latents, const Matrix&) const override { return decoder_(latents); }

 private:
  Index channels() const { return 1 + input_width(); }
  Dense initial_;
  Mlp field_;
  Mlp decoder_;
};

}  // namespace

std::unique_ptr<EncoderModel> build_encoder(const EncoderSpec& spec) {
  switch (spec.kind) {
    case EncoderKind::kRNN:
    case EncoderKind::kAIS: return std::make_unique<RecurrentEncoder>(spec);
    case EncoderKind::kAE: return std::make_unique<FeedForwardEncoder>(spec);
    case EncoderKind::kDDM: return std::make_unique<DdmEncoder>(spec);
    case EncoderKind::kDST: return std::make_unique<DstEncoder>(spec);
    case EncoderKind::kODE: return std::make_unique<OdeRnnEncoder>(spec);
    case EncoderKind::kCDE: return std::make_unique<CdeEncoder>(spec);
  }
  throw ContractError("unknown encoder kind");
}

std::unique_ptr<EncoderModel> build_encoder(EncoderKind kind, Index latent_dim, InputMode mode,
                                            std::uint64_t seed) {
  EncoderSpec spec;
  spec.kind = kind;
  spec.latent_dim = latent_dim;
  spec.mode = mode;
  spec.seed = seed;
  return build_encoder(spec);
}

LatentSequence encode_trajectory(const EncoderModel& model, const cohort::Trajectory& trajectory) {
  numcore::NoGradGuard guard;
  const Batch batch = make_batch(trajectory, model.spec().mode);
  LatentSequence out{trajectory.patient_id, model.encode(batch).value()};
  if (!numcore::all_finite(out.latents)) throw NumericalError("non-finite latent for " + trajectory.patient_id);
  return out;
}

namespace {

template <class Fn>
std::vector<LatentSequence> batched_rows(const EncoderModel& model, std::span<const cohort::Trajectory> trajectories,
                                         Index batch_size, Fn&& run) {
  if (batch_size < 1) throw ContractError("batch_size must be >= 1");
  numcore::NoGradGuard guard;
  std::vector<LatentSequence> out(trajectories.size());
  for (std::size_t start = 0; start < trajectories.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t stop = std::min(trajectories.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<const cohort::Trajectory*> group;
    for (std::size_t i = start; i < stop; ++i) group.push_back(&trajectories[i]);
    const Batch batch = make_batch(group, model.spec().mode);
    const Matrix latents = run(batch).value();
    for (Index j = 0; j < batch.size; ++j) {
      const Index len = batch.lengths[static_cast<std::size_t>(j)];
      Matrix rows(len, latents.cols());
      for (Index t = 0; t < len; ++t) rows.row(t) = latents.row(batch.row(t, j));
      if (!numcore::all_finite(rows)) throw NumericalError("non-finite latent for " + batch.ids[static_cast<std::size_t>(j)]);
      out[start + static_cast<std::size_t>(batch.source[static_cast<std::size_t>(j)])] = {
          batch.ids[static_cast<std::size_t>(j)], std::move(rows)};
    }
  }
  return out;
}

}  // namespace

std::vector<LatentSequence> encode_trajectories(const EncoderModel& model,
                                                std::span<const cohort::Trajectory> trajectories,
                                                Index batch_size) {
  return batched_rows(model, trajectories, batch_size, [&](const Batch& b) { return model.encode(b); });
}

std::vector<LatentSequence> decision_trajectories(const EncoderModel& model,
                                                  std::span<const cohort::Trajectory> trajectories,
                                                  Index batch_size) {
  return batched_rows(model, trajectories, batch_size, [&](const Batch& b) { return model.decision_states(b); });
}

Matrix predict_next_obs(const EncoderModel& model, const Matrix& latents, std::span<const int> actions) {
  if (latents.cols() != model.latent_dim()) {
    throw ContractError("latent width " + std::to_string(latents.cols()) + " != model latent dim " +
                        std::to_string(model.latent_dim()));
  }
  if (static_cast<std::size_t>(latents.rows()) != actions.size()) {
    throw ContractError("predict_next_obs: one action per latent row required");
  }
  for (int a : actions) {
    if (a < 0 || a >= kNumActions) throw ContractError("predict_next_obs: action out of range");
  }
  numcore::NoGradGuard guard;
  Matrix out = model.decode(numcore::constant(latents), one_hot(actions, kNumActions)).value();
  if (!numcore::all_finite(out)) throw NumericalError("non-finite prediction");
  return out;
}

ParamRange reported_param_range(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::kAE: return {27e3, 76e3, 1e3, 1e3};
    case EncoderKind::kAIS: return {28e3, 339e3, 1e3, 1e3};
    case EncoderKind::kCDE: return {78.9e3, 1.78e6, 0.1e3, 0.01e6};
    case EncoderKind::kDDM: return {6e3, 1.25e6, 1e3, 0.01e6};
    case EncoderKind::kDST: return {47e3, 256e3, 1e3, 1e3};
    case EncoderKind::kODE: return {48.3e3, 329e3, 0.1e3, 1e3};
    case EncoderKind::kRNN: return {26e3, 337e3, 1e3, 1e3};
  }
  throw ContractError("unknown encoder kind");
}

bool within_reported_range(EncoderKind kind, std::size_t count) {
  const ParamRange r = reported_param_range(kind);
  const double n = static_cast<double>(count);
  // The table mixes rounding and truncation (337,569 prints as "337k").
  return n >= r.low - 0.5 * r.low_resolution && n < r.high + r.high_resolution;
}

}  // namespace seqstate::encoders
