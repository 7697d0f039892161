#pragma once

#include <string>
#include <utility>
#include <vector>

#include "seqstate/numcore/ops.hpp"
#include "seqstate/numcore/random.hpp"

namespace seqstate::numcore {

// Ordered (name, tensor) list; declaration order is the serialization order.
using ParamList = std::vector<std::pair<std::string, Var>>;

Var make_param(Matrix init);

// Fully connected layer, weight stored (in x out). Weights and bias are
// initialized uniformly in +-1/sqrt(in).
struct Dense {
  Dense() = default;
  Dense(Index in, Index out, Rng& rng);

  Var operator()(const Var& x) const { return affine(x, weight, bias); }
  void collect(const std::string& prefix, ParamList& out) const;
  Index in() const { return weight.rows(); }
  Index out() const { return weight.cols(); }

  Var weight;
  Var bias;
};

enum class Activation { kNone, kRelu, kElu, kTanh, kSigmoid };

Var activate(const Var& x, Activation act);

// Stack of Dense layers; `hidden` activation after every layer but the last,
// `last` after the final one.
struct Mlp {
  Mlp() = default;
  Mlp(const std::vector<Index>& widths, Activation hidden, Activation last, Rng& rng);

  Var operator()(const Var& x) const;
  void collect(const std::string& prefix, ParamList& out) const;

  std::vector<Dense> layers;
  Activation hidden_act = Activation::kRelu;
  Activation last_act = Activation::kNone;
};

// Gated recurrent unit. Gate blocks in the fused weights are ordered
// (reset, update, candidate):
//   r  = sigmoid(x Wr + br + h Ur + cr)
//   z  = sigmoid(x Wz + bz + h Uz + cz)
//   n  = tanh(x Wn + bn + r * (h Un + cn))
//   h' = (1 - z) * h + z * n
struct GruCell {
  GruCell() = default;
  GruCell(Index input, Index hidden, Rng& rng);

  Var operator()(const Var& x, const Var& h) const;
  // Input projection x W + b for many rows at once; step() then consumes a
  // row block of it. operator()(x, h) == step(project(x), h).
  Var project(const Var& x) const;
  Var step(const Var& projected, const Var& h) const;
  void collect(const std::string& prefix, ParamList& out) const;
  Index input() const { return w_x.rows(); }
  Index hidden() const { return w_h.rows(); }

  Var w_x, w_h, b_x, b_h;
};

// Long short-term memory cell, gate blocks ordered (input, forget, cell, output).
struct LstmCell {
  LstmCell() = default;
  LstmCell(Index input, Index hidden, Rng& rng);

  std::pair<Var, Var> operator()(const Var& x, const Var& h, const Var& c) const;
  Var project(const Var& x) const;
  std::pair<Var, Var> step(const Var& projected, const Var& h, const Var& c) const;
  void collect(const std::string& prefix, ParamList& out) const;
  Index input() const { return w_x.rows(); }
  Index hidden() const { return w_h.rows(); }

  Var w_x, w_h, b_x, b_h;
};

Var gru_cell(const Var& x, const Var& h, const GruCell& params);
std::pair<Var, Var> lstm_cell(const Var& x, const Var& h, const Var& c, const LstmCell& params);

std::size_t parameter_count(const ParamList& params);

}  // namespace seqstate::numcore
