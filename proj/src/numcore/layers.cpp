#include "seqstate/numcore/layers.hpp"

#include <cmath>

#include "seqstate/errors.hpp"

namespace seqstate::numcore {

Var make_param(Matrix init) { return Var(std::move(init), /*requires_grad=*/true); }

Dense::Dense(Index in, Index out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = make_param(rng.uniform_matrix(in, out, bound));
  bias = make_param(rng.uniform_matrix(1, out, bound));
}

void Dense::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

Var activate(const Var& x, Activation act) {
  switch (act) {
    case Activation::kNone:
      return x;
    case Activation::kRelu:
      return relu(x);
    case Activation::kElu:
      return elu(x);
    case Activation::kTanh:
      return tanh(x);
    case Activation::kSigmoid:
      return sigmoid(x);
  }
  return x;
}

Mlp::Mlp(const std::vector<Index>& widths, Activation hidden, Activation last, Rng& rng)
    : hidden_act(hidden), last_act(last) {
  if (widths.size() < 2) throw ContractError("Mlp needs at least input and output widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) layers.emplace_back(widths[i], widths[i + 1], rng);
}

Var Mlp::operator()(const Var& x) const {
  Var h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = activate(layers[i](h), i + 1 == layers.size() ? last_act : hidden_act);
  }
  return h;
}

void Mlp::collect(const std::string& prefix, ParamList& out) const {
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(prefix + "." + std::to_string(i), out);
}

GruCell::GruCell(Index input, Index hidden, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  w_x = make_param(rng.uniform_matrix(input, 3 * hidden, bound));
  w_h = make_param(rng.uniform_matrix(hidden, 3 * hidden, bound));
  b_x = make_param(rng.uniform_matrix(1, 3 * hidden, bound));
  b_h = make_param(rng.uniform_matrix(1, 3 * hidden, bound));
}

Var GruCell::operator()(const Var& x, const Var& h) const {
  if (x.cols() != input() || h.cols() != hidden() || x.rows() != h.rows()) {
    throw ContractError("gru_cell: dimension mismatch");
  }
  return step(project(x), h);
}

Var GruCell::project(const Var& x) const {
  if (x.cols() != input()) throw ContractError("gru_cell: input width mismatch");
  return affine(x, w_x, b_x);
}

Var GruCell::step(const Var& gx, const Var& h) const {
  const Index n = hidden();
  if (gx.cols() != 3 * n || h.cols() != n || gx.rows() != h.rows()) throw ContractError("gru_cell: dimension mismatch");
  Var gh = affine(h, w_h, b_h);
  Var r = sigmoid(add(slice_cols(gx, 0, n), slice_cols(gh, 0, n)));
  Var z = sigmoid(add(slice_cols(gx, n, n), slice_cols(gh, n, n)));
  Var cand = tanh(add(slice_cols(gx, 2 * n, n), mul(r, slice_cols(gh, 2 * n, n))));
  return add(mul(one_minus(z), h), mul(z, cand));
}

void GruCell::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".w_x", w_x);
  out.emplace_back(prefix + ".w_h", w_h);
  out.emplace_back(prefix + ".b_x", b_x);
  out.emplace_back(prefix + ".b_h", b_h);
}

LstmCell::LstmCell(Index input, Index hidden, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  w_x = make_param(rng.uniform_matrix(input, 4 * hidden, bound));
  w_h = make_param(rng.uniform_matrix(hidden, 4 * hidden, bound));
  b_x = make_param(rng.uniform_matrix(1, 4 * hidden, bound));
  b_h = make_param(rng.uniform_matrix(1, 4 * hidden, bound));
}

std::pair<Var, Var> LstmCell::operator()(const Var& x, const Var& h, const Var& c) const {
  if (x.cols() != input() || h.cols() != hidden() || c.cols() != hidden() || x.rows() != h.rows() ||
      h.rows() != c.rows()) {
    throw ContractError("lstm_cell: dimension mismatch");
  }
  return step(project(x), h, c);
}

Var LstmCell::project(const Var& x) const {
  if (x.cols() != input()) throw ContractError("lstm_cell: input width mismatch");
  return affine(x, w_x, b_x);
}

std::pair<Var, Var> LstmCell::step(const Var& gx, const Var& h, const Var& c) const {
  const Index n = hidden();
  if (gx.cols() != 4 * n || h.cols() != n || c.cols() != n || gx.rows() != h.rows() || h.rows() != c.rows()) {
    throw ContractError("lstm_cell: dimension mismatch");
  }
  Var gates = add(gx, affine(h, w_h, b_h));
  Var i = sigmoid(slice_cols(gates, 0, n));
  Var f = sigmoid(slice_cols(gates, n, n));
  Var g = tanh(slice_cols(gates, 2 * n, n));
  Var o = sigmoid(slice_cols(gates, 3 * n, n));
  Var c_next = add(mul(f, c), mul(i, g));
  Var h_next = mul(o, tanh(c_next));
  return {h_next, c_next};
}

void LstmCell::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".w_x", w_x);
  out.emplace_back(prefix + ".w_h", w_h);
  out.emplace_back(prefix + ".b_x", b_x);
  out.emplace_back(prefix + ".b_h", b_h);
}

Var gru_cell(const Var& x, const Var& h, const GruCell& params) { return params(x, h); }

std::pair<Var, Var> lstm_cell(const Var& x, const Var& h, const Var& c, const LstmCell& params) {
  return params(x, h, c);
}

std::size_t parameter_count(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& [name, v] : params) n += static_cast<std::size_t>(v.size());
  return n;
}

}  // namespace seqstate::numcore
