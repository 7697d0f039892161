#include "seqstate/numcore/optim.hpp"

#include <cmath>

#include "seqstate/errors.hpp"

namespace seqstate::numcore {

namespace {

void ensure_moments(AdamState& state, std::span<Matrix* const> params) {
  if (state.first_moment.empty()) {
    for (const Matrix* p : params) {
      state.first_moment.push_back(Matrix::Zero(p->rows(), p->cols()));
      state.second_moment.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ContractError("adam_step: parameter count changed between steps");
  }
}

}  // namespace

void adam_step(AdamState& state, std::span<Matrix* const> params, std::span<const Matrix> grads) {
  if (params.size() != grads.size()) throw ContractError("adam_step: params/grads length mismatch");
  ensure_moments(state, params);
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i];
    const Matrix& g = grads[i];
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    if (g.rows() != p.rows() || g.cols() != p.cols() || m.rows() != p.rows() || m.cols() != p.cols()) {
      throw ContractError("adam_step: shape mismatch for parameter " + std::to_string(i));
    }
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    p.array() -= state.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + state.epsilon);
  }
}

void adam_step(AdamState& state, const ParamList& params) {
  std::vector<Matrix*> values;
  std::vector<Matrix> grads;
  values.reserve(params.size());
  grads.reserve(params.size());
  for (const auto& [name, v] : params) {
    Var handle = v;
    values.push_back(&handle.mutable_value());
    grads.push_back(v.grad());
  }
  adam_step(state, values, grads);
}

void zero_grad(const ParamList& params) {
  for (const auto& [name, v] : params) {
    Var handle = v;
    handle.zero_grad();
  }
}

double clip_grad_norm(const ParamList& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, v] : params) {
    if (v.has_grad()) sq += v.node()->grad.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (const auto& [name, v] : params) {
      if (v.has_grad()) v.node()->grad *= s;
    }
  }
  return norm;
}

GradCheckResult grad_check(const std::function<Var(const Var&)>& f, const Matrix& x, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-4)) throw ContractError("grad_check: eps must lie in [1e-7, 1e-4]");
  Var input(x, /*requires_grad=*/true);
  Var out = f(input);
  if (out.size() != 1) throw ContractError("grad_check: f must return a scalar");
  if (!std::isfinite(out.item())) throw NumericalError("grad_check: f is not finite at x");
  backward(out);
  const Matrix analytic = input.grad();

  GradCheckResult result;
  Matrix probe = x;
  NoGradGuard no_grad;
  for (Index i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + eps;
    const double fp = f(Var(probe)).item();
    probe.data()[i] = orig - eps;
    const double fm = f(Var(probe)).item();
    probe.data()[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericalError("grad_check: f is not finite near x");
    }
    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic.data()[i];
    const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
    if (err > result.max_rel_error || result.worst_index < 0) {
      result.max_rel_error = std::max(err, result.max_rel_error);
      result.worst_index = i;
    }
  }
  return result;
}

}  // namespace seqstate::numcore
