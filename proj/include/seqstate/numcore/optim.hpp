#pragma once

#include <functional>
#include <span>
#include <vector>

#include "seqstate/numcore/layers.hpp"

namespace seqstate::numcore {

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
};

// One bias-corrected Adam update. Moments are created on the first call and
// must shape-match `params` afterwards.
void adam_step(AdamState& state, std::span<Matrix* const> params, std::span<const Matrix> grads);

// Same update reading gradients from the parameter Vars (missing = zero).
void adam_step(AdamState& state, const ParamList& params);

void zero_grad(const ParamList& params);

// Rescales gradients so their global L2 norm is at most `max_norm`; returns the
// norm before clipping.
double clip_grad_norm(const ParamList& params, double max_norm);

struct GradCheckResult {
  double max_rel_error = 0.0;
  Index worst_index = -1;
};

// Compares reverse-mode gradients of scalar f at x with central differences.
// Per-coordinate error is |analytic - numeric| / max(1, |analytic|, |numeric|).
GradCheckResult grad_check(const std::function<Var(const Var&)>& f, const Matrix& x, double eps = 1e-5);

}  // namespace seqstate::numcore
