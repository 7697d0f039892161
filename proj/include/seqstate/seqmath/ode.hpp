#pragma once

// Explicit Runge-Kutta solvers over autodiff values. Gradients flow by
// backpropagating through every accepted solver step.

#include <functional>

#include "seqstate/numcore/tensor.hpp"

namespace seqstate::seqmath {

using numcore::Var;

enum class OdeMethod { kRk4Fixed, kDopri5 };

struct OdeSolverConfig {
  OdeMethod method = OdeMethod::kDopri5;
  double rtol = 1e-6;
  double atol = 1e-8;
  int max_steps = 10000;
  // rk4_fixed: number of equal steps across [t0, t1].
  int rk4_steps = 4;
};

struct OdeStats {
  int accepted = 0;
  int rejected = 0;
  int evaluations = 0;
};

using VectorField = std::function<Var(double t, const Var& y)>;

Var ode_solve(const VectorField& f, const Var& y0, double t0, double t1, const OdeSolverConfig& config,
              OdeStats* stats = nullptr);

}  // namespace seqstate::seqmath
