#include "seqstate/seqmath/ode.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "seqstate/errors.hpp"
#include "seqstate/numcore/ops.hpp"

namespace seqstate::seqmath {

namespace ops = numcore;
using numcore::Matrix;

namespace {

// y + h * sum_i c_i k_i, skipping zero coefficients.
Var combine(const Var& y, double h, std::initializer_list<std::pair<double, const Var*>> terms) {
  Var acc;
  for (const auto& [c, k] : terms) {
    if (c == 0.0) continue;
    Var term = ops::scale(*k, c * h);
    acc = acc.defined() ? ops::add(acc, term) : term;
  }
  return acc.defined() ? ops::add(y, acc) : y;
}

void check_finite(const Var& y, double t) {
  if (!numcore::all_finite(y.value())) {
    throw NumericalError("ode_solve: non-finite state at t=" + std::to_string(t));
  }
}

Var eval(const VectorField& f, double t, const Var& y, OdeStats& st) {
  ++st.evaluations;
  Var k = f(t, y);
  if (k.rows() != y.rows() || k.cols() != y.cols()) throw ContractError("ode_solve: vector field changed shape");
  if (!numcore::all_finite(k.value())) {
    throw NumericalError("ode_solve: non-finite vector field at t=" + std::to_string(t));
  }
  return k;
}

Var rk4(const VectorField& f, const Var& y0, double t0, double t1, const OdeSolverConfig& cfg, OdeStats& st) {
  if (cfg.rk4_steps < 1) throw ContractError("ode_solve: rk4_steps must be >= 1");
  if (cfg.rk4_steps > cfg.max_steps) throw NumericalError("ode_solve: max steps exceeded");
  const double h = (t1 - t0) / cfg.rk4_steps;
  Var y = y0;
  for (int i = 0; i < cfg.rk4_steps; ++i) {
    const double t = t0 + i * h;
    Var k1 = eval(f, t, y, st);
    Var k2 = eval(f, t + h / 2, combine(y, h, {{0.5, &k1}}), st);
    Var k3 = eval(f, t + h / 2, combine(y, h, {{0.5, &k2}}), st);
    Var k4 = eval(f, t + h, combine(y, h, {{1.0, &k3}}), st);
    y = combine(y, h, {{1.0 / 6, &k1}, {1.0 / 3, &k2}, {1.0 / 3, &k3}, {1.0 / 6, &k4}});
    check_finite(y, t + h);
    ++st.accepted;
  }
  return y;
}

double rms_norm(const Matrix& m) {
  return m.size() == 0 ? 0.0 : std::sqrt(m.squaredNorm() / static_cast<double>(m.size()));
}

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// b - b_hat (fifth minus fourth order weights)
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

Var dopri5(const VectorField& f, const Var& y0, double t0, double t1, const OdeSolverConfig& cfg, OdeStats& st) {
  if (!(cfg.rtol > 0) || !(cfg.atol > 0)) throw ContractError("ode_solve: tolerances must be positive");
  const double span = t1 - t0;
  Var y = y0;
  double t = t0;
  Var k1 = eval(f, t, y, st);

  // Initial step heuristic (Hairer, Norsett & Wanner, II.4).
  double h;
  {
    const Matrix scale = (cfg.atol + cfg.rtol * y.value().array().abs()).matrix();
    const double d0 = rms_norm((y.value().array() / scale.array()).matrix());
    const double d1 = rms_norm((k1.value().array() / scale.array()).matrix());
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, span);
    Matrix y1 = y.value() + h0 * k1.value();
    Matrix f1;
    {
      numcore::NoGradGuard ng;
      f1 = f(t + h0, Var(y1)).value();
      ++st.evaluations;
    }
    const double d2 = rms_norm(((f1 - k1.value()).array() / scale.array()).matrix()) / h0;
    const double h1 = std::max(d1, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3)
                                               : std::pow(0.01 / std::max(d1, d2), 1.0 / 5.0);
    h = std::min({100 * h0, h1, span});
  }

  int steps = 0;
  while (t < t1) {
    if (steps++ >= cfg.max_steps) throw NumericalError("ode_solve: max steps exceeded");
    const bool last = t + h >= t1 || (t1 - (t + h)) < 1e-12 * std::max(1.0, std::abs(t1));
    if (last) h = t1 - t;

    Var k2 = eval(f, t + c2 * h, combine(y, h, {{a21, &k1}}), st);
    Var k3 = eval(f, t + c3 * h, combine(y, h, {{a31, &k1}, {a32, &k2}}), st);
    Var k4 = eval(f, t + c4 * h, combine(y, h, {{a41, &k1}, {a42, &k2}, {a43, &k3}}), st);
    Var k5 = eval(f, t + c5 * h, combine(y, h, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}), st);
    Var k6 = eval(f, t + h, combine(y, h, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}}), st);
    Var y_new = combine(y, h, {{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}});
    check_finite(y_new, t + h);
    Var k7 = eval(f, t + h, y_new, st);

    const Matrix err = h * (e1 * k1.value() + e3 * k3.value() + e4 * k4.value() + e5 * k5.value() +
                            e6 * k6.value() + e7 * k7.value());
    const Matrix scale =
        (cfg.atol + cfg.rtol * y.value().array().abs().max(y_new.value().array().abs())).matrix();
    const double en = rms_norm((err.array() / scale.array()).matrix());

    if (en <= 1.0) {
      t = last ? t1 : t + h;
      y = y_new;
      k1 = k7;
      ++st.accepted;
    } else {
      ++st.rejected;
    }
    const double factor = en == 0.0 ? 10.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 10.0);
    h *= en <= 1.0 ? factor : std::min(1.0, factor);
    if (!(h > 0) || h < 1e-14 * std::max(1.0, std::abs(t))) {
      throw NumericalError("ode_solve: step size underflow at t=" + std::to_string(t));
    }
  }
  return y;
}

}  // namespace

Var ode_solve(const VectorField& f, const Var& y0, double t0, double t1, const OdeSolverConfig& config,
              OdeStats* stats) {
  if (!(t1 >= t0)) throw ContractError("ode_solve: need t1 >= t0");
  if (config.max_steps < 1) throw ContractError("ode_solve: max_steps must be >= 1");
  check_finite(y0, t0);
  OdeStats local;
  OdeStats& st = stats ? *stats : local;
  if (t1 == t0) return y0;
  return config.method == OdeMethod::kRk4Fixed ? rk4(f, y0, t0, t1, config, st) : dopri5(f, y0, t0, t1, config, st);
}

}  // namespace seqstate::seqmath
