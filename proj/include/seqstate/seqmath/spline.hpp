#pragma once

// Natural cubic spline interpolation, one independent spline per channel.

#include <span>
#include <vector>

#include "seqstate/numcore/tensor.hpp"

namespace seqstate::seqmath {

using numcore::Index;
using numcore::Matrix;
using numcore::Var;

// On interval i, value(t) = a + b*s + c*s^2 + d*s^3 with s = t - knots[i].
// Coefficient matrices are (T-1) x channels. Outside [t_0, t_{T-1}] the end
// cubics are extended.
struct CubicSpline {
  std::vector<double> knots;
  Matrix a, b, c, d;

  Index channels() const { return a.cols(); }
  Index interval(double t) const;
};

CubicSpline fit_spline(std::span<const double> times, const Matrix& values);
Eigen::RowVectorXd eval_spline(const CubicSpline& s, double t);
Eigen::RowVectorXd eval_spline_deriv(const CubicSpline& s, double t);

// The spline is linear in the knot values, so value(t) = w(t) · values for
// a 1 x T weight row. These return w(t) and w'(t).
Eigen::RowVectorXd spline_weights(std::span<const double> times, double t);
Eigen::RowVectorXd spline_deriv_weights(std::span<const double> times, double t);

// Differentiable evaluation w.r.t. the knot values (T x channels).
Var eval_spline(const Var& values, std::span<const double> times, double t);
Var eval_spline_deriv(const Var& values, std::span<const double> times, double t);

}  // namespace seqstate::seqmath
