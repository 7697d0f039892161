#include "seqstate/seqmath/spline.hpp"

#include <algorithm>

#include "seqstate/errors.hpp"
#include "seqstate/numcore/ops.hpp"

namespace seqstate::seqmath {

Index CubicSpline::interval(double t) const {
  const auto it = std::upper_bound(knots.begin(), knots.end(), t);
  Index i = static_cast<Index>(it - knots.begin()) - 1;
  return std::clamp<Index>(i, 0, static_cast<Index>(knots.size()) - 2);
}

CubicSpline fit_spline(std::span<const double> times, const Matrix& values) {
  const Index n = static_cast<Index>(times.size());
  if (n < 2) throw ContractError("fit_spline: need at least two knots");
  if (values.rows() != n) throw ContractError("fit_spline: values rows must match times");
  for (Index i = 1; i < n; ++i) {
    if (!(times[static_cast<std::size_t>(i)] > times[static_cast<std::size_t>(i - 1)])) {
      throw ContractError("fit_spline: times must be strictly increasing");
    }
  }
  const Index ch = values.cols();
  std::vector<double> h(static_cast<std::size_t>(n - 1));
  for (Index i = 0; i + 1 < n; ++i) {
    h[static_cast<std::size_t>(i)] = times[static_cast<std::size_t>(i + 1)] - times[static_cast<std::size_t>(i)];
  }

  // Second derivatives M at knots; natural ends M_0 = M_{n-1} = 0. Thomas
  // algorithm on the interior tridiagonal system, all channels at once.
  Matrix m = Matrix::Zero(n, ch);
  const Index k = n - 2;
  if (k > 0) {
    std::vector<double> diag(static_cast<std::size_t>(k)), upper(static_cast<std::size_t>(k));
    Matrix rhs(k, ch);
    for (Index j = 0; j < k; ++j) {
      const Index i = j + 1;
      const double hl = h[static_cast<std::size_t>(i - 1)], hr = h[static_cast<std::size_t>(i)];
      diag[static_cast<std::size_t>(j)] = 2.0 * (hl + hr);
      upper[static_cast<std::size_t>(j)] = hr;
      rhs.row(j) = 6.0 * ((values.row(i + 1) - values.row(i)) / hr - (values.row(i) - values.row(i - 1)) / hl);
    }
    for (Index j = 1; j < k; ++j) {
      const double lower = h[static_cast<std::size_t>(j)];  // h_{i-1} with i = j+1
      const double w = lower / diag[static_cast<std::size_t>(j - 1)];
      diag[static_cast<std::size_t>(j)] -= w * upper[static_cast<std::size_t>(j - 1)];
      rhs.row(j) -= w * rhs.row(j - 1);
    }
    m.row(k) = rhs.row(k - 1) / diag[static_cast<std::size_t>(k - 1)];
    for (Index j = k - 2; j >= 0; --j) {
      m.row(j + 1) = (rhs.row(j) - upper[static_cast<std::size_t>(j)] * m.row(j + 2)) / diag[static_cast<std::size_t>(j)];
    }
  }

  CubicSpline s;
  s.knots.assign(times.begin(), times.end());
  s.a.resize(n - 1, ch);
  s.b.resize(n - 1, ch);
  s.c.resize(n - 1, ch);
  s.d.resize(n - 1, ch);
  for (Index i = 0; i + 1 < n; ++i) {
    const double hi = h[static_cast<std::size_t>(i)];
    s.a.row(i) = values.row(i);
    s.b.row(i) = (values.row(i + 1) - values.row(i)) / hi - hi * (2.0 * m.row(i) + m.row(i + 1)) / 6.0;
    s.c.row(i) = m.row(i) / 2.0;
    s.d.row(i) = (m.row(i + 1) - m.row(i)) / (6.0 * hi);
  }
  return s;
}

Eigen::RowVectorXd eval_spline(const CubicSpline& s, double t) {
  const Index i = s.interval(t);
  const double x = t - s.knots[static_cast<std::size_t>(i)];
  return s.a.row(i) + x * (s.b.row(i) + x * (s.c.row(i) + x * s.d.row(i)));
}

Eigen::RowVectorXd eval_spline_deriv(const CubicSpline& s, double t) {
  const Index i = s.interval(t);
  const double x = t - s.knots[static_cast<std::size_t>(i)];
  return s.b.row(i) + x * (2.0 * s.c.row(i) + 3.0 * x * s.d.row(i));
}

namespace {

CubicSpline basis_spline(std::span<const double> times) {
  const Index n = static_cast<Index>(times.size());
  return fit_spline(times, Matrix::Identity(n, n));
}

}  // namespace

Eigen::RowVectorXd spline_weights(std::span<const double> times, double t) {
  return eval_spline(basis_spline(times), t);
}

Eigen::RowVectorXd spline_deriv_weights(std::span<const double> times, double t) {
  return eval_spline_deriv(basis_spline(times), t);
}

namespace {

Var weighted_rows(const Var& values, const Eigen::RowVectorXd& w) {
  Matrix wm = w;
  return numcore::matmul(numcore::constant(std::move(wm)), values);
}

}  // namespace

Var eval_spline(const Var& values, std::span<const double> times, double t) {
  if (values.rows() != static_cast<Index>(times.size())) throw ContractError("eval_spline: rows must match times");
  return weighted_rows(values, spline_weights(times, t));
}

Var eval_spline_deriv(const Var& values, std::span<const double> times, double t) {
  if (values.rows() != static_cast<Index>(times.size())) throw ContractError("eval_spline_deriv: rows must match times");
  return weighted_rows(values, spline_deriv_weights(times, t));
}

}  // namespace seqstate::seqmath
