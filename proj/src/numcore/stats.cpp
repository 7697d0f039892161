#include "seqstate/numcore/stats.hpp"

#include <cmath>

#include "seqstate/errors.hpp"

namespace seqstate::numcore {

namespace {

// Centered sum of squares below this (relative to scale) counts as constant.
bool negligible(double centered_ss, double n, double mu) {
  return centered_ss <= 1e-24 * n * (1.0 + mu * mu);
}

}  // namespace

double mean(std::span<const double> x) {
  if (x.empty()) throw ContractError("mean of empty input");
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double stddev(std::span<const double> x) {
  const double mu = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - mu) * (v - mu);
  return std::sqrt(ss / static_cast<double>(x.size()));
}

PearsonResult pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ContractError("pearson: length mismatch");
  if (x.size() < 2) throw ContractError("pearson: need at least two samples");
  const double n = static_cast<double>(x.size());
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (negligible(sxx, n, mx) || negligible(syy, n, my)) return {0.0, true};
  return {sxy / std::sqrt(sxx * syy), false};
}

PearsonVar pearson(const Var& x, const Var& y) {
  if (x.size() != y.size()) throw ContractError("pearson: length mismatch");
  if (x.size() < 2) throw ContractError("pearson: need at least two samples");
  const Index n = x.size();
  Eigen::Map<const Eigen::VectorXd> xv(x.value().data(), n);
  Eigen::Map<const Eigen::VectorXd> yv(y.value().data(), n);
  const double mx = xv.mean();
  const double my = yv.mean();
  const Eigen::VectorXd xc = xv.array() - mx;
  const Eigen::VectorXd yc = yv.array() - my;
  const double sxx = xc.squaredNorm();
  const double syy = yc.squaredNorm();
  const bool degenerate = negligible(sxx, static_cast<double>(n), mx) ||
                          negligible(syy, static_cast<double>(n), my);
  const double r = degenerate ? 0.0 : xc.dot(yc) / std::sqrt(sxx * syy);
  Var out = make_op(Matrix::Constant(1, 1, r), {&x, &y},
                    [xc, yc, sxx, syy, r, degenerate](Node& self) {
                      if (degenerate) return;
                      const double g = self.grad(0, 0);
                      const double norm = std::sqrt(sxx * syy);
                      Node& px = self.parent(0);
                      Node& py = self.parent(1);
                      if (px.requires_grad) {
                        Eigen::VectorXd gx = g * (yc / norm - r * xc / sxx);
                        px.accumulate(Eigen::Map<const Matrix>(gx.data(), px.value.rows(), px.value.cols()));
                      }
                      if (py.requires_grad) {
                        Eigen::VectorXd gy = g * (xc / norm - r * yc / syy);
                        py.accumulate(Eigen::Map<const Matrix>(gy.data(), py.value.rows(), py.value.cols()));
                      }
                    });
  return {out, degenerate};
}

Var column_pearson(const Var& x, std::span<const double> y, std::vector<bool>* degenerate) {
  const Index n = x.rows();
  const Index d = x.cols();
  if (static_cast<std::size_t>(n) != y.size()) throw ContractError("column_pearson: length mismatch");
  if (n < 2) throw ContractError("column_pearson: need at least two rows");
  // Own copy: Eigen peels reductions by address, so summing through a Map
  // over caller memory would round differently from call to call.
  const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  const double my = yv.mean();
  const Eigen::VectorXd yc = yv.array() - my;
  const double syy = yc.squaredNorm();
  const bool y_degenerate = negligible(syy, static_cast<double>(n), my);

  const Eigen::RowVectorXd mx = x.value().colwise().mean();
  Matrix xc = x.value().rowwise() - mx;
  Eigen::RowVectorXd sxx = xc.colwise().squaredNorm();
  Eigen::RowVectorXd sxy = yc.transpose() * xc;
  Matrix r = Matrix::Zero(1, d);
  std::vector<bool> flags(static_cast<std::size_t>(d));
  for (Index j = 0; j < d; ++j) {
    flags[static_cast<std::size_t>(j)] =
        y_degenerate || negligible(sxx(j), static_cast<double>(n), mx(j));
    if (!flags[static_cast<std::size_t>(j)]) r(0, j) = sxy(j) / std::sqrt(sxx(j) * syy);
  }
  if (degenerate) *degenerate = flags;
  return make_op(r, {&x},
                 [xc = std::move(xc), yc, sxx, syy, r, flags](Node& self) {
                   const Index cols = xc.cols();
                   Matrix g = Matrix::Zero(xc.rows(), cols);
                   for (Index j = 0; j < cols; ++j) {
                     if (flags[static_cast<std::size_t>(j)]) continue;
                     const double gj = self.grad(0, j);
                     const double norm = std::sqrt(sxx(j) * syy);
                     g.col(j) = gj * (yc / norm - r(0, j) * xc.col(j) / sxx(j));
                   }
                   self.parent(0).accumulate(std::move(g));
                 });
}

}  // namespace seqstate::numcore
