#pragma once

#include <span>
#include <vector>

#include "seqstate/numcore/tensor.hpp"

namespace seqstate::numcore {

// Sample Pearson coefficient. When either input has (numerically) zero
// variance the coefficient is reported as 0 with `degenerate` set, so that
// training on early, nearly constant latents can proceed.
struct PearsonResult {
  double value = 0.0;
  bool degenerate = false;
};

PearsonResult pearson(std::span<const double> x, std::span<const double> y);

struct PearsonVar {
  Var value;  // 1x1
  bool degenerate = false;
};

// Differentiable in both arguments; inputs are treated as flat vectors.
PearsonVar pearson(const Var& x, const Var& y);

// Pearson coefficient of every column of `x` (n x d) against the fixed
// vector `y` (length n); returns a 1 x d row. `degenerate`, when non-null,
// receives one flag per column.
Var column_pearson(const Var& x, std::span<const double> y, std::vector<bool>* degenerate = nullptr);

double mean(std::span<const double> x);
// Population (1/n) standard deviation.
double stddev(std::span<const double> x);

}  // namespace seqstate::numcore
