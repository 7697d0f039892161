#pragma once

#include <span>
#include <vector>

#include "seqstate/numcore/tensor.hpp"

namespace seqstate::numcore {

Var constant(Matrix value);

// Elementwise sum. `b` may also be a 1xn row (broadcast over rows of `a`) or
// a 1x1 scalar (broadcast everywhere).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // Hadamard, equal shapes
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var one_minus(const Var& a);

Var matmul(const Var& a, const Var& b);
// x * W + b with W stored (in x out) and b a 1 x out row.
Var affine(const Var& x, const Var& w, const Var& b);

Var relu(const Var& a);
Var elu(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var square(const Var& a);

Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& a, Index start, Index count);
Var vstack(const std::vector<Var>& parts);
Var slice_rows(const Var& a, Index start, Index count);
Var gather_rows(const Var& a, std::span<const Index> rows);

Var sum(const Var& a);
Var mean(const Var& a);

// Mean of squared elementwise differences.
Var mse(const Var& pred, const Matrix& target);
Var mse(const Var& pred, const Var& target);

// Mean over rows of -log softmax(logits)[label].
Var cross_entropy(const Var& logits, std::span<const int> labels);

// Row-blockwise contraction: out[b, i] = sum_c f[b, i*C + c] * v[b, c] where
// C = v.cols() and f has out_cols*C columns. Used for matrix-valued vector
// fields applied to per-row control derivatives.
Var block_contract(const Var& f, const Var& v, Index out_cols);

// Row-wise softmax of a plain matrix (no graph).
Matrix softmax_rows(const Matrix& logits);

}  // namespace seqstate::numcore
