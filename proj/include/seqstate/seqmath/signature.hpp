#pragma once

// Truncated path signatures of piecewise-linear paths.
//
// An element of the truncated tensor algebra T^N(R^d) is stored flat, level
// by level: [1 | d terms | d^2 terms | ... | d^N terms]. Within a level,
// words are in lexicographic order, i.e. the level-k entry for word
// (i1,...,ik) sits at offset(k) + ((i1*d + i2)*d + ...)+ik. The total
// length is (d^(N+1) - 1)/(d - 1) (N + 1 when d == 1).
//
// The signature of a linear segment with increment D is
// exp(D) = (1, D, D⊗D/2!, ..., D^⊗N/N!), and signatures of concatenated
// paths multiply in the tensor algebra (Chen's identity).

#include <span>
#include <vector>

#include "seqstate/numcore/tensor.hpp"

namespace seqstate::seqmath {

using numcore::Index;
using numcore::Matrix;
using numcore::Var;

Index signature_length(Index channels, int depth);

class TensorAlgebra {
 public:
  TensorAlgebra(Index channels, int depth);

  Index channels() const { return d_; }
  int depth() const { return depth_; }
  Index length() const { return offsets_.back(); }
  Index offset(int level) const { return offsets_[static_cast<std::size_t>(level)]; }
  Index level_size(int level) const { return offset(level + 1) - offset(level); }

  // out = (1, 0, ..., 0)
  void identity(double* out) const;
  // out = exp(delta) truncated at depth.
  void exp(const double* delta, double* out) const;
  // out = a ⊗ b truncated at depth. `out` must not alias the inputs.
  void multiply(const double* a, const double* b, double* out) const;
  // out = s ⊗ exp(delta). `out` must not alias the inputs.
  void extend(const double* s, const double* delta, double* out) const;
  // Reverse of extend: accumulates dL/ds into g_s and dL/ddelta into
  // g_delta given dL/dout.
  void extend_backward(const double* s, const double* delta, const double* g_out, double* g_s,
                       double* g_delta) const;

 private:
  Index d_;
  int depth_;
  std::vector<Index> offsets_;  // depth + 2 entries
};

struct SignatureVector {
  Index channels = 0;
  int depth = 0;
  std::vector<double> coeffs;
};

// Signature of the piecewise-linear path through the rows of `path` (T x d).
SignatureVector signature(const Matrix& path, int depth);

// Row t is the signature of path rows 0..t (expanding window). Row 0 is the
// trivial signature (1, 0, ..., 0). Computed incrementally via Chen.
Matrix stream_signature(const Matrix& path, int depth);

// Differentiable versions (1 x len and T x len).
Var signature(const Var& path, int depth);
Var stream_signature(const Var& path, int depth);

// Batched stream signature over B independent paths laid out time-major:
// row t*B + b of `x` is point t of path b. With `basepoint`, every path is
// prefixed by the origin, so row t holds signature(0, x_0, ..., x_t) and
// level 1 carries absolute position; without it row 0 is trivial.
Var stream_signature_batched(const Var& x, Index steps, Index batch, int depth, bool basepoint);

}  // namespace seqstate::seqmath
