#include "seqstate/seqmath/signature.hpp"

#include <algorithm>

#include "seqstate/errors.hpp"
#include "seqstate/numcore/ops.hpp"

namespace seqstate::seqmath {

Index signature_length(Index channels, int depth) {
  if (channels < 1 || depth < 1) throw ContractError("signature_length: need channels >= 1, depth >= 1");
  Index total = 0, level = 1;
  for (int k = 0; k <= depth; ++k) {
    total += level;
    level *= channels;
  }
  return total;
}

TensorAlgebra::TensorAlgebra(Index channels, int depth) : d_(channels), depth_(depth) {
  if (channels < 1 || depth < 1) throw ContractError("TensorAlgebra: need channels >= 1, depth >= 1");
  offsets_.reserve(static_cast<std::size_t>(depth) + 2);
  Index off = 0, level = 1;
  for (int k = 0; k <= depth; ++k) {
    offsets_.push_back(off);
    off += level;
    level *= channels;
  }
  offsets_.push_back(off);
}

void TensorAlgebra::identity(double* out) const {
  std::fill(out, out + length(), 0.0);
  out[0] = 1.0;
}

void TensorAlgebra::exp(const double* delta, double* out) const {
  out[0] = 1.0;
  std::copy(delta, delta + d_, out + offset(1));
  for (int k = 2; k <= depth_; ++k) {
    const double* prev = out + offset(k - 1);
    double* cur = out + offset(k);
    const Index n_prev = level_size(k - 1);
    const double inv_k = 1.0 / k;
    for (Index a = 0; a < n_prev; ++a) {
      const double pa = prev[a] * inv_k;
      double* dst = cur + a * d_;
      for (Index b = 0; b < d_; ++b) dst[b] = pa * delta[b];
    }
  }
}

void TensorAlgebra::multiply(const double* a, const double* b, double* out) const {
  for (int k = 0; k <= depth_; ++k) {
    double* dst = out + offset(k);
    const Index nk = level_size(k);
    std::fill(dst, dst + nk, 0.0);
    for (int i = 0; i <= k; ++i) {
      const int j = k - i;
      const double* ai = a + offset(i);
      const double* bj = b + offset(j);
      const Index ni = level_size(i), nj = level_size(j);
      for (Index p = 0; p < ni; ++p) {
        const double ap = ai[p];
        if (ap == 0.0) continue;
        double* row = dst + p * nj;
        for (Index q = 0; q < nj; ++q) row[q] += ap * bj[q];
      }
    }
  }
}

// Horner form of Chen's identity with exp(delta):
//   out_k = s_k + (s_{k-1} + (... + s_0 delta / k) ⊗ delta / 2) ⊗ delta
// Each level is built in place inside out_k, innermost term first.
void TensorAlgebra::extend(const double* s, const double* delta, double* out) const {
  out[0] = s[0];
  for (int k = 1; k <= depth_; ++k) {
    double* dst = out + offset(k);
    dst[0] = s[0];
    Index n = 1;
    for (int j = 1; j <= k; ++j) {
      const double c = 1.0 / (k - j + 1);
      const double* sj = s + offset(j);
      // Block a is written at a*d.., never over an unread dst[a'] with a' < a.
      for (Index a = n - 1; a >= 0; --a) {
        const double ta = dst[a] * c;
        double* __restrict row = dst + a * d_;
        const double* __restrict srow = sj + a * d_;
        const double* __restrict dl = delta;
        for (Index b = 0; b < d_; ++b) row[b] = ta * dl[b] + srow[b];
      }
      n *= d_;
    }
  }
}

void TensorAlgebra::extend_backward(const double* s, const double* delta, const double* g_out, double* g_s,
                                    double* g_delta) const {
  // chain holds the Horner partial sums t_0 .. t_{k-1} of one level, packed
  // at offsets 0, 1, 1+d, ...; grad holds the running gradient of t_j.
  std::vector<double> chain(static_cast<std::size_t>(length()));
  std::vector<double> grad(static_cast<std::size_t>(level_size(depth_)));
  g_s[0] += g_out[0];
  for (int k = 1; k <= depth_; ++k) {
    chain[0] = s[0];
    for (int j = 1; j < k; ++j) {
      const double c = 1.0 / (k - j + 1);
      const double* prev = chain.data() + offset(j - 1);
      double* cur = chain.data() + offset(j);
      const double* sj = s + offset(j);
      const Index n = level_size(j - 1);
      for (Index a = 0; a < n; ++a) {
        const double ta = prev[a] * c;
        for (Index b = 0; b < d_; ++b) cur[a * d_ + b] = ta * delta[b] + sj[a * d_ + b];
      }
    }
    const double* gk = g_out + offset(k);
    std::copy(gk, gk + level_size(k), grad.begin());
    for (int j = k; j >= 1; --j) {
      const double c = 1.0 / (k - j + 1);
      const Index n = level_size(j - 1);
      double* __restrict gsj = g_s + offset(j);
      const double* __restrict gr = grad.data();
      for (Index i = 0; i < n * d_; ++i) gsj[i] += gr[i];
      const double* prev = chain.data() + offset(j - 1);
      for (Index a = 0; a < n; ++a) {
        const double* __restrict grow = grad.data() + a * d_;
        double* __restrict gd = g_delta;
        const double* __restrict dl = delta;
        const double coef = c * prev[a];
        double acc = 0.0;
        for (Index b = 0; b < d_; ++b) {
          acc += grow[b] * dl[b];
          gd[b] += coef * grow[b];
        }
        grad[static_cast<std::size_t>(a)] = c * acc;  // a <= a*d: block a already consumed
      }
    }
    g_s[0] += grad[0];
  }
}

namespace {

void require_path(Index rows, int depth) {
  if (rows < 2) throw ContractError("signature: path needs at least two points");
  if (depth < 1) throw ContractError("signature: depth must be >= 1");
}

// Fills rows of `out` (steps x len) for one path given as a strided view:
// point t lives at x + t*stride. With basepoint the implicit point -1 is 0.
void stream_forward(const TensorAlgebra& ta, const double* x, Index stride, Index steps, bool basepoint,
                    double* out, Index out_stride) {
  const Index d = ta.channels();
  std::vector<double> delta(static_cast<std::size_t>(d));
  if (basepoint) {
    ta.exp(x, out);
  } else {
    ta.identity(out);
  }
  for (Index t = 1; t < steps; ++t) {
    const double* cur = x + t * stride;
    const double* prev = x + (t - 1) * stride;
    for (Index c = 0; c < d; ++c) delta[static_cast<std::size_t>(c)] = cur[c] - prev[c];
    ta.extend(out + (t - 1) * out_stride, delta.data(), out + t * out_stride);
  }
}

void stream_backward(const TensorAlgebra& ta, const double* x, Index stride, Index steps, bool basepoint,
                     const double* sigs, Index sig_stride, const double* g_rows, Index g_stride, double* g_x) {
  const Index d = ta.channels();
  const Index len = ta.length();
  std::vector<double> carry(static_cast<std::size_t>(len), 0.0), g_prev(static_cast<std::size_t>(len));
  std::vector<double> delta(static_cast<std::size_t>(d)), g_delta(static_cast<std::size_t>(d));
  for (Index t = steps - 1; t >= 1; --t) {
    for (Index i = 0; i < len; ++i) carry[static_cast<std::size_t>(i)] += g_rows[t * g_stride + i];
    const double* cur = x + t * stride;
    const double* prev = x + (t - 1) * stride;
    for (Index c = 0; c < d; ++c) delta[static_cast<std::size_t>(c)] = cur[c] - prev[c];
    std::fill(g_prev.begin(), g_prev.end(), 0.0);
    std::fill(g_delta.begin(), g_delta.end(), 0.0);
    ta.extend_backward(sigs + (t - 1) * sig_stride, delta.data(), carry.data(), g_prev.data(), g_delta.data());
    for (Index c = 0; c < d; ++c) {
      g_x[t * stride + c] += g_delta[static_cast<std::size_t>(c)];
      g_x[(t - 1) * stride + c] -= g_delta[static_cast<std::size_t>(c)];
    }
    carry.swap(g_prev);
  }
  if (basepoint) {
    // Row 0 = exp(x_0): reuse extend_backward from the identity element.
    for (Index i = 0; i < len; ++i) carry[static_cast<std::size_t>(i)] += g_rows[i];
    std::vector<double> unit(static_cast<std::size_t>(len)), sink(static_cast<std::size_t>(len), 0.0);
    ta.identity(unit.data());
    std::fill(g_delta.begin(), g_delta.end(), 0.0);
    ta.extend_backward(unit.data(), x, carry.data(), sink.data(), g_delta.data());
    for (Index c = 0; c < d; ++c) g_x[c] += g_delta[static_cast<std::size_t>(c)];
  }
}

}  // namespace

SignatureVector signature(const Matrix& path, int depth) {
  require_path(path.rows(), depth);
  const Matrix rows = stream_signature(path, depth);
  SignatureVector out{path.cols(), depth, {}};
  out.coeffs.assign(rows.row(rows.rows() - 1).data(), rows.row(rows.rows() - 1).data() + rows.cols());
  return out;
}

Matrix stream_signature(const Matrix& path, int depth) {
  require_path(path.rows(), depth);
  TensorAlgebra ta(path.cols(), depth);
  Matrix out(path.rows(), ta.length());
  stream_forward(ta, path.data(), path.cols(), path.rows(), false, out.data(), out.cols());
  return out;
}

Var stream_signature(const Var& path, int depth) {
  require_path(path.rows(), depth);
  Matrix rows = stream_signature(path.value(), depth);
  return numcore::make_op(std::move(rows), {&path}, [depth](numcore::Node& self) {
    numcore::Node& p = self.parent(0);
    TensorAlgebra ta(p.value.cols(), depth);
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    stream_backward(ta, p.value.data(), p.value.cols(), p.value.rows(), false, self.value.data(), self.value.cols(),
                    self.grad.data(), self.grad.cols(), g.data());
    p.accumulate(std::move(g));
  });
}

Var signature(const Var& path, int depth) {
  Var rows = stream_signature(path, depth);
  return numcore::slice_rows(rows, rows.rows() - 1, 1);
}

Var stream_signature_batched(const Var& x, Index steps, Index batch, int depth, bool basepoint) {
  if (steps < 1 || batch < 1 || x.rows() != steps * batch) {
    throw ContractError("stream_signature_batched: rows must equal steps * batch");
  }
  if (!basepoint && steps < 2) throw ContractError("stream_signature_batched: path needs two points");
  TensorAlgebra ta(x.cols(), depth);
  const Index len = ta.length();
  const Index c = x.cols();
  Matrix out(steps * batch, len);
  // Path b, point t is row t*batch + b: stride batch*c, output stride batch*len.
  for (Index b = 0; b < batch; ++b) {
    stream_forward(ta, x.value().data() + b * c, batch * c, steps, basepoint, out.data() + b * len, batch * len);
  }
  return numcore::make_op(std::move(out), {&x}, [=](numcore::Node& self) {
    numcore::Node& p = self.parent(0);
    TensorAlgebra algebra(c, depth);
    Matrix g = Matrix::Zero(p.value.rows(), c);
    for (Index b = 0; b < batch; ++b) {
      stream_backward(algebra, p.value.data() + b * c, batch * c, steps, basepoint, self.value.data() + b * len,
                      batch * len, self.grad.data() + b * len, batch * len, g.data() + b * c);
    }
    p.accumulate(std::move(g));
  });
}

}  // namespace seqstate::seqmath
