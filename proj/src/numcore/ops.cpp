#include "seqstate/numcore/ops.hpp"

#include <cmath>
#include <string>

#include "seqstate/errors.hpp"

namespace seqstate::numcore {

namespace {

std::string shape_str(const Var& v) {
  return "(" + std::to_string(v.rows()) + "x" + std::to_string(v.cols()) + ")";
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ContractError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                        shape_str(b));
  }
}

enum class Broadcast { kNone, kRow, kScalar };

Broadcast broadcast_kind(const Var& a, const Var& b, const char* op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::kNone;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  if (b.size() == 1) return Broadcast::kScalar;
  throw ContractError(std::string(op) + ": cannot broadcast " + shape_str(b) + " onto " +
                      shape_str(a));
}

void accumulate_broadcast(Node& n, const Matrix& g, Broadcast kind) {
  switch (kind) {
    case Broadcast::kNone:
      n.accumulate(g);
      break;
    case Broadcast::kRow:
      n.accumulate(g.colwise().sum());
      break;
    case Broadcast::kScalar:
      n.accumulate(Matrix::Constant(1, 1, g.sum()));
      break;
  }
}

}  // namespace

Var constant(Matrix value) { return Var(std::move(value)); }

Var add(const Var& a, const Var& b) {
  const Broadcast kind = broadcast_kind(a, b, "add");
  Matrix out = a.value();
  switch (kind) {
    case Broadcast::kNone:
      out += b.value();
      break;
    case Broadcast::kRow:
      out.rowwise() += b.value().row(0);
      break;
    case Broadcast::kScalar:
      out.array() += b.value()(0, 0);
      break;
  }
  return make_op(std::move(out), {&a, &b}, [kind](Node& self) {
    self.parent(0).accumulate(self.grad);
    accumulate_broadcast(self.parent(1), self.grad, kind);
  });
}

Var sub(const Var& a, const Var& b) {
  const Broadcast kind = broadcast_kind(a, b, "sub");
  Matrix out = a.value();
  switch (kind) {
    case Broadcast::kNone:
      out -= b.value();
      break;
    case Broadcast::kRow:
      out.rowwise() -= b.value().row(0);
      break;
    case Broadcast::kScalar:
      out.array() -= b.value()(0, 0);
      break;
  }
  return make_op(std::move(out), {&a, &b}, [kind](Node& self) {
    self.parent(0).accumulate(self.grad);
    accumulate_broadcast(self.parent(1), -self.grad, kind);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  return make_op(std::move(out), {&a, &b}, [](Node& self) {
    Node& pa = self.parent(0);
    Node& pb = self.parent(1);
    if (pa.requires_grad) pa.accumulate(self.grad.cwiseProduct(pb.value));
    if (pb.requires_grad) pb.accumulate(self.grad.cwiseProduct(pa.value));
  });
}

Var scale(const Var& a, double s) {
  return make_op(a.value() * s, {&a}, [s](Node& self) { self.parent(0).accumulate(self.grad * s); });
}

Var add_scalar(const Var& a, double s) {
  Matrix out = a.value().array() + s;
  return make_op(std::move(out), {&a}, [](Node& self) { self.parent(0).accumulate(self.grad); });
}

Var one_minus(const Var& a) {
  Matrix out = (1.0 - a.value().array()).matrix();
  return make_op(std::move(out), {&a}, [](Node& self) { self.parent(0).accumulate(-self.grad); });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw ContractError("matmul: inner dimension mismatch " + shape_str(a) + " * " + shape_str(b));
  }
  Matrix out = a.value() * b.value();
  return make_op(std::move(out), {&a, &b}, [](Node& self) {
    Node& pa = self.parent(0);
    Node& pb = self.parent(1);
    if (pa.requires_grad) pa.accumulate(self.grad * pb.value.transpose());
    if (pb.requires_grad) pb.accumulate(pa.value.transpose() * self.grad);
  });
}

Var affine(const Var& x, const Var& w, const Var& b) {
  if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols()) {
    throw ContractError("affine: incompatible shapes x" + shape_str(x) + " W" + shape_str(w) +
                        " b" + shape_str(b));
  }
  Matrix out(x.rows(), w.cols());
  out.noalias() = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  return make_op(std::move(out), {&x, &w, &b}, [](Node& self) {
    Node& px = self.parent(0);
    Node& pw = self.parent(1);
    Node& pb = self.parent(2);
    if (px.requires_grad) px.accumulate(self.grad * pw.value.transpose());
    if (pw.requires_grad) pw.accumulate(px.value.transpose() * self.grad);
    if (pb.requires_grad) pb.accumulate(self.grad.colwise().sum());
  });
}

Var relu(const Var& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return make_op(std::move(out), {&a}, [](Node& self) {
    self.parent(0).accumulate(
        (self.value.array() > 0.0).select(self.grad.array(), 0.0).matrix());
  });
}

Var elu(const Var& a) {
  Matrix out =
      (a.value().array() > 0.0).select(a.value().array(), a.value().array().exp() - 1.0).matrix();
  return make_op(std::move(out), {&a}, [](Node& self) {
    const auto& x = self.parent(0).value;
    self.parent(0).accumulate(
        (x.array() > 0.0)
            .select(self.grad.array(), self.grad.array() * (self.value.array() + 1.0))
            .matrix());
  });
}

namespace {

// Vectorized through exp; std::tanh on doubles is scalar and several times
// slower than the GEMMs around it. Absolute error stays near 1e-16.
Matrix tanh_values(const Matrix& x) {
  if (!x.allFinite()) return x.array().tanh().matrix();
  using RowArray = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowArray e = (2.0 * x.array().abs().min(20.0)).exp();
  const RowArray t = (e - 1.0) / (e + 1.0);
  Matrix out(x.rows(), x.cols());
  out.array() = (x.array() < 0.0).select(-t, t);
  return out;
}

}  // namespace

Var tanh(const Var& a) {
  Matrix out = tanh_values(a.value());
  return make_op(std::move(out), {&a}, [](Node& self) {
    self.parent(0).accumulate((self.grad.array() * (1.0 - self.value.array().square())).matrix());
  });
}

Var sigmoid(const Var& a) {
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return make_op(std::move(out), {&a}, [](Node& self) {
    self.parent(0).accumulate(
        (self.grad.array() * self.value.array() * (1.0 - self.value.array())).matrix());
  });
}

Var square(const Var& a) {
  Matrix out = a.value().array().square();
  return make_op(std::move(out), {&a}, [](Node& self) {
    self.parent(0).accumulate((2.0 * self.grad.array() * self.parent(0).value.array()).matrix());
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ContractError("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<Index> offsets;
  offsets.reserve(parts.size());
  Index c = 0;
  for (const Var& p : parts) {
    offsets.push_back(c);
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return make_op(std::move(out), parts, [offsets](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      Node& p = self.parent(i);
      if (p.requires_grad) p.accumulate(self.grad.middleCols(offsets[i], p.value.cols()));
    }
  });
}

Var slice_cols(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw ContractError("slice_cols: range out of bounds");
  }
  Matrix out = a.value().middleCols(start, count);
  return make_op(std::move(out), {&a}, [start](Node& self) {
    self.parent(0).accumulate_block(0, start, self.grad);
  });
}

Var vstack(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("vstack: no inputs");
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ContractError("vstack: column count mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<Index> offsets;
  offsets.reserve(parts.size());
  Index r = 0;
  for (const Var& p : parts) {
    offsets.push_back(r);
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return make_op(std::move(out), parts, [offsets](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      Node& p = self.parent(i);
      if (p.requires_grad) p.accumulate(self.grad.middleRows(offsets[i], p.value.rows()));
    }
  });
}

Var slice_rows(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw ContractError("slice_rows: range out of bounds");
  }
  Matrix out = a.value().middleRows(start, count);
  return make_op(std::move(out), {&a}, [start](Node& self) {
    self.parent(0).accumulate_block(start, 0, self.grad);
  });
}

Var gather_rows(const Var& a, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) throw ContractError("gather_rows: index out of range");
    out.row(static_cast<Index>(i)) = a.value().row(rows[i]);
  }
  std::vector<Index> idx(rows.begin(), rows.end());
  return make_op(std::move(out), {&a}, [idx = std::move(idx)](Node& self) {
    Node& p = self.parent(0);
    for (std::size_t i = 0; i < idx.size(); ++i) p.accumulate_block(idx[i], 0, self.grad.row(static_cast<Index>(i)));
  });
}

Var sum(const Var& a) {
  return make_op(Matrix::Constant(1, 1, a.value().sum()), {&a}, [](Node& self) {
    Node& p = self.parent(0);
    p.accumulate(Matrix::Constant(p.value.rows(), p.value.cols(), self.grad(0, 0)));
  });
}

Var mean(const Var& a) {
  if (a.size() == 0) throw ContractError("mean: empty tensor");
  const double n = static_cast<double>(a.size());
  return make_op(Matrix::Constant(1, 1, a.value().sum() / n), {&a}, [n](Node& self) {
    Node& p = self.parent(0);
    p.accumulate(Matrix::Constant(p.value.rows(), p.value.cols(), self.grad(0, 0) / n));
  });
}

Var mse(const Var& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ContractError("mse: shape mismatch " + shape_str(pred) + " vs (" +
                        std::to_string(target.rows()) + "x" + std::to_string(target.cols()) + ")");
  }
  if (pred.size() == 0) throw ContractError("mse: empty tensor");
  Matrix diff = pred.value() - target;
  const double n = static_cast<double>(diff.size());
  const double v = diff.squaredNorm() / n;
  return make_op(Matrix::Constant(1, 1, v), {&pred}, [diff = std::move(diff), n](Node& self) {
    self.parent(0).accumulate(diff * (2.0 * self.grad(0, 0) / n));
  });
}

Var mse(const Var& pred, const Var& target) {
  require_same_shape(pred, target, "mse");
  return mean(square(sub(pred, target)));
}

Var cross_entropy(const Var& logits, std::span<const int> labels) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size() || labels.empty()) {
    throw ContractError("cross_entropy: label count must equal logit rows");
  }
  Matrix probs = softmax_rows(logits.value());
  const Index k = logits.cols();
  double loss = 0.0;
  for (Index i = 0; i < probs.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) throw ContractError("cross_entropy: label out of range");
    loss -= std::log(std::max(probs(i, y), 1e-300));
  }
  const double n = static_cast<double>(labels.size());
  std::vector<int> ys(labels.begin(), labels.end());
  return make_op(Matrix::Constant(1, 1, loss / n), {&logits},
                 [probs = std::move(probs), ys = std::move(ys), n](Node& self) {
                   Matrix g = probs;
                   for (std::size_t i = 0; i < ys.size(); ++i) g(static_cast<Index>(i), ys[i]) -= 1.0;
                   self.parent(0).accumulate(g * (self.grad(0, 0) / n));
                 });
}

Var block_contract(const Var& f, const Var& v, Index out_cols) {
  const Index c = v.cols();
  if (f.rows() != v.rows() || f.cols() != out_cols * c) {
    throw ContractError("block_contract: expected f of shape (" + std::to_string(v.rows()) + "x" +
                        std::to_string(out_cols * c) + "), got " + shape_str(f));
  }
  using RowMap = Eigen::Map<const Matrix>;
  Matrix out(f.rows(), out_cols);
  for (Index b = 0; b < f.rows(); ++b) {
    RowMap block(f.value().row(b).data(), out_cols, c);
    out.row(b).noalias() = (block * v.value().row(b).transpose()).transpose();
  }
  return make_op(std::move(out), {&f, &v}, [out_cols, c](Node& self) {
    Node& pf = self.parent(0);
    Node& pv = self.parent(1);
    const Index rows = pf.value.rows();
    if (pf.requires_grad) {
      Matrix g(rows, out_cols * c);
      for (Index b = 0; b < rows; ++b) {
        for (Index i = 0; i < out_cols; ++i) g.row(b).segment(i * c, c) = self.grad(b, i) * pv.value.row(b);
      }
      pf.accumulate(std::move(g));
    }
    if (pv.requires_grad) {
      Matrix g(rows, c);
      for (Index b = 0; b < rows; ++b) {
        Eigen::Map<const Matrix> block(pf.value.row(b).data(), out_cols, c);
        g.row(b).noalias() = self.grad.row(b) * block;
      }
      pv.accumulate(std::move(g));
    }
  });
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

}  // namespace seqstate::numcore
