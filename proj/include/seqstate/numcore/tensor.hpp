#pragma once

// Dense 2-D tensors with reverse-mode automatic differentiation.
//
// Every value is a row-major f64 matrix; vectors are 1xn or nx1 matrices.
// A Var is a handle to a graph node. Operations on Vars that require
// gradients record their parents and a backward closure; backward() walks
// the reachable subgraph once in reverse creation order, which is a valid
// reverse topological order because a node is always created after its
// parents. Gradients accumulate additively at fan-out.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

namespace seqstate::numcore {

using Index = Eigen::Index;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Node {
  Matrix value;
  Matrix grad;  // empty until the first accumulation
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  bool requires_grad = false;
  std::uint64_t id = 0;

  Node();
  ~Node();
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  template <class Derived>
  void accumulate(const Eigen::MatrixBase<Derived>& g) {
    if (!requires_grad) return;
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }

  void accumulate(Matrix&& g) {
    if (!requires_grad) return;
    if (grad.size() == 0) {
      grad = std::move(g);
    } else {
      grad += g;
    }
  }

  // Adds g into a block of grad, allocating zeros on first use.
  template <class Derived>
  void accumulate_block(Index row, Index col, const Eigen::MatrixBase<Derived>& g) {
    if (!requires_grad) return;
    if (grad.size() == 0) grad = Matrix::Zero(value.rows(), value.cols());
    grad.block(row, col, g.rows(), g.cols()) += g;
  }

  Node& parent(std::size_t i) { return *parents[i]; }
};

class Var {
 public:
  Var() = default;
  explicit Var(Matrix value, bool requires_grad = false);

  static Var scalar(double v);
  static Var row(const std::vector<double>& v);

  bool defined() const { return static_cast<bool>(node_); }
  const Matrix& value() const { return node_->value; }
  // Leaves only: optimizers and loaders write parameter values in place.
  Matrix& mutable_value() { return node_->value; }
  // Zero matrix of the value's shape when no gradient has been accumulated.
  Matrix grad() const;
  bool has_grad() const { return node_->grad.size() != 0; }
  void zero_grad() { node_->grad.resize(0, 0); }

  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  std::array<Index, 2> shape() const { return {rows(), cols()}; }
  Index size() const { return node_->value.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  double item() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  friend Var make_op(Matrix value, std::initializer_list<const Var*> parents,
                     std::function<void(Node&)> backward);
  friend Var make_op(Matrix value, const std::vector<Var>& parents,
                     std::function<void(Node&)> backward);
  std::shared_ptr<Node> node_;
};

// Builds a result node. When gradients are disabled or no parent requires
// them, the result is a constant and the closure is dropped.
Var make_op(Matrix value, std::initializer_list<const Var*> parents,
            std::function<void(Node&)> backward);
Var make_op(Matrix value, const std::vector<Var>& parents,
            std::function<void(Node&)> backward);

// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates to every leaf.
void backward(const Var& root);

bool grad_enabled();

// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool all_finite(const Matrix& m);

}  // namespace seqstate::numcore
