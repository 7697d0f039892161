#include "seqstate/numcore/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_set>

#include "seqstate/errors.hpp"

namespace seqstate::numcore {

namespace {

std::atomic<std::uint64_t> g_next_id{1};
thread_local bool t_grad_enabled = true;

}  // namespace

Node::Node() : id(g_next_id.fetch_add(1, std::memory_order_relaxed)) {}

// Long recurrent graphs form deep parent chains; release them iteratively so
// destruction never recurses once per node.
Node::~Node() {
  std::vector<std::shared_ptr<Node>> stack = std::move(parents);
  while (!stack.empty()) {
    std::shared_ptr<Node> p = std::move(stack.back());
    stack.pop_back();
    if (p.use_count() == 1) {
      for (auto& q : p->parents) stack.push_back(std::move(q));
      p->parents.clear();
    }
  }
}

Var::Var(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Var Var::scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return Var(std::move(m));
}

Var Var::row(const std::vector<double>& v) {
  Matrix m(1, static_cast<Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) m(0, static_cast<Index>(i)) = v[i];
  return Var(std::move(m));
}

Matrix Var::grad() const {
  if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
  return node_->grad;
}

double Var::item() const {
  if (size() != 1) throw ContractError("item() on a non-scalar tensor");
  return node_->value(0, 0);
}

Var make_op(Matrix value, std::initializer_list<const Var*> parents,
            std::function<void(Node&)> backward) {
  bool needs = false;
  if (t_grad_enabled) {
    for (const Var* p : parents) needs = needs || p->requires_grad();
  }
  Var out;
  out.node_ = std::make_shared<Node>();
  out.node_->value = std::move(value);
  if (!needs) return out;
  out.node_->requires_grad = true;
  out.node_->parents.reserve(parents.size());
  for (const Var* p : parents) out.node_->parents.push_back(p->node());
  out.node_->backward = std::move(backward);
  return out;
}

Var make_op(Matrix value, const std::vector<Var>& parents,
            std::function<void(Node&)> backward) {
  bool needs = false;
  if (t_grad_enabled) {
    for (const Var& p : parents) needs = needs || p.requires_grad();
  }
  Var out;
  out.node_ = std::make_shared<Node>();
  out.node_->value = std::move(value);
  if (!needs) return out;
  out.node_->requires_grad = true;
  out.node_->parents.reserve(parents.size());
  for (const Var& p : parents) out.node_->parents.push_back(p.node());
  out.node_->backward = std::move(backward);
  return out;
}

void backward(const Var& root) {
  if (!root.defined() || root.size() != 1) {
    throw ContractError("backward() requires a scalar root");
  }
  if (!root.requires_grad()) return;

  std::vector<Node*> order;
  std::vector<Node*> stack{root.node().get()};
  std::unordered_set<const Node*> seen{root.node().get()};
  auto mark = [&](const Node* n) { return seen.insert(n).second; };
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (auto& p : n->parents) {
      if (p->requires_grad && mark(p.get())) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const Node* a, const Node* b) { return a->id > b->id; });

  root.node()->accumulate(Matrix::Ones(1, 1));
  for (Node* n : order) {
    if (n->backward && n->grad.size() != 0) n->backward(*n);
  }
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace seqstate::numcore
