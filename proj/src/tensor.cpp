#include "dspc/tensor.hpp"

#include <unordered_set>
#include <utility>

namespace dspc {

int64_t numel_of(const Shape& s) {
  int64_t n = 1;
  for (int e : s) {
    if (e < 0) throw ShapeError("negative extent in shape " + shape_str(s));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  auto n = std::make_shared<detail::Node>();
  int64_t count = numel_of(shape);
  n->shape = std::move(shape);
  n->value.assign(static_cast<size_t>(count), v);
  n->requires_grad = requires_grad;
  return from_node(std::move(n));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  if (numel_of(shape) != static_cast<int64_t>(data.size())) {
    throw ShapeError("from_data: " + std::to_string(data.size()) +
                     " values do not fill shape " + shape_str(shape));
  }
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return from_node(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from_data({}, {v}, requires_grad);
}

const std::vector<double>& Tensor::grad() const {
  if (!node_->requires_grad) {
    throw GraphError("grad requested on a tensor without requires_grad");
  }
  node_->ensure_grad();
  return node_->grad;
}

double Tensor::value() const {
  if (numel() != 1) {
    throw GraphError("value() requires a scalar, got shape " +
                     shape_str(shape()));
  }
  return node_->value[0];
}

double Tensor::at(std::initializer_list<int> idx) const {
  const Shape& s = node_->shape;
  if (idx.size() != s.size()) {
    throw ShapeError("at(): rank mismatch for shape " + shape_str(s));
  }
  int64_t flat = 0;
  size_t d = 0;
  for (int i : idx) {
    if (i < 0 || i >= s[d]) throw ShapeError("at(): index out of range");
    flat = flat * s[d] + i;
    ++d;
  }
  return node_->value[static_cast<size_t>(flat)];
}

Tensor Tensor::detach(bool requires_grad) const {
  return from_data(node_->shape, node_->value, requires_grad);
}

void Tensor::zero_grad() {
  if (node_->requires_grad) node_->grad.assign(node_->value.size(), 0.0);
  node_->backward_done = false;
}

Tensor Tensor::from_node(std::shared_ptr<detail::Node> n) {
  Tensor t;
  t.node_ = std::move(n);
  return t;
}

Tensor make_op(const char* name, Shape shape, std::vector<double> value,
               std::vector<Tensor> parents,
               std::function<void(detail::Node*)> backprop) {
  if (numel_of(shape) != static_cast<int64_t>(value.size())) {
    throw ShapeError(std::string(name) + ": op produced " +
                     std::to_string(value.size()) +
                     " values for shape " + shape_str(shape));
  }
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = name;
  bool rg = false;
  for (const Tensor& p : parents) rg = rg || p.requires_grad();
  n->requires_grad = rg;
  if (rg) {
    n->parents.reserve(parents.size());
    for (Tensor& p : parents) n->parents.push_back(p.node_ptr());
    n->backprop = std::move(backprop);
  }
  // Without a differentiable parent the node is a constant; keeping the
  // record would only pin memory.
  return Tensor::from_node(std::move(n));
}

Graph::Graph(const Tensor& root) : root_(root.node_ptr()) {
  if (!root.defined()) throw GraphError("Graph on an undefined tensor");
  // Iterative post-order DFS: parents are appended before any node that
  // consumes them, so order_ ends with the root.
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, size_t>> stack;
  stack.emplace_back(root_.get(), 0);
  seen.insert(root_.get());
  while (!stack.empty()) {
    auto& [node, next_parent] = stack.back();
    if (next_parent < node->parents.size()) {
      detail::Node* p = node->parents[next_parent].get();
      ++next_parent;
      if (seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order_.push_back(node);
      stack.pop_back();
    }
  }
}

void Graph::backward() {
  detail::Node* root = root_.get();
  if (root->numel() != 1) {
    throw GraphError("backward: loss must be scalar, got shape " +
                     shape_str(root->shape));
  }
  if (root->backward_done) {
    throw GraphError(
        "backward already ran for this loss; rebuild the forward pass first");
  }
  root->backward_done = true;
  if (!root->requires_grad) return;  // nothing reachable wants gradients

  // Interior grads are scratch for this single sweep and start at zero.
  // Leaves keep their buffers so gradients accumulate across sweeps.
  for (detail::Node* n : order_) {
    if (!n->requires_grad) continue;
    if (n->parents.empty()) {
      n->ensure_grad();
    } else {
      n->grad.assign(n->value.size(), 0.0);
    }
  }
  root->grad[0] += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    detail::Node* n = *it;
    if (n->requires_grad && n->backprop) n->backprop(n);
  }
  // Interior scratch buffers are no longer needed.
  for (detail::Node* n : order_) {
    if (n->requires_grad && !n->parents.empty() && n != root) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

void backward(const Tensor& loss) { Graph(loss).backward(); }

}  // namespace dspc
