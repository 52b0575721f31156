#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "dspc/errors.hpp"

namespace dspc {

// Extents of a dense row-major tensor. An empty shape is a scalar.
using Shape = std::vector<int>;

int64_t numel_of(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

// One value in the define-by-run graph. Nodes are created by ops during the
// forward pass and own their parents, so a whole graph is released when the
// last handle to its sink goes away.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized only while gradients are needed
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node*)> backprop;  // reads this->grad, accumulates into parents
  const char* op = "leaf";
  bool requires_grad = false;
  bool backward_done = false;

  int64_t numel() const { return static_cast<int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

// Value-semantics handle to a graph node. Copying a Tensor aliases the same
// storage; detach() makes an independent, graph-free copy of the values.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t numel() const { return node_->numel(); }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  bool requires_grad() const { return node_->requires_grad; }
  const char* op_name() const { return node_->op; }

  const std::vector<double>& data() const { return node_->value; }
  std::vector<double>& data() { return node_->value; }
  const std::vector<double>& grad() const;

  // Scalar read; throws unless numel() == 1.
  double value() const;
  double at(std::initializer_list<int> idx) const;

  Tensor detach(bool requires_grad = false) const;
  void zero_grad();

  detail::Node* node() const { return node_.get(); }
  std::shared_ptr<detail::Node> node_ptr() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node> n);

 private:
  std::shared_ptr<detail::Node> node_;
};

// Topologically ordered record of the operations reachable from one root.
// backward() visits the record in reverse order exactly once, leaving a fully
// accumulated gradient on every reachable requires_grad tensor.
class Graph {
 public:
  explicit Graph(const Tensor& root);

  // Root must be scalar. Throws GraphError when called a second time for the
  // same root without rebuilding the forward pass.
  void backward();

  size_t size() const { return order_.size(); }
  const std::vector<detail::Node*>& order() const { return order_; }

 private:
  std::shared_ptr<detail::Node> root_;
  std::vector<detail::Node*> order_;  // parents precede children; root last
};

// Convenience wrapper: Graph(loss).backward().
void backward(const Tensor& loss);

// Factory for differentiable ops. `backprop` receives the new node with its
// grad populated and must accumulate into the parents' grads. Ops defined in
// other modules (for example the spectral pairwise loss) use this hook too.
// When no parent needs gradients the record is dropped and the result is a
// plain constant.
Tensor make_op(const char* name, Shape shape, std::vector<double> value,
               std::vector<Tensor> parents,
               std::function<void(detail::Node*)> backprop);

}  // namespace dspc
