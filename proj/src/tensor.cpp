#include "htc/tensor.hpp"

#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace htc {

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("negative dimension in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor Tensor::make_node(std::vector<int> shape, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->data.assign(shape_numel(shape), 0.0);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return wrap(std::move(node));
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return make_node(std::move(shape), requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  Tensor t = make_node(std::move(shape), requires_grad);
  for (double& v : t.node_->data) v = value;
  return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return wrap(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

const std::vector<double>& Tensor::grad() const {
  if (!node_->requires_grad) throw std::logic_error("grad() on tensor without requires_grad");
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_->requires_grad) node_->grad.assign(node_->data.size(), 0.0);
}

double Tensor::value() const {
  if (size() != 1) {
    throw std::invalid_argument("value() requires a scalar, got shape " + shape_str(shape()));
  }
  return node_->data[0];
}

void Tensor::backward() const {
  if (!node_) throw std::logic_error("backward() on empty tensor");
  if (node_->data.size() != 1) {
    throw std::invalid_argument("backward() requires a scalar loss, got shape " +
                                shape_str(node_->shape));
  }

  // Iterative post-order DFS; children end up before parents, so reverse
  // iteration visits each node after everything that consumes it.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({node_.get(), 0});
  visited.insert(node_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Node* p = f.node->parents[f.next_parent++].get();
      if (visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  // Interior gradients are per-sweep scratch; only leaves accumulate
  // across backward() calls.
  for (Node* n : order) {
    if (n->backward) n->grad.assign(n->data.size(), 0.0);
  }
  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->requires_grad && n->backward) n->backward();
  }
}

}  // namespace htc
