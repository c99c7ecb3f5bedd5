#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace htc {

/// Dense row-major double tensor with reverse-mode autodiff.
///
/// A Tensor is a cheap handle onto a graph node; ops in ops.hpp build fresh
/// nodes and record backward closures on a tape. backward() on a scalar
/// topologically sorts the reachable graph and accumulates gradients into
/// every requires_grad leaf. Gradients accumulate across calls until
/// zero_grad().
class Tensor {
 public:
  struct Node {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // sized lazily, only when requires_grad
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Owned by the node; captures raw Node* (parents stay alive via
    // `parents`, self outlives its own closure), so no ownership cycles.
    std::function<void()> backward;

    std::size_t size() const { return data.size(); }
    void ensure_grad() {
      if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
  };

  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::size_t size() const { return node_->data.size(); }

  const std::vector<double>& data() const { return node_->data; }
  /// Direct mutation is for leaves only (optimizer steps, finite-difference
  /// probes); mutating an interior node invalidates recorded closures.
  std::vector<double>& data_mut() { return node_->data; }

  bool requires_grad() const { return node_->requires_grad; }
  const std::vector<double>& grad() const;
  void zero_grad();

  /// Value of a scalar (size-1) tensor.
  double value() const;

  /// Reverse-mode sweep from a scalar; throws on non-scalar loss.
  void backward() const;

  std::shared_ptr<Node> node() const { return node_; }
  static Tensor wrap(std::shared_ptr<Node> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

  /// Fresh node with given shape/flag, no parents. Helper for op authors.
  static Tensor make_node(std::vector<int> shape, bool requires_grad);

 private:
  std::shared_ptr<Node> node_;
};

std::string shape_str(const std::vector<int>& shape);
std::size_t shape_numel(const std::vector<int>& shape);

}  // namespace htc
