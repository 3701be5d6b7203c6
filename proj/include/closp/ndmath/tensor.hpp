#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace closp::nd {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

// A node in the dynamically recorded compute graph. Leaves have no inputs;
// op results hold their inputs and a closure that pushes the node's grad
// back into them.
struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until backward() touches the node
  bool requires_grad = false;
  std::string op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  // Returns the grad buffer, zero-initialising it on first use.
  std::vector<double>& grad_buffer();
};

// Value-semantics handle onto a graph node. Copies share storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return node_->values.size(); }

  std::span<const double> values() const { return node_->values; }
  std::span<double> mutable_values() { return node_->values; }
  double item() const;
  double operator[](std::size_t i) const { return node_->values[i]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  void clear_grad() { node_->grad.clear(); }

  // Same values, no history. Used to feed constants into a new graph.
  Tensor detach() const;
  // Deep copy of values (and requires_grad flag) into a fresh leaf.
  Tensor clone() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Ordered record of the operations that produced a loss. Built by a
// depth-first walk, so every node appears after all of its inputs.
class ComputeGraph {
 public:
  static ComputeGraph trace(const Tensor& root);

  const std::vector<Node*>& order() const { return order_; }
  std::vector<Tensor> leaves() const;

 private:
  std::vector<Node*> order_;
  std::vector<std::shared_ptr<Node>> leaves_;
};

// While a guard is alive on the current thread, ops record no history and
// their results never require grad. Used for inference.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

bool grad_enabled() noexcept;

// Reverse-mode sweep from a scalar loss. Grad slots of every node reached
// are overwritten, never accumulated across calls.
void backward(const Tensor& loss);
// As above, and additionally zeroes the grad of every listed parameter, so
// parameters the loss does not depend on report a zero gradient.
void backward(const Tensor& loss, std::span<Tensor> params);

}  // namespace closp::nd
