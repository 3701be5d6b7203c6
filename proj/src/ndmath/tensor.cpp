#include "closp/ndmath/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "closp/error.hpp"

namespace closp::nd {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::vector<double>& Node::grad_buffer() {
  if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  return grad;
}

namespace {

thread_local bool t_grad_enabled = true;

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have rank >= 1");
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " +
                                     to_string(shape));
  }
}

}  // namespace

NoGradGuard::NoGradGuard() : saved_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = saved_; }
bool grad_enabled() noexcept { return t_grad_enabled; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  validate_shape(shape);
  auto node = std::make_shared<Node>();
  node->values.assign(numel(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  validate_shape(shape);
  if (numel(shape) != values.size()) {
    throw DimensionError("shape " + to_string(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         to_string(node_->shape));
  }
  return node_->shape[axis];
}

double Tensor::item() const {
  if (node_->values.size() != 1) {
    throw ContractError("item() on non-scalar tensor " +
                        to_string(node_->shape));
  }
  return node_->values[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  return node_->values[row * node_->shape.back() + col];
}

Tensor Tensor::detach() const {
  return Tensor::from(node_->shape, node_->values, false);
}

Tensor Tensor::clone() const {
  return Tensor::from(node_->shape, node_->values, node_->requires_grad);
}

ComputeGraph ComputeGraph::trace(const Tensor& root) {
  ComputeGraph g;
  std::unordered_set<const Node*> seen;
  // Iterative post-order DFS.
  std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      const auto& child = node->inputs[next++];
      if (seen.insert(child.get()).second) stack.emplace_back(child, 0);
      continue;
    }
    if (node->inputs.empty() && node->requires_grad) g.leaves_.push_back(node);
    g.order_.push_back(node.get());
    stack.pop_back();
  }
  return g;
}

std::vector<Tensor> ComputeGraph::leaves() const {
  std::vector<Tensor> out;
  out.reserve(leaves_.size());
  for (const auto& n : leaves_) out.emplace_back(n);
  return out;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward() requires a scalar loss");
  }
  const auto graph = ComputeGraph::trace(loss);
  for (Node* n : graph.order()) {
    if (n->requires_grad) n->grad.assign(n->values.size(), 0.0);
  }
  if (!loss.requires_grad()) return;
  loss.node()->grad[0] = 1.0;
  const auto& order = graph.order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->requires_grad && n->backward_fn) n->backward_fn(*n);
  }
}

void backward(const Tensor& loss, std::span<Tensor> params) {
  for (auto& p : params) p.node()->grad.assign(p.size(), 0.0);
  backward(loss);
}

}  // namespace closp::nd
