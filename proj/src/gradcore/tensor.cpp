#include "ponnet/gradcore/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

namespace ponnet::grad {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (const auto extent : shape) n *= extent;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ']';
  return out.str();
}

std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

namespace {

void validate_shape(const Shape& shape, std::size_t count) {
  if (shape.empty()) throw ShapeError("tensor shape must have rank >= 1");
  for (const auto extent : shape) {
    if (extent == 0) throw ShapeError("zero extent in shape " + shape_str(shape));
  }
  if (shape_size(shape) != count) {
    throw ShapeError("shape " + shape_str(shape) + " needs " + std::to_string(shape_size(shape)) +
                     " values, got " + std::to_string(count));
  }
}

template <typename T>
std::shared_ptr<Node<T>> make_leaf(Shape shape, std::vector<T> values, bool requires_grad) {
  validate_shape(shape, values.size());
  auto node = std::make_shared<Node<T>>();
  node->id = next_node_id();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  if (requires_grad) node->ensure_grad();
  return node;
}

}  // namespace

template <typename T>
Tensor<T> Tensor<T>::constant(Shape shape, std::vector<T> values) {
  return Tensor(make_leaf(std::move(shape), std::move(values), false));
}

template <typename T>
Tensor<T> Tensor<T>::constant(Shape shape, T fill) {
  const auto n = shape_size(shape);
  return constant(std::move(shape), std::vector<T>(n, fill));
}

template <typename T>
Tensor<T> Tensor<T>::parameter(Shape shape, std::vector<T> values) {
  return Tensor(make_leaf(std::move(shape), std::move(values), true));
}

template <typename T>
std::span<T> Tensor<T>::mutable_values() {
  if (node_->backward) throw std::logic_error("operation outputs are immutable");
  return node_->value;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T{0});
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
  return node_->value[0];
}

template <typename T>
Tensor<T> Graph<T>::record(const char* op, Shape shape, std::vector<T> values,
                           std::vector<Tensor<T>> inputs,
                           typename Node<T>::BackwardFn backward) {
  validate_shape(shape, values.size());
  auto node = std::make_shared<Node<T>>();
  node->id = next_node_id();
  node->op = op;
  node->shape = std::move(shape);
  node->value = std::move(values);
  for (const auto& in : inputs) {
    node->requires_grad = node->requires_grad || in.requires_grad();
  }
  if (node->requires_grad) {
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node_ptr());
    node->backward = std::move(backward);
  }
  tape_.push_back(node);
  return Tensor<T>(node);
}

template <typename T>
void Graph<T>::backward(const Tensor<T>& loss) {
  if (differentiated_) {
    throw std::logic_error("backward() already ran on this graph; build a new graph");
  }
  if (loss.size() != 1) throw ShapeError("backward() needs a scalar loss");
  differentiated_ = true;
  if (!loss.requires_grad()) return;
  auto& root = loss.node();
  root.ensure_grad();
  root.grad[0] += T{1};
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
    Node<T>& node = **it;
    if (node.grad.empty() || !node.backward) continue;
    node.backward(node);
  }
}

template <typename T>
void Graph<T>::mix_kink(std::uint64_t bits) {
  kinks_ ^= bits;
  kinks_ *= 1099511628211ull;
}

template class Tensor<float>;
template class Tensor<double>;
template class Graph<float>;
template class Graph<double>;

}  // namespace ponnet::grad
