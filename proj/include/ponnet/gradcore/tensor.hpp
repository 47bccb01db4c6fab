#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ponnet::grad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised for any shape or argument contract violation of an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename T>
struct Node {
  using BackwardFn = std::function<void(Node&)>;

  std::uint64_t id = 0;
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until a gradient flows here
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
  const char* op = "leaf";

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T{0});
  }
};

/// Handle to a value in a computation. Copies share the same node.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor constant(Shape shape, std::vector<T> values);
  static Tensor constant(Shape shape, T fill);
  /// Leaf that accumulates gradients across graphs until zero_grad().
  static Tensor parameter(Shape shape, std::vector<T> values);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::uint64_t id() const { return node_->id; }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const T> values() const { return node_->value; }
  /// Only leaves may be mutated (inputs and parameters); op outputs are immutable.
  std::span<T> mutable_values();
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad();
  void zero_grad();

  T item() const;
  T operator[](std::size_t i) const { return node_->value[i]; }

  Node<T>& node() const { return *node_; }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Tape of operations executed during one forward pass, in execution order.
///
/// Execution order is a topological order, so walking the tape backwards
/// visits each node once after all of its consumers. A graph can be
/// differentiated once; a second backward() call throws std::logic_error.
/// Parameter gradients accumulate across graphs and are reset only by an
/// explicit zero_grad().
template <typename T>
class Graph {
 public:
  Tensor<T> record(const char* op, Shape shape, std::vector<T> values,
                   std::vector<Tensor<T>> inputs, typename Node<T>::BackwardFn backward);

  void backward(const Tensor<T>& loss);

  std::size_t size() const { return tape_.size(); }
  bool differentiated() const { return differentiated_; }

  /// Running hash of piecewise-linear branch decisions (relu masks). Two
  /// forward passes with the same signature took the same linear pieces.
  std::uint64_t kink_signature() const { return kinks_; }
  void mix_kink(std::uint64_t bits);
  void set_track_kinks(bool on) { track_kinks_ = on; }
  bool tracking_kinks() const { return track_kinks_; }

 private:
  std::vector<std::shared_ptr<Node<T>>> tape_;
  bool differentiated_ = false;
  bool track_kinks_ = false;
  std::uint64_t kinks_ = 1469598103934665603ull;
};

std::uint64_t next_node_id();

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace ponnet::grad
