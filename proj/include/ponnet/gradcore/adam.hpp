#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ponnet/gradcore/tensor.hpp"

namespace ponnet::grad {

/// Defaults follow the published training table verbatim, including the
/// unusual beta1 > beta2 ordering. Both betas are configurable.
struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.99;
  double beta2 = 0.9;
  double epsilon = 1e-8;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Adam with bias correction. Moments are bound to the parameter list given
/// on the first step; later steps must pass the same list in the same order.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// Applies one update from the parameters' accumulated gradients. Throws
  /// NonFiniteGradient (leaving every parameter untouched) if any gradient
  /// entry is NaN or infinite.
  void step(std::vector<Tensor<T>>& params);

  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }

 private:
  AdamConfig config_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace ponnet::grad
