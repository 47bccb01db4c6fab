#include "ponnet/gradcore/adam.hpp"

#include <cmath>
#include <string>

namespace ponnet::grad {

template <typename T>
void Adam<T>::step(std::vector<Tensor<T>>& params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.size(), T{0});
      v_.emplace_back(p.size(), T{0});
    }
  }
  if (m_.size() != params.size()) throw ShapeError("adam: parameter list changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (m_[i].size() != params[i].size()) throw ShapeError("adam: moment/parameter shape mismatch");
    for (const T gi : params[i].grad()) {
      if (!std::isfinite(gi)) {
        throw NonFiniteGradient("adam: non-finite gradient in parameter #" + std::to_string(i));
      }
    }
  }

  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto grad = params[i].grad();
    if (grad.empty()) continue;
    auto value = params[i].mutable_values();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double gj = grad[j];
      const double mj = b1 * m[j] + (1.0 - b1) * gj;
      const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double m_hat = mj / c1;
      const double v_hat = vj / c2;
      value[j] = static_cast<T>(value[j] - config_.learning_rate * m_hat /
                                               (std::sqrt(v_hat) + config_.epsilon));
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace ponnet::grad
