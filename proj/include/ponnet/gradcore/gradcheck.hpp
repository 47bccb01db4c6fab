#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ponnet/gradcore/tensor.hpp"

namespace ponnet::grad {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  /// Elements whose stencil changed a relu decision; the difference
  /// straddles a kink there and is not a valid reference.
  std::size_t skipped_kinks = 0;
  std::string worst;  // "<input #>[<element>]: analytic vs numeric"
};

using LossBuilder = std::function<Tensor<double>(Graph<double>&)>;

/// Compares backward() against the five-point central difference
///   (-f(x+2h) + 8 f(x+h) - 8 f(x-h) + f(x-2h)) / 12h
/// for every element of every input. Elements whose stencil crosses a relu
/// kink are skipped and counted. `inputs` must be leaves that require gradients and that
/// `build` reads. The relative error of one element is
///   |analytic - numeric| / max(|analytic|, |numeric|, floor).
GradCheckReport grad_check(const LossBuilder& build, std::vector<Tensor<double>> inputs,
                           double step = 1e-4, double floor = 1e-6);

}  // namespace ponnet::grad
