#include "ponnet/gradcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ponnet::grad {
namespace {

struct Evaluation {
  double loss;
  std::uint64_t kinks;
};

Evaluation evaluate(const LossBuilder& build) {
  Graph<double> g;
  g.set_track_kinks(true);
  const auto loss = build(g);
  return {loss.item(), g.kink_signature()};
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& build, std::vector<Tensor<double>> inputs,
                           double step, double floor) {
  for (auto& in : inputs) {
    if (!in.requires_grad()) throw ShapeError("grad_check: inputs must require gradients");
    in.zero_grad();
  }
  std::uint64_t base_kinks = 0;
  {
    Graph<double> g;
    g.set_track_kinks(true);
    const auto loss = build(g);
    base_kinks = g.kink_signature();
    g.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (const auto& in : inputs) analytic.emplace_back(in.grad().begin(), in.grad().end());

  GradCheckReport report;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      Evaluation at[4];
      const double offsets[4] = {2.0, 1.0, -1.0, -2.0};
      bool kink = false;
      for (int j = 0; j < 4; ++j) {
        values[i] = saved + offsets[j] * step;
        at[j] = evaluate(build);
        kink = kink || at[j].kinks != base_kinks;
      }
      values[i] = saved;
      if (kink) {
        ++report.skipped_kinks;
        continue;
      }
      const double numeric = (-at[0].loss + 8.0 * at[1].loss - 8.0 * at[2].loss + at[3].loss) / (12.0 * step);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.checked;
      if (rel > report.max_rel_error || report.worst.empty()) {
        report.max_rel_error = std::max(report.max_rel_error, rel);
        if (rel >= report.max_rel_error) {
          std::ostringstream w;
          w.precision(10);
          w << '#' << k << '[' << i << "]: " << a << " vs " << numeric;
          report.worst = w.str();
        }
      }
    }
  }
  for (auto& in : inputs) in.zero_grad();
  return report;
}

}  // namespace ponnet::grad
