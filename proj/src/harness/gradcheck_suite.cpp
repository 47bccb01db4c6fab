#include "ponnet/harness/gradcheck_suite.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "ponnet/common/rng.hpp"
#include "ponnet/gradcore/ops.hpp"
#include "ponnet/harness/metrics.hpp"
#include "ponnet/model/ponnet.hpp"

namespace ponnet::harness {

using grad::Graph;
using grad::Mode;
using grad::Shape;
using Tensor = grad::Tensor<double>;
using G = Graph<double>;

namespace {

std::vector<double> draw(std::size_t n, Rng& rng, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

Tensor param(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return Tensor::parameter(std::move(shape), draw(n, rng, lo, hi));
}

struct OpCase {
  std::string name;
  std::function<grad::GradCheckReport(Rng&)> run;
};

// Each case wraps the operator in a tanh and a sum so that every output
// element carries a distinct, non-constant upstream gradient.
std::vector<OpCase> operator_cases() {
  using namespace grad;
  std::vector<OpCase> cases;
  cases.push_back({"conv2d/stride1", [](Rng& r) {
    auto x = param({2, 2, 5, 5}, r), w = param({3, 2, 3, 3}, r), b = param({3}, r);
    return grad_check([&](G& g) { return sum(g, tanh(g, conv2d(g, x, w, b, 1, 1))); }, {x, w, b});
  }});
  cases.push_back({"conv2d/stride2", [](Rng& r) {
    auto x = param({2, 2, 6, 6}, r), w = param({3, 2, 3, 3}, r), b = param({3}, r);
    return grad_check([&](G& g) { return sum(g, tanh(g, conv2d(g, x, w, b, 2, 1))); }, {x, w, b});
  }});
  cases.push_back({"conv2d/1x1", [](Rng& r) {
    auto x = param({2, 3, 3, 3}, r), w = param({2, 3, 1, 1}, r), b = param({2}, r);
    return grad_check([&](G& g) { return sum(g, tanh(g, conv2d(g, x, w, b, 1, 0))); }, {x, w, b});
  }});
  cases.push_back({"dense", [](Rng& r) {
    auto x = param({3, 4}, r), w = param({4, 5}, r), b = param({5}, r);
    return grad_check([&](G& g) { return sum(g, tanh(g, dense(g, x, w, b))); }, {x, w, b});
  }});
  cases.push_back({"dense/no-bias", [](Rng& r) {
    auto x = param({3, 4}, r), w = param({4, 2}, r);
    return grad_check([&](G& g) { return sum(g, tanh(g, dense(g, x, w, Tensor{}))); }, {x, w});
  }});
  cases.push_back({"batch_norm/train", [](Rng& r) {
    auto x = param({4, 2, 3, 3}, r), gm = param({2}, r, 0.5, 1.5), bt = param({2}, r);
    BatchNormState<double> st(2);
    return grad_check([&](G& g) { return sum(g, tanh(g, batch_norm(g, x, gm, bt, st, Mode::train))); },
                      {x, gm, bt});
  }});
  cases.push_back({"batch_norm/eval", [](Rng& r) {
    auto x = param({3, 2, 2, 2}, r), gm = param({2}, r, 0.5, 1.5), bt = param({2}, r);
    BatchNormState<double> st(2);
    st.running_mean = draw(2, r, -0.5, 0.5);
    st.running_var = draw(2, r, 0.5, 2.0);
    return grad_check([&](G& g) { return sum(g, tanh(g, batch_norm(g, x, gm, bt, st, Mode::eval))); },
                      {x, gm, bt});
  }});
  cases.push_back({"batch_norm/features", [](Rng& r) {
    auto x = param({5, 3}, r), gm = param({3}, r, 0.5, 1.5), bt = param({3}, r);
    BatchNormState<double> st(3);
    return grad_check([&](G& g) { return sum(g, tanh(g, batch_norm(g, x, gm, bt, st, Mode::train))); },
                      {x, gm, bt});
  }});
  cases.push_back({"relu", [](Rng& r) {
    auto x = param({4, 6}, r);
    return grad_check([&](G& g) { return sum(g, tanh(g, relu(g, x))); }, {x});
  }});
  cases.push_back({"sigmoid", [](Rng& r) {
    auto x = param({4, 6}, r, -4.0, 4.0);
    return grad_check([&](G& g) { return sum(g, tanh(g, sigmoid(g, x))); }, {x});
  }});
  cases.push_back({"tanh", [](Rng& r) {
    auto x = param({4, 6}, r, -3.0, 3.0);
    return grad_check([&](G& g) { return sum(g, tanh(g, tanh(g, x))); }, {x});
  }});
  cases.push_back({"add+scale", [](Rng& r) {
    auto a = param({3, 4}, r), b = param({3, 4}, r);
    return grad_check([&](G& g) { return sum(g, tanh(g, scale(g, add(g, a, b), 0.7))); }, {a, b});
  }});
  cases.push_back({"attention_modulate", [](Rng& r) {
    auto f = param({2, 3, 3, 3}, r), a = param({2, 1, 3, 3}, r, 0.0, 1.0);
    return grad_check([&](G& g) { return sum(g, tanh(g, attention_modulate(g, f, a))); }, {f, a});
  }});
  cases.push_back({"global_avg_pool", [](Rng& r) {
    auto x = param({2, 3, 4, 4}, r, -3.0, 3.0);
    return grad_check([&](G& g) { return sum(g, tanh(g, global_avg_pool(g, x))); }, {x});
  }});
  cases.push_back({"concat+slice_features", [](Rng& r) {
    auto a = param({3, 2}, r), b = param({3, 4}, r);
    return grad_check([&](G& g) { return sum(g, tanh(g, slice_features(g, concat_features(g, {a, b}), 1, 5))); },
                      {a, b});
  }});
  cases.push_back({"slice_channels", [](Rng& r) {
    auto x = param({2, 4, 2, 2}, r);
    return grad_check([&](G& g) { return sum(g, tanh(g, slice_channels(g, x, 1, 3))); }, {x});
  }});
  cases.push_back({"softmax_rows", [](Rng& r) {
    auto x = param({3, 4}, r, -2.0, 2.0), y = param({3, 4}, r);
    return grad_check([&](G& g) { return sum(g, tanh(g, add(g, softmax_rows(g, x), y))); }, {x, y});
  }});
  cases.push_back({"convex_combine", [](Rng& r) {
    auto alpha = param({3, 2}, r), p = param({3, 4}, r), q = param({3, 4}, r);
    return grad_check([&](G& g) { return sum(g, tanh(g, convex_combine(g, softmax_rows(g, alpha), {p, q}))); },
                      {alpha, p, q});
  }});
  cases.push_back({"softmax_cross_entropy", [](Rng& r) {
    auto z = param({4, 2}, r, -3.0, 3.0);
    std::vector<int> labels;
    for (int i = 0; i < 4; ++i) labels.push_back(r.bernoulli(0.5) ? 1 : 0);
    const auto oh = one_hot<double>(labels, 2);
    return grad_check(
        [&](G& g) {
          return weighted_sum(g, {softmax_cross_entropy(g, z, oh, Reduction::sum),
                                  softmax_cross_entropy(g, z, oh, Reduction::mean)},
                              {0.6, 1.3});
        },
        {z});
  }});
  return cases;
}

struct ModelCase {
  std::string name;
  model::ModelConfig config;
  bool all_seeds;
};

std::vector<ModelCase> model_cases() {
  using model::InputMode;
  using model::Variant;
  std::vector<ModelCase> out;
  auto micro = [](Variant v, InputMode m, int heads) {
    auto c = model::ModelConfig::micro();
    c.variant = v;
    c.input_mode = m;
    c.heads = heads;
    return c;
  };
  out.push_back({"model/micro-full", micro(Variant::full, InputMode::rgbd, 1), true});
  out.push_back({"model/micro-full-5head", micro(Variant::full, InputMode::rgbd, 5), false});
  out.push_back({"model/micro-type4", micro(Variant::type4, InputMode::rgbd, 1), false});
  out.push_back({"model/micro-type3-RGBD", micro(Variant::type3, InputMode::rgbd, 1), false});
  out.push_back({"model/micro-type3-D", micro(Variant::type3, InputMode::depth, 1), false});
  out.push_back({"model/micro-type1-RGB", micro(Variant::type1, InputMode::rgb, 1), false});
  out.push_back({"model/micro-type2-RGBD", micro(Variant::type2, InputMode::rgbd, 1), false});
  return out;
}

grad::GradCheckReport check_model(model::ModelConfig config, std::uint64_t seed) {
  config.seed = seed;
  model::PonNet<double> net(config);
  Rng rng(mix_seed(seed, hash_name("gradcheck/batch")));
  const std::size_t n = 1, side = static_cast<std::size_t>(config.input_side);
  model::Batch<double> batch{Tensor::constant({n, 3, side, side}, draw(3 * side * side, rng, -1.0, 1.0)),
                             Tensor::constant({n, 3, side, side}, draw(3 * side * side, rng, -1.0, 1.0)),
                             Tensor::constant({n, 4}, draw(4, rng, 0.05, 1.5))};
  model::HeadLabels labels(static_cast<std::size_t>(config.heads));
  for (auto& l : labels) l.push_back(rng.bernoulli(0.5) ? model::kNDC : model::kDC);
  return grad::grad_check(
      [&](G& g) {
        const auto r = net.forward(g, batch, Mode::train);
        return net.total_loss(g, r, labels, grad::Reduction::sum);
      },
      net.parameters());
}

}  // namespace

bool GradCheckSuiteResult::passed() const {
  return !cases.empty() && std::all_of(cases.begin(), cases.end(), [](const auto& c) { return c.passed; });
}

double GradCheckSuiteResult::max_rel_error() const {
  double worst = 0.0;
  for (const auto& c : cases) worst = std::max(worst, c.report.max_rel_error);
  return worst;
}

std::string GradCheckSuiteResult::summary() const {
  struct Agg {
    double worst = 0.0;
    int runs = 0, failed = 0;
    std::size_t checked = 0, skipped = 0;
  };
  std::vector<std::string> order;
  std::map<std::string, Agg> agg;
  for (const auto& c : cases) {
    if (!agg.count(c.name)) order.push_back(c.name);
    auto& a = agg[c.name];
    a.worst = std::max(a.worst, c.report.max_rel_error);
    ++a.runs;
    a.failed += c.passed ? 0 : 1;
    a.checked += c.report.checked;
    a.skipped += c.report.skipped_kinks;
  }
  std::ostringstream os;
  for (const auto& name : order) {
    const auto& a = agg[name];
    char line[200];
    std::snprintf(line, sizeof line, "%-4s %-26s seeds %2d  max rel err %.3e  checked %zu  kink-skipped %zu\n",
                  a.failed ? "FAIL" : "ok", name.c_str(), a.runs, a.worst, a.checked, a.skipped);
    os << line;
  }
  return os.str();
}

nlohmann::json GradCheckSuiteResult::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : cases)
    arr.push_back({{"name", c.name},
                   {"seed", c.seed},
                   {"max_rel_error", c.report.max_rel_error},
                   {"checked", c.report.checked},
                   {"skipped_kinks", c.report.skipped_kinks},
                   {"worst", c.report.worst},
                   {"passed", c.passed}});
  return {{"schema_version", kMetricsSchemaVersion},
          {"threshold", threshold},
          {"passed", passed()},
          {"max_rel_error", max_rel_error()},
          {"cases", arr}};
}

GradCheckSuiteResult run_gradcheck_suite(const GradCheckSuiteOptions& options,
                                         const std::function<void(const GradCheckCase&)>& on_case) {
  if (options.seeds < 1) throw std::invalid_argument("gradcheck needs at least one seed");
  GradCheckSuiteResult result;
  result.threshold = options.threshold;
  auto record = [&](std::string name, std::uint64_t seed, grad::GradCheckReport report) {
    GradCheckCase c{std::move(name), seed, std::move(report), false};
    c.passed = c.report.checked > 0 && c.report.max_rel_error < options.threshold;
    if (on_case) on_case(c);
    result.cases.push_back(std::move(c));
  };
  for (const auto& op : operator_cases()) {
    for (int s = 0; s < options.seeds; ++s) {
      const std::uint64_t seed = options.first_seed + static_cast<std::uint64_t>(s);
      Rng rng(mix_seed(seed, hash_name(op.name)));
      record(op.name, seed, op.run(rng));
    }
  }
  if (options.include_model) {
    for (const auto& mc : model_cases()) {
      const int seeds = mc.all_seeds ? options.seeds : 1;
      for (int s = 0; s < seeds; ++s) {
        const std::uint64_t seed = options.first_seed + static_cast<std::uint64_t>(s);
        record(mc.name, seed, check_model(mc.config, seed));
      }
    }
  }
  return result;
}

}  // namespace ponnet::harness
