#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ponnet/gradcore/gradcheck.hpp"

namespace ponnet::harness {

struct GradCheckCase {
  std::string name;  // "conv2d/stride2", "model/micro-full", ...
  std::uint64_t seed = 0;
  grad::GradCheckReport report;
  bool passed = false;
};

struct GradCheckSuiteOptions {
  int seeds = 10;
  std::uint64_t first_seed = 1;
  double threshold = 1e-4;  // max relative error
  bool include_model = true;
};

struct GradCheckSuiteResult {
  std::vector<GradCheckCase> cases;
  double threshold = 0.0;

  bool passed() const;
  double max_rel_error() const;
  std::string summary() const;  // one line per case name, worst over seeds
  nlohmann::json to_json() const;
};

/// Finite-difference checks of every differentiable operator in isolation
/// and of the micro-config network (all variants, single and five heads),
/// in double precision, each over `seeds` seeds (the extra variants use one).
GradCheckSuiteResult run_gradcheck_suite(const GradCheckSuiteOptions& options = {},
                                         const std::function<void(const GradCheckCase&)>& on_case = {});

}  // namespace ponnet::harness
