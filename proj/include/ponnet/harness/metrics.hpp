#pragma once

#include <array>
#include <string>
#include <vector>

#include "json.hpp"
#include "ponnet/harness/dataset.hpp"

namespace ponnet::harness {

inline constexpr int kMetricsSchemaVersion = 1;

/// cells[true][predicted], index 0 = DC, 1 = NDC.
struct Confusion {
  std::array<std::array<std::size_t, 2>, 2> cells{};

  void add(int truth, int predicted) { ++cells[truth][predicted]; }
  std::size_t total() const;
  double accuracy() const;  // trace / total, 0 for an empty matrix
  nlohmann::json to_json() const;
  bool operator==(const Confusion&) const = default;
};

struct HeadMetrics {
  Confusion total;
  bool has_rgb = false, has_depth = false;
  Confusion rgb;    // RGB (or early-fused) attention branch
  Confusion depth;  // depth attention branch
  bool operator==(const HeadMetrics&) const = default;
};

struct Metrics {
  std::vector<HeadMetrics> heads;  // 1, or 5 in collision-type order Any, AO, TO, OO, OD
  std::size_t samples = 0;

  double accuracy(std::size_t head = 0) const { return heads.at(head).total.accuracy(); }
  nlohmann::json to_json() const;
  bool operator==(const Metrics&) const = default;
};

/// Eval-mode forward over `indices` in fixed chunks. `threads` > 1 spreads
/// chunks over workers; results are identical for any thread count.
template <typename T>
Metrics evaluate(model::PonNet<T>& net, const Dataset& data, const std::vector<std::size_t>& indices,
                 unsigned threads = 1);

/// Confusion-matrix table: rows true DC / NDC, column groups Total, RGB Att.,
/// Depth Att. (absent branches print "-").
std::string confusion_table(const Metrics& m, std::size_t head = 0);

/// Fixed-point formatting shared by the text reports.
std::string fixed(double v, int digits);

}  // namespace ponnet::harness
