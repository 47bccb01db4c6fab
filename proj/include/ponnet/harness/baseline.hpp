#pragma once

#include "ponnet/harness/metrics.hpp"
#include "ponnet/planedet/planedet.hpp"

namespace ponnet::harness {

/// Baseline query from the record's camera, ROI, target footprint and
/// surface height. width/height are the depth image size.
plane::PlacementQuery query_for(const sim::SampleRecord& record, int width, int height);

/// Plane-detection predictions for each index (kDC / kNDC), from the stored
/// full-resolution depth images.
std::vector<int> baseline_predictions(const Dataset& data, const std::vector<std::size_t>& indices,
                                      unsigned threads = 1);

/// Single-head metrics of the baseline on the given samples; no branch columns.
Metrics run_baseline(const Dataset& data, const std::vector<std::size_t>& indices, unsigned threads = 1);

}  // namespace ponnet::harness
