#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ponnet/model/ponnet.hpp"
#include "ponnet/placesim/dataset.hpp"

namespace ponnet::harness {

/// Load failure; the message starts with "record <id>:" when a record is at fault.
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One decoded and preprocessed manifest entry.
struct Sample {
  sim::SampleRecord record;
  std::vector<float> rgb;    // [3, side, side] planar, in [-1, 1]
  std::vector<float> depth;  // [3, side, side] colorized normals, in [-1, 1]
  std::array<float, 4> x_h{};
};

struct LoadOptions {
  int side = 32;
  bool median_filter = false;  // on depth before colorization
};

struct Dataset {
  std::filesystem::path root;
  int side = 0;
  std::vector<Sample> samples;
  sim::LabelStatistics stats;  // recomputed from the records

  /// Indices of the split, in manifest order.
  std::vector<std::size_t> split(sim::Split s) const;
  /// True when every record carries AO/TO/OO/OD labels.
  bool has_type_labels() const;
};

/// Reads <dir>/manifest.jsonl (or the manifest file itself), decodes every
/// image and applies ROI crop/resize and depth colorization. Never drops a
/// record: any missing file, corrupt image, bad label or label set whose Any
/// entry disagrees with its per-type entries fails the load.
Dataset load_dataset(const std::filesystem::path& manifest, const LoadOptions& options = {});

/// Reads only the records (no images).
std::vector<sim::SampleRecord> read_manifest(const std::filesystem::path& manifest);

/// Label set of one head layout: heads = 1 -> Any; heads = 5 -> Any, AO, TO, OO, OD.
model::HeadLabels head_labels(const Dataset& data, const std::vector<std::size_t>& indices, int heads);

template <typename T>
model::Batch<T> make_batch(const Dataset& data, const std::vector<std::size_t>& indices);

/// Planar [3, side, side] in [-1, 1] from an interleaved 8-bit RGB image.
std::vector<float> planar_input(const RgbImage& image);

}  // namespace ponnet::harness
