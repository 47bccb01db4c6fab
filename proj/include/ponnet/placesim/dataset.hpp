#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "ponnet/placesim/physics.hpp"
#include "ponnet/placesim/render.hpp"

namespace ponnet::sim {

struct SceneSample {
  Scene scene;
  Rendering images;
  HeuristicInput x_h;
  std::vector<CollisionEvent> events;
  Labels labels;
};

SceneSample make_sample(std::uint64_t seed, const GenConfig& config, const SceneOptions& options = {});

enum class Split { train = 0, val = 1, test = 2 };
const char* split_name(Split split);
Split parse_split(const std::string& text);

struct SplitRatios {
  double train = 10.0;
  double val = 1.0;
  double test = 1.0;
};

/// val = round(n * r_val), test = round(n * r_test), train takes the rest
/// (ratios are normalized first).
std::array<std::size_t, 3> split_counts(std::size_t n, const SplitRatios& ratios);

/// One manifest line.
struct SampleRecord {
  std::string id;
  Split split = Split::train;
  std::string rgb_path;    // relative to the manifest directory
  std::string depth_path;
  HeuristicInput x_h;
  Labels labels;
  bool has_type_labels = true;  // false: only Any is meaningful
  std::uint64_t seed = 0;
  int location = 0;
  double surface_height = 0.0;
  SurfaceRect roi;
  depth::Roi roi_pixels;
  depth::CameraIntrinsics intrinsics;
  Vec3 camera_eye{};
  std::array<Vec3, 3> camera_rotation{};
  std::vector<CollisionEvent> events;
};

nlohmann::json record_to_json(const SampleRecord& r);
/// Throws std::runtime_error naming the record id on malformed input.
SampleRecord record_from_json(const nlohmann::json& j);

/// Label counts: [label kind][split][DC=0 / NDC=1].
struct LabelStatistics {
  std::array<std::array<std::array<std::size_t, 2>, 3>, kLabelKinds> counts{};

  static LabelStatistics of(const std::vector<SampleRecord>& records);
  std::size_t split_total(Split s) const;
  std::size_t total() const;
  /// Aligned text in the layout of the dataset statistics table (Any labels).
  std::string table() const;
  nlohmann::json to_json() const;
  bool operator==(const LabelStatistics&) const = default;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<SampleRecord> records;
  LabelStatistics stats;
};

struct DatasetOptions {
  std::size_t n = 0;
  std::uint64_t master_seed = 0;
  SplitRatios ratios;
  unsigned threads = 1;
};

/// Per-sample seed derived from the master seed and the index.
std::uint64_t sample_seed(std::uint64_t master_seed, std::size_t index);

/// Writes rgb/*.ppm, depth/*.pgm, manifest.jsonl, stats.txt, stats.json and
/// gen_config.json under out_dir. I/O errors carry the offending path.
DatasetManifest generate_dataset(const DatasetOptions& options, const GenConfig& config,
                                 const std::filesystem::path& out_dir);

/// Number of worker threads from PONNET_THREADS (default 1).
unsigned env_threads();

}  // namespace ponnet::sim
