#include "ponnet/harness/dataset.hpp"

#include <fstream>

#include "ponnet/depthproc/depthproc.hpp"

namespace ponnet::harness {

namespace fs = std::filesystem;

bool Dataset::has_type_labels() const {
  for (const auto& s : samples)
    if (!s.record.has_type_labels) return false;
  return true;
}

std::vector<std::size_t> Dataset::split(sim::Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].record.split == s) out.push_back(i);
  return out;
}

namespace {

fs::path manifest_path(const fs::path& p) { return fs::is_directory(p) ? p / "manifest.jsonl" : p; }

[[noreturn]] void fail_record(const std::string& id, const std::string& what) {
  throw DatasetError("record " + id + ": " + what);
}

}  // namespace

std::vector<sim::SampleRecord> read_manifest(const fs::path& manifest) {
  const fs::path path = manifest_path(manifest);
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open manifest " + path.string());
  std::vector<sim::SampleRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DatasetError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    try {
      records.push_back(sim::record_from_json(j));
    } catch (const std::exception& e) {
      throw DatasetError(e.what());
    }
  }
  return records;
}

std::vector<float> planar_input(const RgbImage& image) {
  const std::size_t plane = static_cast<std::size_t>(image.width) * image.height;
  std::vector<float> out(3 * plane);
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) out[c * plane + i] = image.data[i * 3 + c] / 127.5f - 1.0f;
  return out;
}

Dataset load_dataset(const fs::path& manifest, const LoadOptions& options) {
  if (options.side < 1) throw DatasetError("input side must be positive");
  Dataset data;
  const fs::path path = manifest_path(manifest);
  data.root = path.parent_path();
  data.side = options.side;
  for (auto& record : read_manifest(path)) {
    const std::string id = record.id;
    // Any must equal the OR of the per-type labels.
    bool any_dc = false;
    for (std::size_t k = 1; k < sim::kLabelKinds; ++k) any_dc = any_dc || record.labels.values[k] == sim::Label::DC;
    if (record.has_type_labels && (record.labels.any() == sim::Label::DC) != any_dc)
      fail_record(id, "Any label disagrees with the per-type labels");
    for (double v : record.x_h.values())
      if (!(v > 0.0 && v < 2.0)) fail_record(id, "heuristic input out of range");

    Sample s;
    RgbImage rgb;
    DepthImage depth;
    try {
      rgb = read_ppm(data.root / record.rgb_path);
      depth = read_depth_pgm(data.root / record.depth_path);
    } catch (const std::exception& e) {
      fail_record(id, e.what());
    }
    if (rgb.width != depth.width || rgb.height != depth.height) fail_record(id, "rgb and depth sizes differ");
    try {
      const auto colored = depth::colorize_depth(depth, record.intrinsics, {options.median_filter});
      s.rgb = planar_input(depth::roi_crop_resize(rgb, record.roi_pixels, options.side));
      s.depth = planar_input(depth::roi_crop_resize(colored, record.roi_pixels, options.side));
    } catch (const std::exception& e) {
      fail_record(id, e.what());
    }
    const auto xh = record.x_h.values();
    for (std::size_t k = 0; k < 4; ++k) s.x_h[k] = static_cast<float>(xh[k]);
    s.record = std::move(record);
    data.samples.push_back(std::move(s));
  }
  std::vector<sim::SampleRecord> records;
  records.reserve(data.samples.size());
  for (const auto& s : data.samples) records.push_back(s.record);
  data.stats = sim::LabelStatistics::of(records);
  return data;
}

model::HeadLabels head_labels(const Dataset& data, const std::vector<std::size_t>& indices, int heads) {
  if (heads != 1 && heads != static_cast<int>(sim::kLabelKinds))
    throw std::invalid_argument("head count must be 1 or " + std::to_string(sim::kLabelKinds));
  if (heads > 1 && !data.has_type_labels()) throw DatasetError("dataset has no per-type collision labels");
  model::HeadLabels out(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h)
    for (std::size_t i : indices)
      out[h].push_back(data.samples[i].record.labels.values[h] == sim::Label::DC ? model::kDC : model::kNDC);
  return out;
}

template <typename T>
model::Batch<T> make_batch(const Dataset& data, const std::vector<std::size_t>& indices) {
  const std::size_t n = indices.size(), side = static_cast<std::size_t>(data.side);
  const std::size_t per = 3 * side * side;
  std::vector<T> rgb, depth, xh;
  rgb.reserve(n * per);
  depth.reserve(n * per);
  xh.reserve(n * 4);
  for (std::size_t i : indices) {
    const Sample& s = data.samples.at(i);
    rgb.insert(rgb.end(), s.rgb.begin(), s.rgb.end());
    depth.insert(depth.end(), s.depth.begin(), s.depth.end());
    xh.insert(xh.end(), s.x_h.begin(), s.x_h.end());
  }
  return {grad::Tensor<T>::constant({n, 3, side, side}, std::move(rgb)),
          grad::Tensor<T>::constant({n, 3, side, side}, std::move(depth)),
          grad::Tensor<T>::constant({n, 4}, std::move(xh))};
}

template model::Batch<float> make_batch<float>(const Dataset&, const std::vector<std::size_t>&);
template model::Batch<double> make_batch<double>(const Dataset&, const std::vector<std::size_t>&);

}  // namespace ponnet::harness
