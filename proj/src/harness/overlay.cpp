#include "ponnet/harness/overlay.hpp"

#include <algorithm>
#include <cmath>

#include "ponnet/depthproc/depthproc.hpp"

namespace ponnet::harness {

namespace fs = std::filesystem;

std::array<std::uint8_t, 3> jet(double t) {
  t = std::clamp(t, 0.0, 1.0);
  auto channel = [t](double center) {
    const double v = std::clamp(1.5 - std::abs(4.0 * t - center), 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(255.0 * v));
  };
  return {channel(3.0), channel(2.0), channel(1.0)};
}

std::vector<double> upsample_bilinear(const std::vector<double>& map, int side, int width, int height) {
  if (side < 1 || map.size() != static_cast<std::size_t>(side) * side)
    throw std::invalid_argument("attention map does not match its side length");
  std::vector<double> out(static_cast<std::size_t>(width) * height);
  const double sx = static_cast<double>(side) / width, sy = static_cast<double>(side) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, side - 1.0);
    const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, side - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, side - 1.0);
      const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, side - 1);
      const double wx = fx - x0;
      const auto at = [&](int yy, int xx) { return map[static_cast<std::size_t>(yy) * side + xx]; };
      out[static_cast<std::size_t>(y) * width + x] =
          (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x1)) + wy * ((1 - wx) * at(y1, x0) + wx * at(y1, x1));
    }
  }
  return out;
}

std::vector<double> normalize_attention(const std::vector<double>& map) {
  if (map.empty()) return {};
  const auto [lo, hi] = std::minmax_element(map.begin(), map.end());
  std::vector<double> out(map.size());
  const double a = *lo, b = *hi;
  for (std::size_t i = 0; i < map.size(); ++i)
    out[i] = b > a ? (map[i] - a) / (b - a) : std::clamp(map[i], 0.0, 1.0);
  return out;
}

RgbImage attention_overlay(const RgbImage& base, const std::vector<double>& map, int side, double alpha) {
  if (base.channels != 3) throw std::invalid_argument("overlay base must be an RGB image");
  // Normalize first so the maximum pixel of the map itself is the reddest.
  const auto values = upsample_bilinear(normalize_attention(map), side, base.width, base.height);
  RgbImage out(base.width, base.height, 3);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto color = jet(values[i]);
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = (1.0 - alpha) * base.data[i * 3 + c] + alpha * color[c];
      out.data[i * 3 + c] = static_cast<std::uint8_t>(std::lround(v));
    }
  }
  return out;
}

namespace {

template <typename T>
model::ForwardOutput run_one(const fs::path& checkpoint, const Dataset& data, std::size_t sample) {
  auto net = model::PonNet<T>::load(checkpoint);
  if (net.config().input_side != data.side)
    throw TrainError(checkpoint.string() + ": checkpoint expects " + std::to_string(net.config().input_side) +
                     " px inputs, dataset has " + std::to_string(data.side));
  grad::Graph<T> g;
  const auto result = net.forward(g, make_batch<T>(data, {sample}), grad::Mode::eval);
  return net.outputs(result).at(0);
}

void save(const fs::path& path, const RgbImage& image) {
  try {
    write_ppm(path, image);
  } catch (const std::exception& e) {
    throw ImageIoError(path.string() + ": " + e.what());
  }
}

}  // namespace

OverlayFiles export_attention_overlay(const fs::path& checkpoint, const Dataset& data, std::size_t sample,
                                      const fs::path& out_dir, int display, Precision precision) {
  if (sample >= data.samples.size()) throw std::out_of_range("sample index out of range");
  if (display < 1) throw std::invalid_argument("display size must be positive");
  const auto out = precision == Precision::f32 ? run_one<float>(checkpoint, data, sample)
                                               : run_one<double>(checkpoint, data, sample);
  const auto& record = data.samples[sample].record;
  RgbImage rgb, depth;
  try {
    rgb = read_ppm(data.root / record.rgb_path);
    depth = depth::colorize_depth(read_depth_pgm(data.root / record.depth_path), record.intrinsics);
  } catch (const std::exception& e) {
    throw DatasetError("record " + record.id + ": " + e.what());
  }
  const RgbImage rgb_crop = depth::roi_crop_resize(rgb, record.roi_pixels, display);
  const RgbImage depth_crop = depth::roi_crop_resize(depth, record.roi_pixels, display);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw ImageIoError(out_dir.string() + ": " + ec.message());

  // Maps are square, S * S values.
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(std::max(out.a_r.size(), out.a_d.size())))));
  OverlayFiles files;
  std::vector<const RgbImage*> columns;
  files.input = out_dir / (record.id + "_input.ppm");
  save(files.input, rgb_crop);
  columns.push_back(&rgb_crop);
  RgbImage rgb_att, depth_att;
  if (!out.a_r.empty()) {
    rgb_att = attention_overlay(rgb_crop, out.a_r, side);
    files.rgb_overlay = out_dir / (record.id + "_rgb_att.ppm");
    save(files.rgb_overlay, rgb_att);
    columns.push_back(&rgb_att);
  }
  if (!out.a_d.empty()) {
    depth_att = attention_overlay(depth_crop, out.a_d, side);
    files.depth_overlay = out_dir / (record.id + "_depth_att.ppm");
    save(files.depth_overlay, depth_att);
    columns.push_back(&depth_att);
  }
  RgbImage panel(display * static_cast<int>(columns.size()), display, 3);
  for (std::size_t c = 0; c < columns.size(); ++c)
    for (int y = 0; y < display; ++y)
      for (int x = 0; x < display; ++x)
        for (int k = 0; k < 3; ++k) panel.at(static_cast<int>(c) * display + x, y, k) = columns[c]->at(x, y, k);
  files.panel = out_dir / (record.id + "_panel.ppm");
  save(files.panel, panel);
  return files;
}

}  // namespace ponnet::harness
