#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "ponnet/common/image.hpp"
#include "ponnet/harness/dataset.hpp"
#include "ponnet/harness/train.hpp"

namespace ponnet::harness {

/// Blue-to-red jet colormap; t is clamped to [0, 1]. jet(0) = (0, 0, 128),
/// jet(1) = (128, 0, 0).
std::array<std::uint8_t, 3> jet(double t);

/// Bilinear resize of a side x side row-major map to width x height
/// (pixel-center aligned, edges clamped).
std::vector<double> upsample_bilinear(const std::vector<double>& map, int side, int width, int height);

/// Min-max normalization to [0, 1]; a constant map is only clamped to [0, 1].
std::vector<double> normalize_attention(const std::vector<double>& map);

inline constexpr double kOverlayAlpha = 0.5;

/// Upsamples and normalizes the map, colors it and blends it onto `base`
/// with weight alpha. The result has the dimensions of `base`.
RgbImage attention_overlay(const RgbImage& base, const std::vector<double>& map, int side,
                           double alpha = kOverlayAlpha);

struct OverlayFiles {
  std::filesystem::path input;       // ROI crop of the RGB image
  std::filesystem::path rgb_overlay;    // empty when the model has no RGB branch
  std::filesystem::path depth_overlay;  // empty when the model has no depth branch
  std::filesystem::path panel;       // the available images side by side
};

/// Runs the checkpoint on one sample (eval mode) and writes
/// <id>_input.ppm, <id>_rgb_att.ppm, <id>_depth_att.ppm and <id>_panel.ppm
/// into out_dir at display x display pixels. The RGB-branch map (or the
/// early-fused branch map) is laid over the RGB crop, the depth-branch map
/// over the colorized depth crop. I/O errors name the path.
OverlayFiles export_attention_overlay(const std::filesystem::path& checkpoint, const Dataset& data,
                                      std::size_t sample, const std::filesystem::path& out_dir,
                                      int display = 128, Precision precision = Precision::f32);

}  // namespace ponnet::harness
