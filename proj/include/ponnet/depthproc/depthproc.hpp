#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ponnet/common/image.hpp"

namespace ponnet::depth {

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;

  /// Throws std::invalid_argument unless fx, fy > 0.
  void validate() const;
  bool operator==(const CameraIntrinsics&) const = default;
};

using Vec3 = std::array<double, 3>;

/// Per-pixel unit normals in the camera frame (x right, y down, z forward),
/// oriented so that n_z > 0.
struct NormalMap {
  int width = 0;
  int height = 0;
  std::vector<Vec3> normals;
  std::vector<std::uint8_t> valid;

  const Vec3& at(int x, int y) const { return normals[static_cast<std::size_t>(y) * width + x]; }
  bool is_valid(int x, int y) const { return valid[static_cast<std::size_t>(y) * width + x] != 0; }
};

inline bool depth_valid(float z) { return z > 0.0f && z < 1e30f; }

/// Camera-frame point of pixel (u, v) at depth z.
inline Vec3 backproject_pixel(double u, double v, double z, const CameraIntrinsics& k) {
  return {(u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z};
}

/// Central differences of back-projected neighbors, one-sided where a
/// neighbor is missing. A pixel lacking a valid neighbor along either image
/// axis is marked invalid.
NormalMap estimate_normals(const DepthImage& depth, const CameraIntrinsics& intrinsics);

/// 3x3 median over valid neighbors; invalid pixels stay invalid.
DepthImage median_filter3(const DepthImage& depth);

/// round-half-up of 255 (n + 1) / 2 per component.
std::uint8_t normal_to_byte(double component);

RgbImage colorize_normals(const NormalMap& normals);

struct ColorizeOptions {
  bool median_filter = false;
};

RgbImage colorize_depth(const DepthImage& depth, const CameraIntrinsics& intrinsics,
                        const ColorizeOptions& options = {});

/// Axis-aligned rectangle in pixel units; (x, y) is the top-left corner of
/// the covered area, so the full image is {0, 0, width, height}.
struct Roi {
  double x = 0.0;
  double y = 0.0;
  double width = 0.0;
  double height = 0.0;
  bool operator==(const Roi&) const = default;
};

/// Crops `roi` and resizes it to side x side with bilinear sampling at pixel
/// centers (edge-clamped). Integer images are rounded half up.
/// Throws std::invalid_argument for a zero-area roi or one leaving the image.
template <typename T>
Image<T> roi_crop_resize(const Image<T>& image, const Roi& roi, int side);

}  // namespace ponnet::depth
