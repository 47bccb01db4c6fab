#include <algorithm>
#include <cmath>

#include "ponnet/depthproc/depthproc.hpp"

namespace ponnet::depth {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("intrinsics: fx and fy must be positive");
}

namespace {

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

}  // namespace

NormalMap estimate_normals(const DepthImage& depth, const CameraIntrinsics& k) {
  k.validate();
  NormalMap out;
  out.width = depth.width;
  out.height = depth.height;
  const auto n = static_cast<std::size_t>(depth.width) * depth.height;
  out.normals.assign(n, Vec3{0.0, 0.0, 0.0});
  out.valid.assign(n, 0);

  auto ok = [&](int x, int y) {
    return x >= 0 && y >= 0 && x < depth.width && y < depth.height && depth_valid(depth.at(x, y));
  };
  auto point = [&](int x, int y) { return backproject_pixel(x, y, depth.at(x, y), k); };

  // Tangent along one axis: central when both neighbors exist, else one-sided.
  auto tangent = [&](int x, int y, int dx, int dy, Vec3& t) {
    const bool fwd = ok(x + dx, y + dy);
    const bool back = ok(x - dx, y - dy);
    if (fwd && back) {
      t = sub(point(x + dx, y + dy), point(x - dx, y - dy));
    } else if (fwd) {
      t = sub(point(x + dx, y + dy), point(x, y));
    } else if (back) {
      t = sub(point(x, y), point(x - dx, y - dy));
    } else {
      return false;
    }
    return true;
  };

  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      if (!ok(x, y)) continue;
      Vec3 tu, tv;
      if (!tangent(x, y, 1, 0, tu) || !tangent(x, y, 0, 1, tv)) continue;
      Vec3 c = cross(tu, tv);
      const double len = std::sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]);
      if (!(len > 0.0) || !std::isfinite(len)) continue;
      const double s = (c[2] < 0.0 ? -1.0 : 1.0) / len;
      const auto i = static_cast<std::size_t>(y) * depth.width + x;
      out.normals[i] = {c[0] * s, c[1] * s, c[2] * s};
      out.valid[i] = 1;
    }
  }
  return out;
}

DepthImage median_filter3(const DepthImage& depth) {
  DepthImage out = depth;
  std::vector<float> window;
  window.reserve(9);
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      if (!depth_valid(depth.at(x, y))) continue;
      window.clear();
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= depth.width || yy >= depth.height) continue;
          if (depth_valid(depth.at(xx, yy))) window.push_back(depth.at(xx, yy));
        }
      }
      const auto mid = window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2);
      std::nth_element(window.begin(), mid, window.end());
      out.at(x, y) = *mid;
    }
  }
  return out;
}

std::uint8_t normal_to_byte(double component) {
  const double v = 255.0 * (std::clamp(component, -1.0, 1.0) + 1.0) / 2.0;
  // The small offset keeps exact halves (127.5) from rounding down after
  // benign cancellation error in the cross product.
  return static_cast<std::uint8_t>(std::min(255.0, std::floor(v + 0.5 + 1e-9)));
}

RgbImage colorize_normals(const NormalMap& normals) {
  RgbImage out(normals.width, normals.height, 3, 0);
  for (int y = 0; y < normals.height; ++y) {
    for (int x = 0; x < normals.width; ++x) {
      if (!normals.is_valid(x, y)) continue;
      const Vec3& n = normals.at(x, y);
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = normal_to_byte(n[c]);
    }
  }
  return out;
}

RgbImage colorize_depth(const DepthImage& depth, const CameraIntrinsics& intrinsics,
                        const ColorizeOptions& options) {
  if (options.median_filter) return colorize_normals(estimate_normals(median_filter3(depth), intrinsics));
  return colorize_normals(estimate_normals(depth, intrinsics));
}

}  // namespace ponnet::depth
