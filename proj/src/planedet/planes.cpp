#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "ponnet/planedet/planedet.hpp"

namespace ponnet::plane {

PointCloud backproject(const DepthImage& depth, const depth::CameraIntrinsics& k) {
  k.validate();
  PointCloud c;
  c.width = depth.width;
  c.height = depth.height;
  const auto n = static_cast<std::size_t>(depth.width) * depth.height;
  c.points.assign(n, Vec3{0.0, 0.0, 0.0});
  c.valid.assign(n, 0);
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      const float z = depth.at(x, y);
      if (!depth::depth_valid(z)) continue;
      const auto i = static_cast<std::size_t>(y) * depth.width + x;
      c.points[i] = depth::backproject_pixel(x, y, z, k);
      c.valid[i] = 1;
    }
  }
  return c;
}

namespace {

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

// Least-squares plane through the points: centroid and the eigenvector of
// the smallest covariance eigenvalue.
void fit(const PointCloud& cloud, const std::vector<int>& idx, Vec3& normal, double& offset) {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (int i : idx) mean += Eigen::Vector3d(cloud.points[i][0], cloud.points[i][1], cloud.points[i][2]);
  mean /= static_cast<double>(idx.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (int i : idx) {
    const Eigen::Vector3d d = Eigen::Vector3d(cloud.points[i][0], cloud.points[i][1], cloud.points[i][2]) - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
  Eigen::Vector3d n = solver.eigenvectors().col(0).normalized();
  if (n.z() < 0) n = -n;
  normal = {n.x(), n.y(), n.z()};
  offset = n.dot(mean);
}

}  // namespace

std::vector<Plane> extract_planes(const PointCloud& cloud, const depth::NormalMap& normals,
                                  const RegionParams& params) {
  std::vector<Plane> planes;
  if (cloud.empty()) return planes;
  const int w = cloud.width, h = cloud.height;
  const auto n = static_cast<std::size_t>(w) * h;
  auto usable = [&](int i) { return cloud.valid[i] && normals.valid[i]; };

  // Curvature proxy: 1 - |mean normal| over the valid 3x3 neighbourhood.
  std::vector<double> curvature(n, 2.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int i = y * w + x;
      if (!usable(i)) continue;
      Vec3 sum{0, 0, 0};
      int count = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= w || yy >= h || !usable(yy * w + xx)) continue;
          for (int c = 0; c < 3; ++c) sum[c] += normals.normals[yy * w + xx][c];
          ++count;
        }
      }
      curvature[i] = 1.0 - std::sqrt(dot(sum, sum)) / count;
    }
  }
  std::vector<int> order;
  for (int i = 0; i < static_cast<int>(n); ++i)
    if (usable(i)) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return curvature[a] < curvature[b]; });

  const double cos_max = std::cos(params.max_normal_deviation_deg * 3.14159265358979323846 / 180.0);
  std::vector<std::uint8_t> assigned(n, 0);
  std::vector<int> region, queue;
  for (int seed : order) {
    if (assigned[seed]) continue;
    Vec3 normal = normals.normals[seed];
    double offset = dot(normal, cloud.points[seed]);
    region.assign(1, seed);
    queue.assign(1, seed);
    assigned[seed] = 1;
    std::size_t next_fit = 8;
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const int i = queue[head];
      const int x = i % w, y = i / w;
      const int nb[4][2] = {{x + 1, y}, {x - 1, y}, {x, y + 1}, {x, y - 1}};
      for (const auto& q : nb) {
        if (q[0] < 0 || q[1] < 0 || q[0] >= w || q[1] >= h) continue;
        const int j = q[1] * w + q[0];
        if (assigned[j] || !usable(j)) continue;
        if (dot(normals.normals[j], normal) < cos_max) continue;
        if (std::abs(dot(normal, cloud.points[j]) - offset) >= params.max_distance) continue;
        assigned[j] = 1;
        region.push_back(j);
        queue.push_back(j);
      }
      if (region.size() >= next_fit) {
        fit(cloud, region, normal, offset);
        next_fit = region.size() + region.size() / 2;
      }
    }
    if (region.size() < params.min_pixels) {
      for (int i : region) assigned[i] = 0;
      // The seed itself is never retried as a seed; keep it claimed so the
      // loop makes progress, and let later regions absorb its neighbours.
      assigned[seed] = 1;
      continue;
    }
    Plane p;
    fit(cloud, region, p.normal, p.offset);
    p.inliers = region;
    std::sort(p.inliers.begin(), p.inliers.end());
    planes.push_back(std::move(p));
  }
  std::stable_sort(planes.begin(), planes.end(),
                   [](const Plane& a, const Plane& b) { return a.inlier_count() > b.inlier_count(); });
  return planes;
}

std::vector<Plane> extract_planes(const DepthImage& depth, const depth::CameraIntrinsics& k,
                                  const RegionParams& params) {
  return extract_planes(backproject(depth, k), depth::estimate_normals(depth, k), params);
}

}  // namespace ponnet::plane
