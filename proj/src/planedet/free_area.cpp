#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ponnet/planedet/planedet.hpp"

namespace ponnet::plane {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check(const PlacementQuery& q, const FreeAreaParams& p) {
  if (!(q.roi.x1 > q.roi.x0) || !(q.roi.y1 > q.roi.y0)) throw std::invalid_argument("planedet: empty roi");
  if (!(q.footprint_width > 0) || !(q.footprint_length > 0))
    throw std::invalid_argument("planedet: footprint must be positive");
  if (!(p.cell > 0) || p.margin < 0) throw std::invalid_argument("planedet: bad grid parameters");
}

}  // namespace

std::vector<std::size_t> supporting_planes(const std::vector<Plane>& planes, const PointCloud& cloud,
                                           const PlacementQuery& query, const FreeAreaParams& params) {
  const double cos_tilt = std::cos(params.max_tilt_deg * kPi / 180.0);
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < planes.size(); ++k) {
    const Plane& p = planes[k];
    if (p.inliers.empty()) continue;
    const Vec3 up = query.camera.direction_to_world(p.normal);
    if (std::abs(up[2]) < cos_tilt) continue;
    double z = 0.0;
    for (int i : p.inliers) z += query.camera.to_world(cloud.points[i])[2];
    z /= static_cast<double>(p.inliers.size());
    if (std::abs(z - query.surface_height) <= params.height_tolerance) out.push_back(k);
  }
  return out;
}

FreeGrid free_grid(const std::vector<Plane>& planes, const PointCloud& cloud, const PlacementQuery& query,
                   const FreeAreaParams& params) {
  check(query, params);
  FreeGrid grid;
  grid.nx = std::max(1, static_cast<int>(std::floor((query.roi.x1 - query.roi.x0) / params.cell + 1e-9)));
  grid.ny = std::max(1, static_cast<int>(std::floor((query.roi.y1 - query.roi.y0) / params.cell + 1e-9)));
  grid.free.assign(static_cast<std::size_t>(grid.nx) * grid.ny, 0);

  std::vector<std::uint8_t> support(cloud.points.size(), 0);
  for (std::size_t k : supporting_planes(planes, cloud, query, params))
    for (int i : planes[k].inliers) support[i] = 1;

  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      const Vec3 w{query.roi.x0 + (i + 0.5) * params.cell, query.roi.y0 + (j + 0.5) * params.cell,
                   query.surface_height};
      double u = 0, v = 0;
      if (!query.camera.project(w, u, v)) continue;
      const int px = static_cast<int>(std::floor(u + 0.5));
      const int py = static_cast<int>(std::floor(v + 0.5));
      if (px < 0 || py < 0 || px >= cloud.width || py >= cloud.height) continue;
      if (support[static_cast<std::size_t>(py) * cloud.width + px])
        grid.free[static_cast<std::size_t>(j) * grid.nx + i] = 1;
    }
  }
  return grid;
}

bool fits(const FreeGrid& grid, int cols, int rows) {
  if (cols <= 0 || rows <= 0) return true;
  if (cols > grid.nx || rows > grid.ny) return false;
  // Summed-area table of occupied cells.
  const int W = grid.nx + 1;
  std::vector<int> s(static_cast<std::size_t>(W) * (grid.ny + 1), 0);
  for (int j = 0; j < grid.ny; ++j)
    for (int i = 0; i < grid.nx; ++i)
      s[(j + 1) * W + i + 1] = (grid.at(i, j) ? 0 : 1) + s[j * W + i + 1] + s[(j + 1) * W + i] - s[j * W + i];
  for (int j = 0; j + rows <= grid.ny; ++j)
    for (int i = 0; i + cols <= grid.nx; ++i)
      if (s[(j + rows) * W + i + cols] - s[j * W + i + cols] - s[(j + rows) * W + i] + s[j * W + i] == 0)
        return true;
  return false;
}

sim::Label predict_free_area(const std::vector<Plane>& planes, const PointCloud& cloud,
                             const PlacementQuery& query, const FreeAreaParams& params) {
  check(query, params);
  if (supporting_planes(planes, cloud, query, params).empty()) return sim::Label::DC;
  const FreeGrid grid = free_grid(planes, cloud, query, params);
  const int cols = static_cast<int>(std::ceil((query.footprint_width + 2 * params.margin) / params.cell - 1e-9));
  const int rows = static_cast<int>(std::ceil((query.footprint_length + 2 * params.margin) / params.cell - 1e-9));
  return fits(grid, cols, rows) ? sim::Label::NDC : sim::Label::DC;
}

PlacementQuery query_for(const sim::Scene& scene) {
  PlacementQuery q;
  q.camera = scene.camera;
  q.roi = scene.roi;
  q.footprint_width = scene.target.width;
  q.footprint_length = scene.target.length;
  q.surface_height = scene.destination.height;
  return q;
}

sim::Label predict_from_depth(const DepthImage& depth, const PlacementQuery& query, const RegionParams& region,
                              const FreeAreaParams& params) {
  const auto& k = query.camera.intrinsics;
  const PointCloud cloud = backproject(depth, k);
  const auto planes = extract_planes(cloud, depth::estimate_normals(depth, k), region);
  return predict_free_area(planes, cloud, query, params);
}

}  // namespace ponnet::plane
