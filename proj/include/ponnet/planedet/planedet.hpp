#pragma once

#include <cstddef>
#include <vector>

#include "ponnet/common/image.hpp"
#include "ponnet/depthproc/depthproc.hpp"
#include "ponnet/placesim/physics.hpp"

namespace ponnet::plane {

using depth::Vec3;

/// Organized cloud in the camera frame, one point per pixel.
struct PointCloud {
  int width = 0;
  int height = 0;
  std::vector<Vec3> points;
  std::vector<std::uint8_t> valid;

  const Vec3& at(int x, int y) const { return points[static_cast<std::size_t>(y) * width + x]; }
  bool empty() const { return points.empty(); }
};

PointCloud backproject(const DepthImage& depth, const depth::CameraIntrinsics& intrinsics);

/// n . p = offset, |n| = 1, oriented like the depth normals (n_z >= 0).
struct Plane {
  Vec3 normal{};
  double offset = 0.0;
  std::vector<int> inliers;  // pixel indices y * width + x
  std::size_t inlier_count() const { return inliers.size(); }
};

struct RegionParams {
  double max_normal_deviation_deg = 10.0;
  double max_distance = 0.005;
  std::size_t min_pixels = 50;
};

/// Greedy region growing from the lowest-curvature unassigned pixel; the
/// plane is refit by least squares whenever its region has grown by half.
/// Sorted by inlier count, largest first.
std::vector<Plane> extract_planes(const PointCloud& cloud, const depth::NormalMap& normals,
                                  const RegionParams& params = {});

std::vector<Plane> extract_planes(const DepthImage& depth, const depth::CameraIntrinsics& intrinsics,
                                  const RegionParams& params = {});

/// What the baseline knows about one placing trial.
struct PlacementQuery {
  sim::Camera camera;
  sim::SurfaceRect roi;  // world rectangle on the surface
  double footprint_width = 0.0;   // x extent of the target
  double footprint_length = 0.0;  // y extent
  double surface_height = 0.0;    // expected destination height
};

PlacementQuery query_for(const sim::Scene& scene);

struct FreeAreaParams {
  double max_tilt_deg = 15.0;    // from the world vertical
  double height_tolerance = 0.02;
  double cell = 0.005;
  double margin = 0.01;          // added on every side of the footprint
};

/// Cells of the ROI grid that see an inlier pixel of a supporting plane.
struct FreeGrid {
  int nx = 0;
  int ny = 0;
  std::vector<std::uint8_t> free;
  bool at(int i, int j) const { return free[static_cast<std::size_t>(j) * nx + i] != 0; }
};

/// Indices of planes that are horizontal and at the expected height.
std::vector<std::size_t> supporting_planes(const std::vector<Plane>& planes, const PointCloud& cloud,
                                           const PlacementQuery& query, const FreeAreaParams& params = {});

FreeGrid free_grid(const std::vector<Plane>& planes, const PointCloud& cloud, const PlacementQuery& query,
                   const FreeAreaParams& params = {});

/// True when an axis-aligned block of rows x cols free cells exists.
bool fits(const FreeGrid& grid, int cols, int rows);

/// NDC iff the inflated target footprint fits in the free part of the ROI;
/// DC when no supporting plane is found.
sim::Label predict_free_area(const std::vector<Plane>& planes, const PointCloud& cloud,
                             const PlacementQuery& query, const FreeAreaParams& params = {});

/// Full pipeline from a depth image.
sim::Label predict_from_depth(const DepthImage& depth, const PlacementQuery& query,
                              const RegionParams& region = {}, const FreeAreaParams& params = {});

/// Documented reference figure of the original detector on its own data;
/// informational only.
inline constexpr double kReferenceAccuracy = 0.825;

}  // namespace ponnet::plane
