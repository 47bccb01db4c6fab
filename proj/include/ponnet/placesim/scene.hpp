#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ponnet/common/rng.hpp"
#include "ponnet/depthproc/depthproc.hpp"
#include "ponnet/placesim/config.hpp"

namespace ponnet::sim {

using Vec3 = std::array<double, 3>;

/// A rigid obstacle resting on the destination surface.
///
/// dims follow PrimitiveTemplate. A lying box rests on its largest face; a
/// lying cylinder has its axis horizontal along the local y axis. Spheres
/// are always lying.
struct Primitive {
  int id = 0;
  int template_id = 0;
  ShapeKind kind = ShapeKind::box;
  std::array<double, 3> dims{};
  double x = 0.0;  // footprint center on the surface
  double y = 0.0;
  double yaw = 0.0;
  bool lying = false;
  Color color{};

  /// Vertical extent in the current orientation.
  double height() const;
  /// Horizontal extents along the yawed local x and y axes.
  std::array<double, 2> footprint_extents() const;
  /// Round footprint (upright cylinder or sphere).
  bool round_footprint() const;
  /// Spheres and lying cylinders roll instead of sliding.
  bool rolls() const;
  /// Radius of the bounding circle of the footprint.
  double bounding_radius() const;
  bool operator==(const Primitive&) const = default;
};

/// Convex 2D footprint: a circle or a rectangle given by its corners.
struct Footprint {
  bool circle = false;
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;
  std::array<std::array<double, 2>, 4> corners{};

  static Footprint of(const Primitive& p);
  static Footprint rect(double x0, double x1, double y0, double y1);
  Footprint translated(double dx, double dy) const;
  double min_y() const;
  double max_y() const;
  double min_x() const;
  double max_x() const;
};

/// True when the interiors intersect (touching boundaries do not count).
bool overlaps(const Footprint& a, const Footprint& b);

struct Destination {
  int template_id = 0;
  double width = 0.0;
  double depth = 0.0;
  double height = 0.0;
  Color color{};
  bool operator==(const Destination&) const = default;
};

struct Target {
  int template_id = 0;
  ShapeKind kind = ShapeKind::box;
  double width = 0.0;   // x
  double height = 0.0;  // z
  double length = 0.0;  // y, the approach direction
  double grasp_height = 0.0;
  Color color{};
  bool operator==(const Target&) const = default;
};

/// Pinhole camera. rotation rows are the camera x (right), y (down) and
/// z (forward) axes in world coordinates.
struct Camera {
  Vec3 eye{};
  std::array<Vec3, 3> rotation{};
  depth::CameraIntrinsics intrinsics;
  int width = 0;
  int height = 0;

  static Camera look_at(const Vec3& eye, const Vec3& target, const depth::CameraIntrinsics& k, int width,
                        int height);
  Vec3 to_camera(const Vec3& world) const;
  Vec3 direction_to_world(const Vec3& camera_dir) const;
  Vec3 to_world(const Vec3& camera_point) const;
  /// Pixel coordinates (pixel centers at integers); false if behind the camera.
  bool project(const Vec3& world, double& u, double& v) const;
  bool operator==(const Camera&) const = default;
};

/// Rectangle on the destination surface, world coordinates.
struct SurfaceRect {
  double x0 = 0.0, x1 = 0.0, y0 = 0.0, y1 = 0.0;
  double center_x() const { return 0.5 * (x0 + x1); }
  double center_y() const { return 0.5 * (y0 + y1); }
  bool operator==(const SurfaceRect&) const = default;
};

struct Scene {
  std::uint64_t seed = 0;
  int location = 0;
  Destination destination;
  std::vector<Primitive> obstacles;
  Target target;
  Camera camera;
  SurfaceRect roi;

  /// Bounding box of the projected ROI corners, in the image crop convention.
  depth::Roi roi_pixels() const;
  bool operator==(const Scene&) const = default;
};

/// x_h: target width, height, length and camera height above the floor.
struct HeuristicInput {
  double width = 0.0;
  double height = 0.0;
  double length = 0.0;
  double camera_height = 0.0;
  std::array<double, 4> values() const { return {width, height, length, camera_height}; }
  bool operator==(const HeuristicInput&) const = default;
};

class SceneGenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SceneOptions {
  std::optional<int> obstacle_count;  // overrides the uniform draw
  /// Replace the obstacles by one tall box covering the whole ROI.
  bool occupy_roi = false;
};

Scene generate_scene(std::uint64_t seed, const GenConfig& config, const SceneOptions& options = {});

/// Assigns orientations, then separates bounding circles by at least 1 mm
/// with iterative push-apart (at most 200 sweeps) and drops obstacles whose
/// center left the destination. Returns false when the overlaps do not
/// resolve.
bool settle_obstacles(Scene& scene, Rng& rng, const GenConfig& config);

HeuristicInput make_heuristic_input(const Scene& scene);

}  // namespace ponnet::sim
