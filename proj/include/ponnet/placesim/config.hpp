#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace ponnet::sim {

enum class ShapeKind { box, cylinder, sphere };

using Color = std::array<std::uint8_t, 3>;

/// dims: box (x, y, z) extents when upright; cylinder (diameter, diameter,
/// axis length); sphere (diameter x3). Meters.
struct PrimitiveTemplate {
  std::string name;
  ShapeKind kind = ShapeKind::box;
  std::array<double, 3> dims{};
  Color color{};
};

/// Destination top surface spans x in [-width/2, width/2], y in [0, depth]
/// at z = height. The robot approaches from y < 0.
struct DestinationTemplate {
  std::string name;
  double width = 0.0;
  double depth = 0.0;
  double height = 0.0;
  Color color{};
};

struct BackgroundVariant {
  Color background{};
  Color floor{};
  std::array<double, 3> light_dir{0.0, 0.0, 1.0};  // towards the light
};

struct MotionConfig {
  double place_speed = 0.2;       // m/s
  double hover_clearance = 0.05;  // target bottom above the surface while extending
  double arm_width = 0.08;
  double roll_extra = 0.15;       // extra travel of a rolling obstacle
  double kappa = 0.8;             // speed attenuation per chain link
  double gravity = 9.81;
  double slenderness = 1.5;       // height / narrowest footprint side
};

struct GenConfig {
  int image_width = 64;
  int image_height = 64;
  double fx = 57.6;
  double fy = 57.6;
  double cx = 31.5;
  double cy = 31.5;

  std::vector<DestinationTemplate> destinations;
  std::vector<PrimitiveTemplate> obstacles;
  std::vector<PrimitiveTemplate> targets;
  std::vector<BackgroundVariant> backgrounds;

  int min_obstacles = 0;
  int max_obstacles = 6;
  double lying_probability = 0.35;
  double scatter_margin = 0.08;
  double obstacle_jitter = 0.15;  // relative dimension jitter
  double target_jitter = 0.10;

  double roi_width_min = 0.26;
  double roi_width_max = 0.34;
  double roi_depth_min = 0.24;
  double roi_depth_max = 0.32;

  double camera_back_min = 0.35;  // camera y = -back
  double camera_back_max = 0.50;
  double camera_up_min = 0.40;    // camera z = surface height + up
  double camera_up_max = 0.70;
  double camera_lateral = 0.03;

  MotionConfig motion;
  double v_dc = 0.1;

  static GenConfig defaults();
  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
};

void to_json(nlohmann::json& j, const GenConfig& c);
void from_json(const nlohmann::json& j, GenConfig& c);
void to_json(nlohmann::json& j, const MotionConfig& c);
void from_json(const nlohmann::json& j, MotionConfig& c);

GenConfig load_gen_config(const std::string& path);

const char* shape_name(ShapeKind kind);
ShapeKind parse_shape(const std::string& name);

}  // namespace ponnet::sim
