#pragma once

// Hand-built placing scenes with closed-form expected outcomes, shared by
// the unit and acceptance suites.

#include <cmath>
#include <string>
#include <vector>

#include "ponnet/placesim/physics.hpp"

namespace hand {

using namespace ponnet::sim;

inline constexpr double kG = 9.81;

inline Scene base_scene(double surface = 0.7, double depth = 0.3, double roi_depth = 0.3) {
  Scene s;
  s.destination = {0, 1.0, depth, surface, {150, 110, 70}};
  s.roi = {-0.15, 0.15, 0.0, roi_depth};
  s.target = {0, ShapeKind::box, 0.06, 0.06, 0.06, 0.03, {255, 255, 255}};
  const ponnet::depth::CameraIntrinsics k{57.6, 57.6, 31.5, 31.5};
  s.camera = Camera::look_at({0.0, -0.4, surface + 0.5}, {0.0, roi_depth / 2, surface}, k, 64, 64);
  return s;
}

inline Primitive box(double x, double y, std::array<double, 3> dims, double yaw = 0.0) {
  Primitive p;
  p.kind = ShapeKind::box;
  p.dims = dims;
  p.x = x;
  p.y = y;
  p.yaw = yaw;
  p.color = {200, 50, 50};
  return p;
}

inline Primitive sphere(double x, double y, double d) {
  Primitive p;
  p.kind = ShapeKind::sphere;
  p.dims = {d, d, d};
  p.x = x;
  p.y = y;
  p.lying = true;
  p.color = {250, 150, 0};
  return p;
}

struct Case {
  std::string name;
  Scene scene;
  MotionConfig motion;
  Labels expected;
};

inline Labels labels_with(std::initializer_list<int> dc_kinds) {
  Labels l;
  for (int k : dc_kinds) {
    l.values[k] = Label::DC;
    l.values[0] = Label::DC;
  }
  return l;
}

// 25 scenes in each of four families: empty or out-of-path obstacles, a
// slender box toppled by the target, a rolling body pushed off the far edge,
// and contacts no faster than the damage threshold.
inline std::vector<Case> oracle_cases() {
  std::vector<Case> out;
  for (int k = 0; k < 25; ++k) {
    const double surface = 0.3 + 0.9 * k / 24.0;
    Case c{"empty-" + std::to_string(k), base_scene(surface), {}, Labels{}};
    if (k % 2 == 1) {
      // Far to the side of both the target and the arm.
      c.scene.obstacles.push_back(box(0.4, 0.1 + 0.005 * k, {0.05, 0.05, 0.2}));
    }
    out.push_back(c);
  }
  for (int k = 0; k < 25; ++k) {
    const double w = 0.03 + 0.03 * (k % 5) / 4.0;
    const double h = 0.12 + 0.18 * (k / 5) / 4.0;
    Case c{"topple-" + std::to_string(k), base_scene(), {}, labels_with({2, 4})};
    c.scene.obstacles.push_back(box(0.0, 0.06, {w, w, h}));
    out.push_back(c);
  }
  for (int k = 0; k < 25; ++k) {
    const double surface = 0.35 + 0.8 * k / 24.0;
    Case c{"fall-" + std::to_string(k), base_scene(surface), {}, labels_with({2, 4})};
    c.scene.obstacles.push_back(sphere(0.01 * (k % 3), 0.09, 0.06));
    out.push_back(c);
  }
  for (int k = 0; k < 25; ++k) {
    Case c{"gentle-" + std::to_string(k), base_scene(0.7, 0.6, 0.3), {}, Labels{}};
    c.motion.place_speed = 0.02 + 0.08 * k / 24.0;  // ends exactly at the threshold
    c.scene.obstacles.push_back(box(0.0, 0.08, {0.06, 0.06, 0.06}));
    out.push_back(c);
  }
  return out;
}

}  // namespace hand
