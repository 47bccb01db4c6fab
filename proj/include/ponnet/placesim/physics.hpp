#pragma once

#include <array>
#include <string>
#include <vector>

#include "ponnet/placesim/scene.hpp"

namespace ponnet::sim {

enum class CollisionType { AO, TO, OO, OD };

const char* collision_name(CollisionType type);

// Participant ids besides obstacle indices.
inline constexpr int kArm = -1;
inline constexpr int kTarget = -2;
inline constexpr int kDestination = -3;

struct CollisionEvent {
  CollisionType type = CollisionType::AO;
  double speed = 0.0;  // |v|, m/s
  int first = 0;       // participant ids
  int second = 0;
  int depth = 0;       // 0 for direct arm/target contacts
  double drop_height = 0.0;  // OD only: height the center of mass fell
  bool operator==(const CollisionEvent&) const = default;
};

/// Quasi-static placing sweep.
///
/// The target (held at half its height) extends along +y at hover height
/// towards the ROI center, then descends onto the surface. Obstacles hit by
/// the target or the arm yield TO/AO events at the sweep speed and respond:
/// rolling bodies travel further without new events, slender upright bodies
/// topple, others slide and may push their neighbours (OO, attenuated by
/// kappa per link). A center of mass leaving the far edge falls (OD).
std::vector<CollisionEvent> simulate_placing(const Scene& scene, const MotionConfig& motion = {});

/// Speed gained by the center of mass dropping from the current upright pose
/// to the lowest resting pose; 0 when it cannot drop.
double topple_impact_speed(const Primitive& p, double gravity = 9.81);

enum class Label { DC = 0, NDC = 1 };

const char* label_name(Label label);
Label parse_label(const std::string& text);

/// Order: Any, AO, TO, OO, OD.
inline constexpr int kLabelKinds = 5;
inline constexpr std::array<const char*, kLabelKinds> kLabelNames{"Any", "AO", "TO", "OO", "OD"};

struct Labels {
  std::array<Label, kLabelKinds> values{Label::NDC, Label::NDC, Label::NDC, Label::NDC, Label::NDC};
  Label any() const { return values[0]; }
  Label of(CollisionType t) const { return values[1 + static_cast<int>(t)]; }
  bool operator==(const Labels&) const = default;
};

/// DC for a type iff one of its events has speed strictly above v_dc.
Labels label_sample(const std::vector<CollisionEvent>& events, double v_dc);

}  // namespace ponnet::sim
