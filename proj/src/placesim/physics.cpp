#include "ponnet/placesim/physics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

namespace ponnet::sim {

const char* collision_name(CollisionType type) {
  switch (type) {
    case CollisionType::AO: return "AO";
    case CollisionType::TO: return "TO";
    case CollisionType::OO: return "OO";
    case CollisionType::OD: return "OD";
  }
  return "AO";
}

const char* label_name(Label label) { return label == Label::DC ? "DC" : "NDC"; }

Label parse_label(const std::string& text) {
  if (text == "DC") return Label::DC;
  if (text == "NDC") return Label::NDC;
  throw std::invalid_argument("label must be DC or NDC, got '" + text + "'");
}

double topple_impact_speed(const Primitive& p, double gravity) {
  if (p.kind == ShapeKind::sphere) return 0.0;
  const double h_up = p.height() / 2;
  const double h_low = p.kind == ShapeKind::cylinder ? std::min(p.dims[0], p.dims[2]) / 2
                                                     : std::min({p.dims[0], p.dims[1], p.dims[2]}) / 2;
  if (h_up <= h_low) return 0.0;
  return std::sqrt(2.0 * gravity * (h_up - h_low));
}

Labels label_sample(const std::vector<CollisionEvent>& events, double v_dc) {
  Labels out;
  for (const auto& e : events) {
    if (e.speed > v_dc) {
      out.values[1 + static_cast<int>(e.type)] = Label::DC;
      out.values[0] = Label::DC;
    }
  }
  return out;
}

namespace {

struct Body {
  Primitive prim;
  Footprint shape;
  double top = 0.0;  // height above the surface
  bool removed = false;
  bool moved = false;
  bool touched = false;
};

class Sweep {
 public:
  Sweep(const Scene& scene, const MotionConfig& motion) : scene_(scene), m_(motion) {
    for (const auto& p : scene.obstacles) bodies_.push_back({p, Footprint::of(p), p.height()});
  }

  std::vector<CollisionEvent> run() {
    const auto& t = scene_.target;
    const double xc = scene_.roi.center_x(), yc = scene_.roi.center_y();
    const double front = yc + t.length / 2, back = yc - t.length / 2;
    const double lo = -1e3;  // the sweep starts far in front of the destination
    const Footprint target_lane = Footprint::rect(xc - t.width / 2, xc + t.width / 2, lo, front);
    const Footprint arm_lane = Footprint::rect(xc - m_.arm_width / 2, xc + m_.arm_width / 2, lo, back);
    const Footprint column = Footprint::rect(xc - t.width / 2, xc + t.width / 2, back, front);
    const double hover = m_.hover_clearance;
    const double grasp = t.grasp_height;

    // Horizontal extension: contacts happen in order of travel distance.
    for (;;) {
      int best = -1;
      double best_key = std::numeric_limits<double>::infinity();
      bool by_arm = false;
      for (std::size_t i = 0; i < bodies_.size(); ++i) {
        const Body& b = bodies_[i];
        if (b.removed || b.touched) continue;
        if (b.top > hover && overlaps(b.shape, target_lane) && b.shape.min_y() < best_key) {
          best = static_cast<int>(i);
          best_key = b.shape.min_y();
          by_arm = false;
        }
        if (b.top > hover + grasp && overlaps(b.shape, arm_lane) && b.shape.min_y() + t.length < best_key) {
          best = static_cast<int>(i);
          best_key = b.shape.min_y() + t.length;
          by_arm = true;
        }
      }
      if (best < 0) break;
      Body& b = bodies_[best];
      b.touched = true;
      emit(by_arm ? CollisionType::AO : CollisionType::TO, m_.place_speed, by_arm ? kArm : kTarget, best, 0);
      push(best, (by_arm ? back : front) - b.shape.min_y(), 0);
    }

    // Descent onto the surface.
    for (std::size_t i = 0; i < bodies_.size(); ++i) {
      Body& b = bodies_[i];
      if (b.removed || b.touched) continue;
      const bool under_target = overlaps(b.shape, column);
      const bool under_arm = !under_target && b.top > grasp && overlaps(b.shape, arm_lane);
      if (!under_target && !under_arm) continue;
      b.touched = true;
      emit(under_target ? CollisionType::TO : CollisionType::AO, m_.place_speed,
           under_target ? kTarget : kArm, static_cast<int>(i), 0);
      if (b.moved) continue;
      if (b.prim.rolls()) {
        push(static_cast<int>(i), 0.0, 0);
      } else if (slender(b)) {
        b.moved = true;
        topple(static_cast<int>(i), 0);
      }
    }
    return std::move(events_);
  }

 private:
  void emit(CollisionType type, double speed, int a, int b, int depth, double drop = 0.0) {
    events_.push_back({type, speed, a, b, depth, drop});
  }

  double chain_speed(int depth) const { return std::pow(m_.kappa, depth) * m_.place_speed; }

  bool slender(const Body& b) const {
    if (b.prim.lying || b.prim.kind == ShapeKind::sphere) return false;
    const auto e = b.prim.footprint_extents();
    return b.prim.height() / std::min(e[0], e[1]) > m_.slenderness;
  }

  void fall(int i, int depth) {
    Body& b = bodies_[i];
    const double h = scene_.destination.height;
    emit(CollisionType::OD, std::sqrt(2.0 * m_.gravity * h), i, kDestination, depth, h);
    b.removed = true;
  }

  void move_by(Body& b, double dy) {
    b.prim.y += dy;
    b.shape = b.shape.translated(0.0, dy);
  }

  // First obstacle met when translating body i by up to `distance` along +y.
  std::optional<std::pair<int, double>> first_contact(int i, double distance) const {
    const Body& b = bodies_[i];
    std::optional<std::pair<int, double>> best;
    constexpr double kStep = 0.002;
    for (std::size_t j = 0; j < bodies_.size(); ++j) {
      if (static_cast<int>(j) == i || bodies_[j].removed) continue;
      const Footprint& other = bodies_[j].shape;
      if (other.max_y() <= b.shape.min_y() || other.min_y() >= b.shape.max_y() + distance) continue;
      if (other.max_x() <= b.shape.min_x() || other.min_x() >= b.shape.max_x()) continue;
      double prev = 0.0;
      for (double s = std::min(kStep, distance);; s = std::min(s + kStep, distance)) {
        if (overlaps(b.shape.translated(0.0, s), other)) {
          double lo = prev, hi = s;
          for (int it = 0; it < 50; ++it) {
            const double mid = 0.5 * (lo + hi);
            (overlaps(b.shape.translated(0.0, mid), other) ? hi : lo) = mid;
          }
          if (!best || lo < best->second) best = {{static_cast<int>(j), lo}};
          break;
        }
        if (s >= distance) break;
        prev = s;
      }
    }
    return best;
  }

  // Moves body i by `distance` along +y after a contact of the given chain depth.
  void push(int i, double distance, int depth) {
    Body& b = bodies_[i];
    if (b.removed || b.moved) return;
    b.moved = true;
    const double edge = scene_.destination.depth;
    if (b.prim.rolls()) {
      const double travel = std::max(0.0, distance) + m_.roll_extra;
      if (b.prim.y + travel > edge) {
        fall(i, depth + 1);
      } else {
        move_by(b, travel);
      }
      return;
    }
    if (slender(b)) {
      topple(i, depth);
      return;
    }
    distance = std::max(0.0, distance);
    const auto hit = first_contact(i, distance);
    const double to_edge = edge - b.prim.y;
    const double stop = hit ? hit->second : distance;
    if (to_edge < stop) {
      fall(i, depth + 1);
      return;
    }
    move_by(b, stop);
    if (hit) {
      emit(CollisionType::OO, chain_speed(depth + 1), i, hit->first, depth + 1);
      push(hit->first, distance - hit->second, depth + 1);
    }
  }

  // Tips body i forward about its leading bottom edge.
  void topple(int i, int depth) {
    Body& b = bodies_[i];
    const double h = b.prim.height();
    const double speed = topple_impact_speed(b.prim, m_.gravity);
    const double h_low = b.prim.kind == ShapeKind::cylinder
                             ? std::min(b.prim.dims[0], b.prim.dims[2]) / 2
                             : std::min({b.prim.dims[0], b.prim.dims[1], b.prim.dims[2]}) / 2;
    emit(CollisionType::OD, speed, i, kDestination, depth + 1, h / 2 - h_low);

    const double pivot = b.shape.max_y();
    const Footprint reach = Footprint::rect(b.shape.min_x(), b.shape.max_x(), pivot, pivot + h);
    b.shape = reach;
    b.top = 2 * h_low;
    b.prim.y = pivot + h / 2;

    std::vector<std::pair<double, int>> struck;
    for (std::size_t j = 0; j < bodies_.size(); ++j) {
      if (static_cast<int>(j) == i || bodies_[j].removed) continue;
      if (overlaps(bodies_[j].shape, reach)) struck.push_back({bodies_[j].shape.min_y(), static_cast<int>(j)});
    }
    std::sort(struck.begin(), struck.end());
    for (const auto& [min_y, j] : struck) {
      emit(CollisionType::OO, chain_speed(depth + 1), i, j, depth + 1);
      push(j, pivot + h - min_y, depth + 1);
    }
    if (b.prim.y > scene_.destination.depth) fall(i, depth + 1);
  }

  const Scene& scene_;
  MotionConfig m_;
  std::vector<Body> bodies_;
  std::vector<CollisionEvent> events_;
};

}  // namespace

std::vector<CollisionEvent> simulate_placing(const Scene& scene, const MotionConfig& motion) {
  return Sweep(scene, motion).run();
}

}  // namespace ponnet::sim
