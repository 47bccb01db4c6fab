#include "ponnet/placesim/scene.hpp"

#include <algorithm>
#include <cmath>

namespace ponnet::sim {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTouch = 1e-12;

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 normalized(const Vec3& v) {
  const double n = std::sqrt(dot(v, v));
  return {v[0] / n, v[1] / n, v[2] / n};
}

// Index of the smallest of three box dimensions (first on ties).
int min_index(const std::array<double, 3>& d) {
  int k = 0;
  for (int i = 1; i < 3; ++i)
    if (d[i] < d[k]) k = i;
  return k;
}

}  // namespace

double Primitive::height() const {
  switch (kind) {
    case ShapeKind::sphere: return dims[0];
    case ShapeKind::cylinder: return lying ? dims[0] : dims[2];
    case ShapeKind::box: return lying ? dims[min_index(dims)] : dims[2];
  }
  return dims[2];
}

std::array<double, 2> Primitive::footprint_extents() const {
  switch (kind) {
    case ShapeKind::sphere: return {dims[0], dims[0]};
    case ShapeKind::cylinder: return lying ? std::array<double, 2>{dims[0], dims[2]}
                                           : std::array<double, 2>{dims[0], dims[0]};
    case ShapeKind::box: {
      if (!lying) return {dims[0], dims[1]};
      switch (min_index(dims)) {
        case 0: return {dims[2], dims[1]};
        case 1: return {dims[0], dims[2]};
        default: return {dims[0], dims[1]};
      }
    }
  }
  return {dims[0], dims[1]};
}

bool Primitive::round_footprint() const {
  return kind == ShapeKind::sphere || (kind == ShapeKind::cylinder && !lying);
}

bool Primitive::rolls() const { return kind == ShapeKind::sphere || (kind == ShapeKind::cylinder && lying); }

double Primitive::bounding_radius() const {
  const auto e = footprint_extents();
  if (round_footprint()) return e[0] / 2;
  return 0.5 * std::hypot(e[0], e[1]);
}

Footprint Footprint::of(const Primitive& p) {
  Footprint f;
  f.cx = p.x;
  f.cy = p.y;
  const auto e = p.footprint_extents();
  if (p.round_footprint()) {
    f.circle = true;
    f.radius = e[0] / 2;
    return f;
  }
  const double c = std::cos(p.yaw), s = std::sin(p.yaw);
  const double hx = e[0] / 2, hy = e[1] / 2;
  const double local[4][2] = {{-hx, -hy}, {hx, -hy}, {hx, hy}, {-hx, hy}};
  for (int i = 0; i < 4; ++i) {
    f.corners[i] = {p.x + c * local[i][0] - s * local[i][1], p.y + s * local[i][0] + c * local[i][1]};
  }
  return f;
}

Footprint Footprint::rect(double x0, double x1, double y0, double y1) {
  Footprint f;
  f.cx = 0.5 * (x0 + x1);
  f.cy = 0.5 * (y0 + y1);
  f.corners = {{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}};
  return f;
}

Footprint Footprint::translated(double dx, double dy) const {
  Footprint f = *this;
  f.cx += dx;
  f.cy += dy;
  for (auto& c : f.corners) {
    c[0] += dx;
    c[1] += dy;
  }
  return f;
}

double Footprint::min_y() const {
  if (circle) return cy - radius;
  double m = corners[0][1];
  for (const auto& c : corners) m = std::min(m, c[1]);
  return m;
}

double Footprint::max_y() const {
  if (circle) return cy + radius;
  double m = corners[0][1];
  for (const auto& c : corners) m = std::max(m, c[1]);
  return m;
}

double Footprint::min_x() const {
  if (circle) return cx - radius;
  double m = corners[0][0];
  for (const auto& c : corners) m = std::min(m, c[0]);
  return m;
}

double Footprint::max_x() const {
  if (circle) return cx + radius;
  double m = corners[0][0];
  for (const auto& c : corners) m = std::max(m, c[0]);
  return m;
}

namespace {

void project_rect(const Footprint& f, double ax, double ay, double& lo, double& hi) {
  lo = hi = f.corners[0][0] * ax + f.corners[0][1] * ay;
  for (int i = 1; i < 4; ++i) {
    const double p = f.corners[i][0] * ax + f.corners[i][1] * ay;
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
}

bool separated_on_axes(const Footprint& a, const Footprint& b, const Footprint& axes_from) {
  for (int e = 0; e < 2; ++e) {
    const double ax = axes_from.corners[e + 1][0] - axes_from.corners[e][0];
    const double ay = axes_from.corners[e + 1][1] - axes_from.corners[e][1];
    const double n = std::hypot(ax, ay);
    double alo, ahi, blo, bhi;
    project_rect(a, ax / n, ay / n, alo, ahi);
    project_rect(b, ax / n, ay / n, blo, bhi);
    if (ahi <= blo + kTouch || bhi <= alo + kTouch) return true;
  }
  return false;
}

bool circle_rect(const Footprint& c, const Footprint& r) {
  // Circle center in the rectangle frame spanned by corners 0->1 and 0->3.
  const double ux = r.corners[1][0] - r.corners[0][0], uy = r.corners[1][1] - r.corners[0][1];
  const double vx = r.corners[3][0] - r.corners[0][0], vy = r.corners[3][1] - r.corners[0][1];
  const double lu = std::hypot(ux, uy), lv = std::hypot(vx, vy);
  const double px = c.cx - r.corners[0][0], py = c.cy - r.corners[0][1];
  const double su = std::clamp((px * ux + py * uy) / lu, 0.0, lu);
  const double sv = std::clamp((px * vx + py * vy) / lv, 0.0, lv);
  const double qx = r.corners[0][0] + su * ux / lu + sv * vx / lv;
  const double qy = r.corners[0][1] + su * uy / lu + sv * vy / lv;
  return std::hypot(c.cx - qx, c.cy - qy) < c.radius - kTouch;
}

}  // namespace

bool overlaps(const Footprint& a, const Footprint& b) {
  if (a.circle && b.circle) return std::hypot(a.cx - b.cx, a.cy - b.cy) < a.radius + b.radius - kTouch;
  if (a.circle) return circle_rect(a, b);
  if (b.circle) return circle_rect(b, a);
  return !separated_on_axes(a, b, a) && !separated_on_axes(a, b, b);
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const depth::CameraIntrinsics& k, int width,
                       int height) {
  Camera c;
  c.eye = eye;
  const Vec3 f = normalized({target[0] - eye[0], target[1] - eye[1], target[2] - eye[2]});
  const Vec3 r = normalized(cross(f, {0.0, 0.0, 1.0}));
  const Vec3 d = cross(f, r);
  c.rotation = {r, d, f};
  c.intrinsics = k;
  c.width = width;
  c.height = height;
  return c;
}

Vec3 Camera::to_camera(const Vec3& world) const {
  const Vec3 p{world[0] - eye[0], world[1] - eye[1], world[2] - eye[2]};
  return {dot(rotation[0], p), dot(rotation[1], p), dot(rotation[2], p)};
}

Vec3 Camera::direction_to_world(const Vec3& v) const {
  Vec3 out{};
  for (int i = 0; i < 3; ++i) out[i] = rotation[0][i] * v[0] + rotation[1][i] * v[1] + rotation[2][i] * v[2];
  return out;
}

Vec3 Camera::to_world(const Vec3& p) const {
  const Vec3 d = direction_to_world(p);
  return {d[0] + eye[0], d[1] + eye[1], d[2] + eye[2]};
}

bool Camera::project(const Vec3& world, double& u, double& v) const {
  const Vec3 p = to_camera(world);
  if (p[2] <= 1e-9) return false;
  u = intrinsics.fx * p[0] / p[2] + intrinsics.cx;
  v = intrinsics.fy * p[1] / p[2] + intrinsics.cy;
  return true;
}

depth::Roi Scene::roi_pixels() const {
  double umin = 1e300, umax = -1e300, vmin = 1e300, vmax = -1e300;
  for (double x : {roi.x0, roi.x1}) {
    for (double y : {roi.y0, roi.y1}) {
      double u = 0, v = 0;
      camera.project({x, y, destination.height}, u, v);
      umin = std::min(umin, u);
      umax = std::max(umax, u);
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
    }
  }
  // Pixel k covers [k, k+1) in crop coordinates while its center projects to k.
  const double x0 = std::clamp(umin + 0.5, 0.0, static_cast<double>(camera.width));
  const double x1 = std::clamp(umax + 0.5, 0.0, static_cast<double>(camera.width));
  const double y0 = std::clamp(vmin + 0.5, 0.0, static_cast<double>(camera.height));
  const double y1 = std::clamp(vmax + 0.5, 0.0, static_cast<double>(camera.height));
  return {x0, y0, x1 - x0, y1 - y0};
}

bool settle_obstacles(Scene& scene, Rng& rng, const GenConfig& config) {
  auto& obs = scene.obstacles;
  for (auto& o : obs) {
    o.lying = o.kind == ShapeKind::sphere || rng.bernoulli(config.lying_probability);
  }
  constexpr double kGap = 0.0011;
  bool clear = false;
  for (int sweep = 0; sweep < 200 && !clear; ++sweep) {
    clear = true;
    for (std::size_t i = 0; i < obs.size(); ++i) {
      for (std::size_t j = i + 1; j < obs.size(); ++j) {
        const double need = obs[i].bounding_radius() + obs[j].bounding_radius() + kGap;
        double dx = obs[j].x - obs[i].x, dy = obs[j].y - obs[i].y;
        double dist = std::hypot(dx, dy);
        if (dist >= need) continue;
        clear = false;
        if (dist < 1e-9) {
          // Coincident centers: split along a pair-dependent direction.
          const double a = 2.399963229728653 * static_cast<double>(i * obs.size() + j);
          dx = std::cos(a);
          dy = std::sin(a);
          dist = 0.0;
        } else {
          dx /= dist;
          dy /= dist;
        }
        const double push = 0.5 * (need - dist);
        obs[i].x -= dx * push;
        obs[i].y -= dy * push;
        obs[j].x += dx * push;
        obs[j].y += dy * push;
      }
    }
  }
  if (!clear) return false;
  const auto& d = scene.destination;
  std::erase_if(obs, [&](const Primitive& o) {
    return o.x < -d.width / 2 || o.x > d.width / 2 || o.y < 0.0 || o.y > d.depth;
  });
  for (std::size_t i = 0; i < obs.size(); ++i) obs[i].id = static_cast<int>(i);
  return true;
}

namespace {

std::array<double, 3> jittered(const PrimitiveTemplate& t, double jitter, Rng& rng) {
  auto d = t.dims;
  auto draw = [&] { return rng.uniform(1.0 - jitter, 1.0 + jitter); };
  auto clampd = [](double v) { return std::clamp(v, 0.02, 0.5); };
  if (t.kind == ShapeKind::sphere) {
    const double s = clampd(d[0] * draw());
    return {s, s, s};
  }
  if (t.kind == ShapeKind::cylinder) {
    const double r = clampd(d[0] * draw());
    return {r, r, clampd(d[2] * draw())};
  }
  for (auto& v : d) v = clampd(v * draw());
  return d;
}

bool camera_sees_roi(const Scene& s) {
  for (double x : {s.roi.x0, s.roi.x1}) {
    for (double y : {s.roi.y0, s.roi.y1}) {
      double u = 0, v = 0;
      if (!s.camera.project({x, y, s.destination.height}, u, v)) return false;
      if (u < 0 || v < 0 || u > s.camera.width - 1 || v > s.camera.height - 1) return false;
    }
  }
  return true;
}

bool try_generate(Scene& s, Rng& rng, const GenConfig& c, const SceneOptions& options) {
  s.location = static_cast<int>(rng.below(c.backgrounds.size()));
  const auto dest_id = static_cast<int>(rng.below(c.destinations.size()));
  const auto& dt = c.destinations[dest_id];
  s.destination = {dest_id, dt.width, dt.depth, dt.height, dt.color};

  const double rw = std::min(rng.uniform(c.roi_width_min, c.roi_width_max), dt.width);
  const double rd = std::min(rng.uniform(c.roi_depth_min, c.roi_depth_max), dt.depth);
  const double xc = rng.uniform(-dt.width / 2 + rw / 2, dt.width / 2 - rw / 2);
  s.roi = {xc - rw / 2, xc + rw / 2, 0.0, rd};

  const auto tgt_id = static_cast<int>(rng.below(c.targets.size()));
  const auto& tt = c.targets[tgt_id];
  const auto td = jittered(tt, c.target_jitter, rng);
  s.target = {tgt_id, tt.kind, td[0], td[2], td[1], td[2] / 2, tt.color};

  s.obstacles.clear();
  if (options.occupy_roi) {
    Primitive p;
    p.kind = ShapeKind::box;
    p.dims = {std::min(0.5, rw + 0.04), std::min(0.5, rd + 0.02), rng.uniform(0.15, 0.3)};
    p.x = xc;
    p.y = rd / 2;
    p.color = c.obstacles[rng.below(c.obstacles.size())].color;
    s.obstacles.push_back(p);
  } else {
    const int count = options.obstacle_count ? *options.obstacle_count
                                             : rng.between(c.min_obstacles, c.max_obstacles);
    const double sx0 = std::max(-dt.width / 2, s.roi.x0 - c.scatter_margin);
    const double sx1 = std::min(dt.width / 2, s.roi.x1 + c.scatter_margin);
    const double sy1 = std::min(dt.depth, s.roi.y1 + c.scatter_margin);
    for (int i = 0; i < count; ++i) {
      Primitive p;
      p.id = i;
      p.template_id = static_cast<int>(rng.below(c.obstacles.size()));
      const auto& ot = c.obstacles[p.template_id];
      p.kind = ot.kind;
      p.dims = jittered(ot, c.obstacle_jitter, rng);
      p.x = rng.uniform(sx0, sx1);
      p.y = rng.uniform(0.0, sy1);
      p.yaw = rng.uniform(0.0, kPi);
      p.color = ot.color;
      s.obstacles.push_back(p);
    }
    if (!settle_obstacles(s, rng, c)) return false;
  }

  const double back = rng.uniform(c.camera_back_min, c.camera_back_max);
  const double up = rng.uniform(c.camera_up_min, c.camera_up_max);
  const double lateral = rng.uniform(-c.camera_lateral, c.camera_lateral);
  const depth::CameraIntrinsics k{c.fx, c.fy, c.cx, c.cy};
  s.camera = Camera::look_at({xc + lateral, -back, dt.height + up}, {xc, rd / 2, dt.height}, k,
                             c.image_width, c.image_height);
  return camera_sees_roi(s);
}

}  // namespace

Scene generate_scene(std::uint64_t seed, const GenConfig& config, const SceneOptions& options) {
  constexpr int kAttempts = 20;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    Rng rng(attempt == 0 ? seed : mix_seed(seed, static_cast<std::uint64_t>(attempt)));
    Scene s;
    s.seed = seed;
    if (try_generate(s, rng, config, options)) return s;
  }
  throw SceneGenerationError("scene generation failed for seed " + std::to_string(seed) + " after " +
                             std::to_string(kAttempts) + " attempts");
}

HeuristicInput make_heuristic_input(const Scene& scene) {
  return {scene.target.width, scene.target.height, scene.target.length, scene.camera.eye[2]};
}

}  // namespace ponnet::sim
