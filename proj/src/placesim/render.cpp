#include "ponnet/placesim/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ponnet::sim {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kNear = 0.01;

struct Triangle {
  Vec3 a, b, c;
};

struct Mesh {
  std::vector<Triangle> tris;
  Color color{};
};

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

void add_quad(Mesh& m, const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3) {
  m.tris.push_back({p0, p1, p2});
  m.tris.push_back({p0, p2, p3});
}

// Box with half extents (hx, hy) rotated by yaw about its center, z in [z0, z1].
Mesh box_mesh(double x, double y, double yaw, double hx, double hy, double z0, double z1, Color color) {
  Mesh m;
  m.color = color;
  const double c = std::cos(yaw), s = std::sin(yaw);
  auto corner = [&](double lx, double ly, double z) {
    return Vec3{x + c * lx - s * ly, y + s * lx + c * ly, z};
  };
  const double lx[4] = {-hx, hx, hx, -hx}, ly[4] = {-hy, -hy, hy, hy};
  Vec3 bottom[4], top[4];
  for (int i = 0; i < 4; ++i) {
    bottom[i] = corner(lx[i], ly[i], z0);
    top[i] = corner(lx[i], ly[i], z1);
  }
  add_quad(m, top[0], top[1], top[2], top[3]);
  add_quad(m, bottom[0], bottom[3], bottom[2], bottom[1]);
  for (int i = 0; i < 4; ++i) {
    const int j = (i + 1) % 4;
    add_quad(m, bottom[i], bottom[j], top[j], top[i]);
  }
  return m;
}

Mesh primitive_mesh(const Primitive& p, double surface) {
  constexpr int kSides = 16;
  if (p.kind == ShapeKind::box) {
    const auto e = p.footprint_extents();
    return box_mesh(p.x, p.y, p.yaw, e[0] / 2, e[1] / 2, surface, surface + p.height(), p.color);
  }
  Mesh m;
  m.color = p.color;
  const double c = std::cos(p.yaw), s = std::sin(p.yaw);
  auto world = [&](double lx, double ly, double z) {
    return Vec3{p.x + c * lx - s * ly, p.y + s * lx + c * ly, z};
  };
  if (p.kind == ShapeKind::sphere) {
    const double r = p.dims[0] / 2;
    const double zc = surface + r;
    constexpr int kRings = 8;
    auto at = [&](int ring, int seg) {
      const double th = kPi * ring / kRings, ph = 2 * kPi * seg / kSides;
      return Vec3{p.x + r * std::sin(th) * std::cos(ph), p.y + r * std::sin(th) * std::sin(ph),
                  zc + r * std::cos(th)};
    };
    for (int ring = 0; ring < kRings; ++ring) {
      for (int seg = 0; seg < kSides; ++seg) {
        const Vec3 a = at(ring, seg), b = at(ring + 1, seg), cc = at(ring + 1, seg + 1), d = at(ring, seg + 1);
        if (ring > 0) m.tris.push_back({a, b, d});
        if (ring < kRings - 1) m.tris.push_back({b, cc, d});
      }
    }
    return m;
  }
  const double r = p.dims[0] / 2;
  if (!p.lying) {
    const double z0 = surface, z1 = surface + p.dims[2];
    for (int i = 0; i < kSides; ++i) {
      const double a0 = 2 * kPi * i / kSides, a1 = 2 * kPi * (i + 1) / kSides;
      const Vec3 b0 = world(r * std::cos(a0), r * std::sin(a0), z0), b1 = world(r * std::cos(a1), r * std::sin(a1), z0);
      const Vec3 t0 = world(r * std::cos(a0), r * std::sin(a0), z1), t1 = world(r * std::cos(a1), r * std::sin(a1), z1);
      add_quad(m, b0, b1, t1, t0);
      m.tris.push_back({world(0, 0, z1), t0, t1});
      m.tris.push_back({world(0, 0, z0), b1, b0});
    }
    return m;
  }
  // Lying: axis along local y, circle in the local x-z plane.
  const double half = p.dims[2] / 2, zc = surface + r;
  for (int i = 0; i < kSides; ++i) {
    const double a0 = 2 * kPi * i / kSides, a1 = 2 * kPi * (i + 1) / kSides;
    auto rim = [&](double a, double ly) { return world(r * std::cos(a), ly, zc + r * std::sin(a)); };
    add_quad(m, rim(a0, -half), rim(a1, -half), rim(a1, half), rim(a0, half));
    m.tris.push_back({world(0, -half, zc), rim(a1, -half), rim(a0, -half)});
    m.tris.push_back({world(0, half, zc), rim(a0, half), rim(a1, half)});
  }
  return m;
}

class Rasterizer {
 public:
  Rasterizer(const Camera& cam, Color background, const Vec3& light)
      : cam_(cam), light_(light), out_{RgbImage(cam.width, cam.height, 3, 0), DepthImage(cam.width, cam.height, 1, 0.0f)},
        zbuf_(static_cast<std::size_t>(cam.width) * cam.height, std::numeric_limits<double>::infinity()) {
    for (int y = 0; y < cam.height; ++y)
      for (int x = 0; x < cam.width; ++x)
        for (int c = 0; c < 3; ++c) out_.rgb.at(x, y, c) = background[c];
  }

  void draw(const Mesh& mesh) {
    for (const auto& t : mesh.tris) draw(t, mesh.color);
  }

  Rendering finish() { return std::move(out_); }

 private:
  void draw(const Triangle& t, Color color) {
    Vec3 n = cross(sub(t.b, t.a), sub(t.c, t.a));
    const double len = std::sqrt(dot(n, n));
    if (!(len > 0.0)) return;
    for (auto& v : n) v /= len;
    // Two-sided: face the normal towards the viewer.
    if (dot(n, sub(cam_.eye, t.a)) < 0) n = {-n[0], -n[1], -n[2]};
    const double shade = 0.35 + 0.65 * std::max(0.0, dot(n, light_));
    Color shaded;
    for (int c = 0; c < 3; ++c) shaded[c] = static_cast<std::uint8_t>(std::min(255.0, std::floor(color[c] * shade + 0.5)));

    // Camera space, clipped against the near plane.
    std::vector<Vec3> poly{cam_.to_camera(t.a), cam_.to_camera(t.b), cam_.to_camera(t.c)};
    std::vector<Vec3> clipped;
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Vec3& p = poly[i];
      const Vec3& q = poly[(i + 1) % poly.size()];
      const bool pin = p[2] >= kNear, qin = q[2] >= kNear;
      if (pin) clipped.push_back(p);
      if (pin != qin) {
        const double s = (kNear - p[2]) / (q[2] - p[2]);
        clipped.push_back({p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1]), kNear});
      }
    }
    for (std::size_t i = 1; i + 1 < clipped.size(); ++i) fill(clipped[0], clipped[i], clipped[i + 1], shaded);
  }

  void fill(const Vec3& a, const Vec3& b, const Vec3& c, Color color) {
    const auto& k = cam_.intrinsics;
    const double ua = k.fx * a[0] / a[2] + k.cx, va = k.fy * a[1] / a[2] + k.cy;
    const double ub = k.fx * b[0] / b[2] + k.cx, vb = k.fy * b[1] / b[2] + k.cy;
    const double uc = k.fx * c[0] / c[2] + k.cx, vc = k.fy * c[1] / c[2] + k.cy;
    const double area = (ub - ua) * (vc - va) - (uc - ua) * (vb - va);
    if (std::abs(area) < 1e-14) return;
    const int x0 = std::max(0, static_cast<int>(std::ceil(std::min({ua, ub, uc}))));
    const int x1 = std::min(cam_.width - 1, static_cast<int>(std::floor(std::max({ua, ub, uc}))));
    const int y0 = std::max(0, static_cast<int>(std::ceil(std::min({va, vb, vc}))));
    const int y1 = std::min(cam_.height - 1, static_cast<int>(std::floor(std::max({va, vb, vc}))));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double w0 = ((ub - x) * (vc - y) - (uc - x) * (vb - y)) / area;
        const double w1 = ((uc - x) * (va - y) - (ua - x) * (vc - y)) / area;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < 0 || w1 < 0 || w2 < 0) continue;
        // 1/z is affine in screen space for a planar triangle.
        const double z = 1.0 / (w0 / a[2] + w1 / b[2] + w2 / c[2]);
        const auto i = static_cast<std::size_t>(y) * cam_.width + x;
        if (z >= zbuf_[i]) continue;
        zbuf_[i] = z;
        out_.depth.at(x, y) = static_cast<float>(z);
        for (int ch = 0; ch < 3; ++ch) out_.rgb.at(x, y, ch) = color[ch];
      }
    }
  }

  const Camera& cam_;
  Vec3 light_;
  Rendering out_;
  std::vector<double> zbuf_;
};

}  // namespace

Rendering render(const Scene& scene, const GenConfig& config) {
  const auto& bg = config.backgrounds.at(static_cast<std::size_t>(scene.location) % config.backgrounds.size());
  Vec3 light = bg.light_dir;
  const double ln = std::sqrt(dot(light, light));
  for (auto& v : light) v /= ln;

  Rasterizer r(scene.camera, bg.background, light);
  Mesh floor;
  floor.color = bg.floor;
  add_quad(floor, {-4.0, -4.0, 0.0}, {4.0, -4.0, 0.0}, {4.0, 6.0, 0.0}, {-4.0, 6.0, 0.0});
  r.draw(floor);

  const auto& d = scene.destination;
  r.draw(box_mesh(0.0, d.depth / 2, 0.0, d.width / 2, d.depth / 2, 0.0, d.height, d.color));
  for (const auto& p : scene.obstacles) r.draw(primitive_mesh(p, d.height));
  return r.finish();
}

}  // namespace ponnet::sim
