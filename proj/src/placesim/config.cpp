#include "ponnet/placesim/config.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace ponnet::sim {

using nlohmann::json;

const char* shape_name(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::box: return "box";
    case ShapeKind::cylinder: return "cylinder";
    case ShapeKind::sphere: return "sphere";
  }
  return "box";
}

ShapeKind parse_shape(const std::string& name) {
  if (name == "box") return ShapeKind::box;
  if (name == "cylinder") return ShapeKind::cylinder;
  if (name == "sphere") return ShapeKind::sphere;
  throw std::invalid_argument("unknown primitive kind '" + name + "'");
}

GenConfig GenConfig::defaults() {
  GenConfig c;
  c.destinations = {
      {"desk", 1.20, 0.60, 0.72, {150, 111, 72}},
      {"dining_table", 1.00, 0.70, 0.75, {205, 170, 125}},
      {"counter", 1.50, 0.55, 0.90, {225, 225, 215}},
      {"shelf", 0.80, 0.34, 1.05, {120, 80, 50}},
      {"low_table", 0.90, 0.50, 0.45, {95, 95, 100}},
      {"side_table", 0.55, 0.40, 0.58, {235, 235, 240}},
  };
  using K = ShapeKind;
  c.obstacles = {
      {"mug", K::cylinder, {0.085, 0.085, 0.10}, {200, 40, 40}},
      {"soda_can", K::cylinder, {0.066, 0.066, 0.12}, {220, 30, 60}},
      {"bottle", K::cylinder, {0.070, 0.070, 0.25}, {40, 160, 70}},
      {"vase", K::cylinder, {0.090, 0.090, 0.20}, {60, 90, 200}},
      {"jar", K::cylinder, {0.090, 0.090, 0.12}, {230, 200, 60}},
      {"book", K::box, {0.15, 0.22, 0.03}, {70, 70, 160}},
      {"cereal_box", K::box, {0.19, 0.07, 0.28}, {240, 150, 30}},
      {"tissue_box", K::box, {0.24, 0.12, 0.10}, {180, 220, 240}},
      {"cube_toy", K::box, {0.06, 0.06, 0.06}, {250, 90, 200}},
      {"remote", K::box, {0.05, 0.18, 0.025}, {30, 30, 30}},
      {"juice_carton", K::box, {0.07, 0.07, 0.20}, {250, 240, 120}},
      {"phone_stand", K::box, {0.06, 0.04, 0.14}, {120, 120, 130}},
      {"ball", K::sphere, {0.07, 0.07, 0.07}, {250, 120, 20}},
      {"orange", K::sphere, {0.08, 0.08, 0.08}, {255, 150, 0}},
      {"apple", K::sphere, {0.075, 0.075, 0.075}, {190, 20, 30}},
      {"candle", K::cylinder, {0.04, 0.04, 0.15}, {245, 245, 235}},
  };
  c.targets = {
      {"cup", K::cylinder, {0.08, 0.08, 0.10}, {255, 255, 255}},
      {"glass", K::cylinder, {0.07, 0.07, 0.13}, {200, 230, 255}},
      {"can", K::cylinder, {0.066, 0.066, 0.12}, {200, 0, 0}},
      {"small_bottle", K::cylinder, {0.06, 0.06, 0.18}, {0, 120, 200}},
      {"snack_box", K::box, {0.12, 0.08, 0.05}, {240, 200, 0}},
      {"toothpaste", K::box, {0.18, 0.05, 0.04}, {255, 255, 255}},
      {"rubik_cube", K::box, {0.06, 0.06, 0.06}, {0, 160, 60}},
      {"sponge", K::box, {0.10, 0.07, 0.04}, {250, 230, 60}},
      {"tea_box", K::box, {0.14, 0.08, 0.07}, {120, 60, 20}},
      {"banana_box", K::box, {0.16, 0.06, 0.05}, {255, 225, 50}},
      {"tennis_ball", K::sphere, {0.065, 0.065, 0.065}, {200, 240, 40}},
      {"baseball", K::sphere, {0.074, 0.074, 0.074}, {245, 245, 245}},
      {"bowl", K::cylinder, {0.14, 0.14, 0.06}, {210, 90, 60}},
      {"plate_stack", K::cylinder, {0.15, 0.15, 0.04}, {235, 235, 235}},
      {"pringles", K::cylinder, {0.075, 0.075, 0.23}, {200, 0, 30}},
  };
  c.backgrounds = {
      {{200, 200, 190}, {120, 100, 80}, {0.3, -0.5, 0.8}},
      {{180, 190, 210}, {90, 90, 95}, {-0.4, -0.3, 0.85}},
      {{230, 220, 200}, {160, 130, 100}, {0.0, -0.6, 0.8}},
      {{150, 170, 150}, {70, 60, 50}, {0.5, 0.2, 0.85}},
      {{240, 240, 240}, {200, 200, 200}, {-0.2, 0.4, 0.9}},
      {{120, 110, 140}, {110, 80, 60}, {0.6, -0.2, 0.75}},
      {{210, 180, 160}, {140, 140, 140}, {-0.6, -0.4, 0.7}},
      {{170, 200, 220}, {100, 120, 90}, {0.1, 0.1, 1.0}},
      {{90, 100, 110}, {60, 60, 60}, {0.35, 0.35, 0.85}},
      {{250, 230, 180}, {180, 150, 110}, {-0.3, -0.7, 0.65}},
      {{190, 160, 200}, {130, 110, 100}, {0.7, 0.0, 0.7}},
      {{160, 140, 120}, {80, 70, 60}, {-0.1, -0.2, 0.95}},
  };
  return c;
}

namespace {

void check(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("gen-config: " + what);
}

void check_template(const PrimitiveTemplate& t) {
  for (double d : t.dims) check(d >= 0.02 && d <= 0.5, "dimension of '" + t.name + "' outside [0.02, 0.5] m");
  if (t.kind == ShapeKind::cylinder) check(t.dims[0] == t.dims[1], "cylinder '" + t.name + "' must be round");
  if (t.kind == ShapeKind::sphere)
    check(t.dims[0] == t.dims[1] && t.dims[1] == t.dims[2], "sphere '" + t.name + "' must be round");
}

}  // namespace

void GenConfig::validate() const {
  check(image_width > 0 && image_height > 0, "image size must be positive");
  check(fx > 0 && fy > 0, "focal lengths must be positive");
  check(!destinations.empty(), "at least one destination template required");
  check(!obstacles.empty(), "obstacle pool must not be empty");
  check(!targets.empty(), "target pool must not be empty");
  check(!backgrounds.empty(), "at least one background variant required");
  for (const auto& d : destinations) {
    check(d.height >= 0.3 && d.height <= 1.2, "destination '" + d.name + "' height outside [0.3, 1.2] m");
    check(d.width >= roi_width_max && d.depth >= roi_depth_min,
          "destination '" + d.name + "' smaller than the ROI");
  }
  for (const auto& t : obstacles) check_template(t);
  for (const auto& t : targets) check_template(t);
  check(min_obstacles >= 0 && max_obstacles >= min_obstacles, "obstacle count range invalid");
  check(lying_probability >= 0 && lying_probability <= 1, "lying probability outside [0, 1]");
  check(roi_width_min > 0 && roi_width_max >= roi_width_min, "roi width range invalid");
  check(roi_depth_min > 0 && roi_depth_max >= roi_depth_min, "roi depth range invalid");
  check(camera_back_min > 0 && camera_back_max >= camera_back_min, "camera distance range invalid");
  check(camera_up_min > 0 && camera_up_max >= camera_up_min, "camera height range invalid");
  check(motion.place_speed > 0 && motion.kappa > 0 && motion.kappa <= 1 && motion.gravity > 0,
        "motion parameters invalid");
  check(v_dc > 0, "v_dc must be positive");
}

void to_json(json& j, const MotionConfig& c) {
  j = json{{"place_speed", c.place_speed}, {"hover_clearance", c.hover_clearance},
           {"arm_width", c.arm_width},     {"roll_extra", c.roll_extra},
           {"kappa", c.kappa},             {"gravity", c.gravity},
           {"slenderness", c.slenderness}};
}

void from_json(const json& j, MotionConfig& c) {
  MotionConfig d;
  c.place_speed = j.value("place_speed", d.place_speed);
  c.hover_clearance = j.value("hover_clearance", d.hover_clearance);
  c.arm_width = j.value("arm_width", d.arm_width);
  c.roll_extra = j.value("roll_extra", d.roll_extra);
  c.kappa = j.value("kappa", d.kappa);
  c.gravity = j.value("gravity", d.gravity);
  c.slenderness = j.value("slenderness", d.slenderness);
}

namespace {

json template_json(const PrimitiveTemplate& t) {
  return {{"name", t.name}, {"kind", shape_name(t.kind)}, {"dims", t.dims}, {"color", t.color}};
}

PrimitiveTemplate template_from(const json& j) {
  PrimitiveTemplate t;
  t.name = j.at("name").get<std::string>();
  t.kind = parse_shape(j.at("kind").get<std::string>());
  t.dims = j.at("dims").get<std::array<double, 3>>();
  t.color = j.value("color", Color{128, 128, 128});
  return t;
}

}  // namespace

void to_json(json& j, const GenConfig& c) {
  j = json{{"version", 1},
           {"image_width", c.image_width},
           {"image_height", c.image_height},
           {"intrinsics", {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}}},
           {"min_obstacles", c.min_obstacles},
           {"max_obstacles", c.max_obstacles},
           {"lying_probability", c.lying_probability},
           {"scatter_margin", c.scatter_margin},
           {"obstacle_jitter", c.obstacle_jitter},
           {"target_jitter", c.target_jitter},
           {"roi_width", {c.roi_width_min, c.roi_width_max}},
           {"roi_depth", {c.roi_depth_min, c.roi_depth_max}},
           {"camera_back", {c.camera_back_min, c.camera_back_max}},
           {"camera_up", {c.camera_up_min, c.camera_up_max}},
           {"camera_lateral", c.camera_lateral},
           {"motion", c.motion},
           {"v_dc", c.v_dc}};
  json dests = json::array();
  for (const auto& d : c.destinations)
    dests.push_back({{"name", d.name}, {"width", d.width}, {"depth", d.depth}, {"height", d.height},
                     {"color", d.color}});
  j["destinations"] = dests;
  json obs = json::array(), tgt = json::array(), bgs = json::array();
  for (const auto& t : c.obstacles) obs.push_back(template_json(t));
  for (const auto& t : c.targets) tgt.push_back(template_json(t));
  for (const auto& b : c.backgrounds)
    bgs.push_back({{"background", b.background}, {"floor", b.floor}, {"light_dir", b.light_dir}});
  j["obstacles"] = obs;
  j["targets"] = tgt;
  j["backgrounds"] = bgs;
}

void from_json(const json& j, GenConfig& c) {
  // Missing keys keep their defaults, so partial documents are accepted.
  c = GenConfig::defaults();
  c.image_width = j.value("image_width", c.image_width);
  c.image_height = j.value("image_height", c.image_height);
  if (j.contains("intrinsics")) {
    const auto& k = j.at("intrinsics");
    c.fx = k.value("fx", c.fx);
    c.fy = k.value("fy", c.fy);
    c.cx = k.value("cx", c.cx);
    c.cy = k.value("cy", c.cy);
  } else if (j.contains("image_width") || j.contains("image_height")) {
    c.fx = 0.9 * c.image_width;
    c.fy = 0.9 * c.image_width;
    c.cx = (c.image_width - 1) / 2.0;
    c.cy = (c.image_height - 1) / 2.0;
  }
  c.min_obstacles = j.value("min_obstacles", c.min_obstacles);
  c.max_obstacles = j.value("max_obstacles", c.max_obstacles);
  c.lying_probability = j.value("lying_probability", c.lying_probability);
  c.scatter_margin = j.value("scatter_margin", c.scatter_margin);
  c.obstacle_jitter = j.value("obstacle_jitter", c.obstacle_jitter);
  c.target_jitter = j.value("target_jitter", c.target_jitter);
  auto range = [&](const char* key, double& lo, double& hi) {
    if (!j.contains(key)) return;
    const auto v = j.at(key).get<std::array<double, 2>>();
    lo = v[0];
    hi = v[1];
  };
  range("roi_width", c.roi_width_min, c.roi_width_max);
  range("roi_depth", c.roi_depth_min, c.roi_depth_max);
  range("camera_back", c.camera_back_min, c.camera_back_max);
  range("camera_up", c.camera_up_min, c.camera_up_max);
  c.camera_lateral = j.value("camera_lateral", c.camera_lateral);
  if (j.contains("motion")) c.motion = j.at("motion").get<MotionConfig>();
  c.v_dc = j.value("v_dc", c.v_dc);
  if (j.contains("destinations")) {
    c.destinations.clear();
    for (const auto& d : j.at("destinations"))
      c.destinations.push_back({d.at("name").get<std::string>(), d.at("width").get<double>(),
                                d.at("depth").get<double>(), d.at("height").get<double>(),
                                d.value("color", Color{128, 128, 128})});
  }
  if (j.contains("obstacles")) {
    c.obstacles.clear();
    for (const auto& t : j.at("obstacles")) c.obstacles.push_back(template_from(t));
  }
  if (j.contains("targets")) {
    c.targets.clear();
    for (const auto& t : j.at("targets")) c.targets.push_back(template_from(t));
  }
  if (j.contains("backgrounds")) {
    c.backgrounds.clear();
    for (const auto& b : j.at("backgrounds"))
      c.backgrounds.push_back({b.at("background").get<Color>(), b.at("floor").get<Color>(),
                               b.at("light_dir").get<std::array<double, 3>>()});
  }
}

GenConfig load_gen_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open gen-config '" + path + "'");
  GenConfig c = json::parse(in).get<GenConfig>();
  c.validate();
  return c;
}

}  // namespace ponnet::sim
