#include "ponnet/placesim/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace ponnet::sim {

using nlohmann::json;

SceneSample make_sample(std::uint64_t seed, const GenConfig& config, const SceneOptions& options) {
  SceneSample s;
  s.scene = generate_scene(seed, config, options);
  s.images = render(s.scene, config);
  s.x_h = make_heuristic_input(s.scene);
  s.events = simulate_placing(s.scene, config.motion);
  s.labels = label_sample(s.events, config.v_dc);
  return s;
}

const char* split_name(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + text + "'");
}

std::array<std::size_t, 3> split_counts(std::size_t n, const SplitRatios& r) {
  const double total = r.train + r.val + r.test;
  if (!(r.train >= 0 && r.val >= 0 && r.test >= 0 && total > 0))
    throw std::invalid_argument("split ratios must be non-negative with a positive sum");
  const auto val = static_cast<std::size_t>(std::llround(n * r.val / total));
  const auto test = static_cast<std::size_t>(std::llround(n * r.test / total));
  if (val + test > n) throw std::invalid_argument("split ratios leave no room for training samples");
  return {n - val - test, val, test};
}

std::uint64_t sample_seed(std::uint64_t master_seed, std::size_t index) {
  return mix_seed(master_seed, static_cast<std::uint64_t>(index));
}

json record_to_json(const SampleRecord& r) {
  json labels = json::object();
  for (int k = 0; k < (r.has_type_labels ? kLabelKinds : 1); ++k) labels[kLabelNames[k]] = label_name(r.labels.values[k]);
  json events = json::array();
  for (const auto& e : r.events)
    events.push_back({{"type", collision_name(e.type)}, {"speed", e.speed}, {"first", e.first},
                      {"second", e.second}, {"depth", e.depth}, {"drop_height", e.drop_height}});
  return json{{"id", r.id},
              {"split", split_name(r.split)},
              {"rgb", r.rgb_path},
              {"depth", r.depth_path},
              {"x_h", r.x_h.values()},
              {"labels", labels},
              {"seed", r.seed},
              {"location", r.location},
              {"surface_height", r.surface_height},
              {"roi", {r.roi.x0, r.roi.x1, r.roi.y0, r.roi.y1}},
              {"roi_pixels", {r.roi_pixels.x, r.roi_pixels.y, r.roi_pixels.width, r.roi_pixels.height}},
              {"intrinsics", {r.intrinsics.fx, r.intrinsics.fy, r.intrinsics.cx, r.intrinsics.cy}},
              {"camera_eye", r.camera_eye},
              {"camera_rotation", r.camera_rotation},
              {"events", events}};
}

SampleRecord record_from_json(const json& j) {
  SampleRecord r;
  r.id = j.value("id", std::string("<missing id>"));
  try {
    r.split = parse_split(j.at("split").get<std::string>());
    r.rgb_path = j.at("rgb").get<std::string>();
    r.depth_path = j.at("depth").get<std::string>();
    const auto xh = j.at("x_h").get<std::array<double, 4>>();
    r.x_h = {xh[0], xh[1], xh[2], xh[3]};
    const auto& labels = j.at("labels");
    r.labels.values[0] = parse_label(labels.at(kLabelNames[0]).get<std::string>());
    // Per-type labels are optional as a group (Any-only manifests).
    r.has_type_labels = labels.size() > 1;
    if (r.has_type_labels)
      for (int k = 1; k < kLabelKinds; ++k) r.labels.values[k] = parse_label(labels.at(kLabelNames[k]).get<std::string>());
    r.seed = j.at("seed").get<std::uint64_t>();
    r.location = j.at("location").get<int>();
    r.surface_height = j.at("surface_height").get<double>();
    const auto roi = j.at("roi").get<std::array<double, 4>>();
    r.roi = {roi[0], roi[1], roi[2], roi[3]};
    const auto px = j.at("roi_pixels").get<std::array<double, 4>>();
    r.roi_pixels = {px[0], px[1], px[2], px[3]};
    const auto k = j.at("intrinsics").get<std::array<double, 4>>();
    r.intrinsics = {k[0], k[1], k[2], k[3]};
    r.camera_eye = j.at("camera_eye").get<Vec3>();
    r.camera_rotation = j.at("camera_rotation").get<std::array<Vec3, 3>>();
    if (j.contains("events")) {
      for (const auto& e : j.at("events")) {
        CollisionEvent ev;
        const auto t = e.at("type").get<std::string>();
        ev.type = t == "AO" ? CollisionType::AO
                  : t == "TO" ? CollisionType::TO
                  : t == "OO" ? CollisionType::OO
                  : t == "OD" ? CollisionType::OD
                              : throw std::invalid_argument("unknown event type '" + t + "'");
        ev.speed = e.at("speed").get<double>();
        ev.first = e.at("first").get<int>();
        ev.second = e.at("second").get<int>();
        ev.depth = e.at("depth").get<int>();
        ev.drop_height = e.value("drop_height", 0.0);
        r.events.push_back(ev);
      }
    }
  } catch (const std::exception& e) {
    throw std::runtime_error("record " + r.id + ": " + e.what());
  }
  return r;
}

LabelStatistics LabelStatistics::of(const std::vector<SampleRecord>& records) {
  LabelStatistics s;
  for (const auto& r : records)
    for (int k = 0; k < kLabelKinds; ++k)
      ++s.counts[k][static_cast<int>(r.split)][static_cast<int>(r.labels.values[k])];
  return s;
}

std::size_t LabelStatistics::split_total(Split sp) const {
  const auto& c = counts[0][static_cast<int>(sp)];
  return c[0] + c[1];
}

std::size_t LabelStatistics::total() const {
  return split_total(Split::train) + split_total(Split::val) + split_total(Split::test);
}

namespace {

std::string with_percent(std::size_t count, std::size_t total) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%zu (%.1f)", count, total ? 100.0 * count / total : 0.0);
  return buf;
}

}  // namespace

std::string LabelStatistics::table() const {
  const std::size_t all = total();
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-10s %8s %8s %8s %16s\n", "#", "Train", "Valid.", "Test", "Sum ([%])");
  out << line;
  for (int label = 0; label < 2; ++label) {
    const auto& c = counts[0];
    const std::size_t row = c[0][label] + c[1][label] + c[2][label];
    std::snprintf(line, sizeof line, "%-10s %8zu %8zu %8zu %16s\n", label == 0 ? "DC" : "NDC", c[0][label],
                  c[1][label], c[2][label], with_percent(row, all).c_str());
    out << line;
  }
  std::snprintf(line, sizeof line, "%-10s %16s %16s %16s %16s\n", "Sum ([%])",
                with_percent(split_total(Split::train), all).c_str(),
                with_percent(split_total(Split::val), all).c_str(),
                with_percent(split_total(Split::test), all).c_str(), with_percent(all, all).c_str());
  out << line;
  return out.str();
}

json LabelStatistics::to_json() const {
  json j = json::object();
  for (int k = 0; k < kLabelKinds; ++k) {
    json per = json::object();
    for (int sp = 0; sp < 3; ++sp)
      per[split_name(static_cast<Split>(sp))] = {{"DC", counts[k][sp][0]}, {"NDC", counts[k][sp][1]}};
    j[kLabelNames[k]] = per;
  }
  j["total"] = total();
  return j;
}

unsigned env_threads() {
  if (const char* v = std::getenv("PONNET_THREADS")) {
    const long n = std::strtol(v, nullptr, 10);
    if (n >= 1) return static_cast<unsigned>(n);
  }
  return 1;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

std::string sample_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return buf;
}

}  // namespace

DatasetManifest generate_dataset(const DatasetOptions& options, const GenConfig& config,
                                 const std::filesystem::path& out_dir) {
  config.validate();
  const auto counts = split_counts(options.n, options.ratios);
  std::error_code ec;
  for (const char* sub : {"rgb", "depth"}) {
    std::filesystem::create_directories(out_dir / sub, ec);
    if (ec) throw std::runtime_error("cannot create '" + (out_dir / sub).string() + "': " + ec.message());
  }

  // Random split membership, independent of the per-sample seeds.
  std::vector<std::size_t> order(options.n);
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(mix_seed(options.master_seed, 0x5b11u));
  split_rng.shuffle(std::span<std::size_t>(order));
  std::vector<Split> membership(options.n);
  for (std::size_t k = 0; k < options.n; ++k)
    membership[order[k]] = k < counts[0] ? Split::train : k < counts[0] + counts[1] ? Split::val : Split::test;

  std::vector<SampleRecord> records(options.n);
  std::vector<std::string> errors(options.n);
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < options.n; i += stride) {
      try {
        const std::uint64_t seed = sample_seed(options.master_seed, i);
        const SceneSample s = make_sample(seed, config);
        SampleRecord& r = records[i];
        r.id = sample_id(i);
        r.split = membership[i];
        r.rgb_path = "rgb/" + r.id + ".ppm";
        r.depth_path = "depth/" + r.id + ".pgm";
        r.x_h = s.x_h;
        r.labels = s.labels;
        r.seed = seed;
        r.location = s.scene.location;
        r.surface_height = s.scene.destination.height;
        r.roi = s.scene.roi;
        r.roi_pixels = s.scene.roi_pixels();
        r.intrinsics = s.scene.camera.intrinsics;
        r.camera_eye = s.scene.camera.eye;
        r.camera_rotation = s.scene.camera.rotation;
        r.events = s.events;
        write_ppm(out_dir / r.rgb_path, s.images.rgb);
        write_depth_pgm(out_dir / r.depth_path, s.images.depth);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const unsigned threads = std::max(1u, options.threads);
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    for (auto& th : pool) th.join();
  }
  for (std::size_t i = 0; i < options.n; ++i)
    if (!errors[i].empty()) throw std::runtime_error("sample " + sample_id(i) + ": " + errors[i]);

  DatasetManifest m;
  m.root = out_dir;
  m.records = std::move(records);
  m.stats = LabelStatistics::of(m.records);

  std::string lines;
  for (const auto& r : m.records) lines += record_to_json(r).dump() + "\n";
  write_text(out_dir / "manifest.jsonl", lines);
  write_text(out_dir / "stats.txt", m.stats.table());
  write_text(out_dir / "stats.json", m.stats.to_json().dump(2) + "\n");
  json cfg = config;
  cfg["master_seed"] = options.master_seed;
  cfg["n"] = options.n;
  cfg["split_ratios"] = {options.ratios.train, options.ratios.val, options.ratios.test};
  write_text(out_dir / "gen_config.json", cfg.dump(2) + "\n");
  return m;
}

}  // namespace ponnet::sim
