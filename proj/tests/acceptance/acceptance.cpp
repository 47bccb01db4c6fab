// Acceptance runner: one PASS/FAIL line per criterion, exit status 0 only
// when every selected criterion passes. Usage: acceptance [criterion...]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hand_scenes.hpp"
#include "model_fixtures.hpp"
#include "oracles.hpp"
#include "ponnet/depthproc/depthproc.hpp"
#include "ponnet/harness/ablation.hpp"
#include "ponnet/harness/gradcheck_suite.hpp"
#include "ponnet/planedet/planedet.hpp"
#include "ponnet/placesim/render.hpp"

using namespace ponnet;
using namespace ponnet::harness;
namespace fs = std::filesystem;

namespace {

// Tolerances and sizes pinned by the acceptance criteria.
constexpr double kGradTolerance = 1e-4;
constexpr int kGradSeeds = 10;
constexpr double kGradSeconds = 120.0;
constexpr double kAlphaSumTolerance = 1e-12;
constexpr double kOracleCeTolerance = 1e-10;
constexpr double kPhysicsSeconds = 60.0;
constexpr int kColorTolerance = 1;
constexpr std::size_t kLearningSamples = 2000;
constexpr std::uint64_t kLearningDataSeed = 7;
constexpr int kLearningEpochs = 60;
constexpr int kLearningSeeds = 5;
constexpr double kMinLossReduction = 0.80;
constexpr double kMinAccuracy = 0.70;
constexpr double kLearningSeconds = 30.0 * 60.0;
constexpr int kBaselineScenes = 200;
constexpr double kBaselineRate = 0.95;
constexpr int kPerturbationPairs = 100;
constexpr int kTrials = 5;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path work_dir() {
  static const fs::path dir = [] {
    const auto d = fs::temp_directory_path() / "ponnet_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

// ---------------------------------------------------------------- 1

Outcome gradient_integrity() {
  const auto t0 = Clock::now();
  GradCheckSuiteOptions o;
  o.seeds = kGradSeeds;
  o.threshold = kGradTolerance;
  const auto r = run_gradcheck_suite(o);
  const double secs = seconds_since(t0);
  int micro_seeds = 0;
  for (const auto& c : r.cases) micro_seeds += c.name == "model/micro-full" ? 1 : 0;
  std::set<std::string> names;
  for (const auto& c : r.cases) names.insert(c.name);
  const bool pass = r.passed() && micro_seeds >= kGradSeeds && secs < kGradSeconds;
  std::string failed;
  for (const auto& c : r.cases)
    if (!c.passed) failed += " " + c.name + "@" + std::to_string(c.seed);
  return {pass, std::to_string(names.size()) + " cases x " + std::to_string(kGradSeeds) +
                    " seeds, max rel err " + sci(r.max_rel_error()) + " (< " + sci(kGradTolerance) + "), " +
                    sci(secs) + " s (< 120 s)" + (failed.empty() ? "" : "; failed:" + failed)};
}

// ---------------------------------------------------------------- 2

Outcome equation_identities() {
  using grad::Graph;
  using grad::Tensor;
  std::vector<std::string> bad;

  // (1 + a) f with a = 0 returns f bit for bit.
  {
    Graph<double> g;
    const auto f = Tensor<double>::constant({2, 4, 3, 3}, oracle::random_values(72, 1, -5.0, 5.0));
    const auto a = Tensor<double>::constant({2, 1, 3, 3}, 0.0);
    const auto w = grad::attention_modulate(g, f, a);
    for (std::size_t i = 0; i < f.size(); ++i)
      if (w[i] != f[i]) bad.push_back("a=0 modulation");
  }
  // Fusion weights sum to one on a real forward pass.
  double worst_alpha = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto c = model::ModelConfig::desk();
    c.seed = seed;
    model::PonNet<double> net(c);
    Graph<double> g;
    const auto r = net.forward(g, fixture::random_batch<double>(8, 32, seed * 11), grad::Mode::eval);
    for (std::size_t n = 0; n < 8; ++n)
      worst_alpha = std::max(worst_alpha, std::abs(r.alpha[n * 2] + r.alpha[n * 2 + 1] - 1.0));
  }
  if (!(worst_alpha <= kAlphaSumTolerance)) bad.push_back("alpha sum");
  // Identical stream outputs fuse to themselves.
  double worst_m = 0.0;
  {
    Graph<double> g;
    const auto o = Tensor<double>::constant({6, 5}, oracle::random_values(30, 3));
    const auto alpha = grad::softmax_rows(g, Tensor<double>::constant({6, 2}, oracle::random_values(12, 4, -4, 4)));
    const auto m = grad::convex_combine(g, alpha, {o, o});
    for (std::size_t i = 0; i < o.size(); ++i) worst_m = std::max(worst_m, std::abs(m[i] - o[i]));
  }
  if (!(worst_m <= kAlphaSumTolerance)) bad.push_back("o_r = o_d");
  // lambda_p = 0 leaves exactly the branch terms; the loss matches a naive oracle.
  double worst_ce = 0.0;
  {
    auto c = model::ModelConfig::desk();
    c.lambda_p = 0.0;
    model::PonNet<double> net(c);
    const std::size_t n = 6;
    Graph<double> g;
    const auto r = net.forward(g, fixture::random_batch<double>(n, 32, 51), grad::Mode::train);
    const auto labels = fixture::random_labels(n, 1, 52);
    const auto y = grad::one_hot<double>(labels[0], 2);
    const std::vector<double> onehot(y.values().begin(), y.values().end());
    const double total = net.total_loss(g, r, labels, grad::Reduction::sum).item();
    const double gr = grad::softmax_cross_entropy(g, r.streams[0].branch_logits, y).item();
    const double gd = grad::softmax_cross_entropy(g, r.streams[1].branch_logits, y).item();
    if (total != c.lambda_r * gr + c.lambda_d * gd) bad.push_back("lambda_p = 0 reduction");

    model::PonNet<double> full(model::ModelConfig::desk());
    Graph<double> g2;
    const auto r2 = full.forward(g2, fixture::random_batch<double>(n, 32, 53), grad::Mode::train);
    auto vec = [](const Tensor<double>& t) { return std::vector<double>(t.values().begin(), t.values().end()); };
    const double oracle_total = oracle::cross_entropy(vec(r2.streams[0].branch_logits), onehot, n, 2) +
                                oracle::cross_entropy(vec(r2.streams[1].branch_logits), onehot, n, 2) +
                                0.3 * oracle::cross_entropy(vec(r2.logits), onehot, n, 2);
    worst_ce = std::abs(full.total_loss(g2, r2, labels, grad::Reduction::sum).item() - oracle_total);
    if (!(worst_ce <= kOracleCeTolerance)) bad.push_back("cross-entropy oracle");
  }
  std::string detail = "a=0 exact, |sum alpha - 1| " + sci(worst_alpha) + ", |m - o| " + sci(worst_m) +
                       ", lambda_p=0 exact, |J - oracle| " + sci(worst_ce);
  for (const auto& b : bad) detail += "; FAILED " + b;
  return {bad.empty(), detail};
}

// ---------------------------------------------------------------- 3

// Labels of the hand scenes as a metrics document.
std::string physics_metrics(int& agree, int& total) {
  const auto cases = hand::oracle_cases();
  nlohmann::json rows = nlohmann::json::array();
  agree = 0;
  total = static_cast<int>(cases.size());
  for (const auto& c : cases) {
    const auto events = sim::simulate_placing(c.scene, c.motion);
    const auto labels = sim::label_sample(events, 0.1);
    agree += labels == c.expected ? 1 : 0;
    nlohmann::json speeds = nlohmann::json::array();
    for (const auto& e : events) speeds.push_back({{"type", sim::collision_name(e.type)}, {"speed", e.speed}});
    rows.push_back({{"name", c.name}, {"label", sim::label_name(labels.any())}, {"events", speeds}});
  }
  return nlohmann::json{{"agree", agree}, {"total", total}, {"cases", rows}}.dump(2) + "\n";
}

std::string physics_first;

Outcome physics_oracle() {
  const auto t0 = Clock::now();
  int agree = 0, total = 0;
  physics_first = physics_metrics(agree, total);
  write_file(work_dir() / "physics" / "run1.json", physics_first);
  const double secs = seconds_since(t0);
  return {total == 100 && agree == total && secs < kPhysicsSeconds,
          std::to_string(agree) + "/" + std::to_string(total) + " labels agree, " + sci(secs) + " s (< 60 s)"};
}

// ---------------------------------------------------------------- 4

Outcome colorization() {
  const depth::CameraIntrinsics k{57.6, 57.6, 31.5, 31.5};
  auto plane = [&](double z0, double slope_x) {
    DepthImage d(64, 64, 1);
    for (int v = 0; v < 64; ++v)
      for (int u = 0; u < 64; ++u) d.at(u, v) = static_cast<float>(z0 / (1.0 - slope_x * (u - k.cx) / k.fx));
    return d;
  };
  int worst_flat = 0, worst_tilt = 0;
  const auto flat = depth::colorize_depth(plane(0.8, 0.0), k);
  const auto tilt = depth::colorize_depth(plane(1.0, 1.0), k);
  const int expect_flat[3] = {128, 128, 255}, expect_tilt[3] = {37, 128, 218};
  for (int y = 1; y < 63; ++y)
    for (int x = 1; x < 63; ++x)
      for (int c = 0; c < 3; ++c) {
        worst_flat = std::max(worst_flat, std::abs(flat.at(x, y, c) - expect_flat[c]));
        worst_tilt = std::max(worst_tilt, std::abs(tilt.at(x, y, c) - expect_tilt[c]));
      }
  return {worst_flat == 0 && worst_tilt <= kColorTolerance,
          "fronto-parallel max deviation " + std::to_string(worst_flat) + " (exact), 45 deg max deviation " +
              std::to_string(worst_tilt) + " (<= 1)"};
}

// ---------------------------------------------------------------- 5

struct LearningRun {
  std::vector<std::string> metrics;  // JSON per seed
  std::vector<double> accuracy, reduction;
  double majority = 0.0;
  double seconds = 0.0;
};

TrainConfig learning_config(std::uint64_t seed) {
  TrainConfig c;
  c.model = model::ModelConfig::desk();
  c.model.variant = model::Variant::full;
  c.model.input_mode = model::InputMode::rgbd;
  c.epochs = kLearningEpochs;
  c.seed = seed;
  // The default betas (0.99, 0.9) diverge at this learning rate on this
  // dataset; the learning run uses the conventional pair.
  c.optimizer.beta1 = 0.9;
  c.optimizer.beta2 = 0.999;
  c.eval_threads = sim::env_threads();
  return c;
}

LearningRun learning_run(const std::string& tag) {
  LearningRun run;
  const auto t0 = Clock::now();
  const auto dir = work_dir() / ("learning_" + tag);
  sim::DatasetOptions o;
  o.n = kLearningSamples;
  o.master_seed = kLearningDataSeed;
  o.threads = sim::env_threads();
  sim::generate_dataset(o, sim::GenConfig::defaults(), dir / "data");
  const auto data = load_dataset(dir / "data");
  const auto test = data.split(sim::Split::test);
  std::size_t dc = 0;
  for (auto i : test) dc += data.samples[i].record.labels.any() == sim::Label::DC ? 1 : 0;
  run.majority = static_cast<double>(std::max(dc, test.size() - dc)) / static_cast<double>(test.size());
  for (int s = 1; s <= kLearningSeeds; ++s) {
    const auto r = train(learning_config(static_cast<std::uint64_t>(s)), data);
    run.metrics.push_back(r.to_json().dump(2) + "\n");
    write_file(dir / ("seed" + std::to_string(s) + ".json"), run.metrics.back());
    run.accuracy.push_back(r.test.accuracy());
    run.reduction.push_back(r.loss_reduction());
    std::cerr << "  learning[" << tag << "] seed " << s << ": test acc " << fixed(r.test.accuracy(), 4)
              << ", loss reduction " << fixed(r.loss_reduction(), 4) << ", best epoch " << r.best_epoch << std::endl;
  }
  run.seconds = seconds_since(t0);
  return run;
}

LearningRun learning_first;

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

Outcome learning() {
  learning_first = learning_run("run1");
  const double acc = mean_of(learning_first.accuracy), red = mean_of(learning_first.reduction);
  std::string per;
  for (std::size_t i = 0; i < learning_first.accuracy.size(); ++i)
    per += (i ? " " : "") + fixed(learning_first.accuracy[i], 3);
  const bool pass = red >= kMinLossReduction && acc >= kMinAccuracy && acc > learning_first.majority &&
                    learning_first.seconds < kLearningSeconds;
  return {pass, "mean loss reduction " + fixed(100 * red, 2) + "% (>= 80%), mean test acc " + fixed(100 * acc, 2) +
                    "% (>= 70%, > majority " + fixed(100 * learning_first.majority, 2) + "%), per seed [" + per +
                    "], " + fixed(learning_first.seconds / 60.0, 1) + " min (< 30 min)"};
}

// ---------------------------------------------------------------- 6

Outcome baseline_behavior() {
  const auto cfg = sim::GenConfig::defaults();
  auto predict = [&](const sim::Scene& s, const plane::PlacementQuery& q) {
    return plane::predict_from_depth(sim::render(s, cfg).depth, q);
  };
  sim::SceneOptions empty_opts, full_opts;
  empty_opts.obstacle_count = 0;
  full_opts.occupy_roi = true;
  int empty_ndc = 0, full_dc = 0;
  for (int i = 0; i < kBaselineScenes; ++i) {
    const auto e = sim::generate_scene(700000 + i, cfg, empty_opts);
    empty_ndc += predict(e, plane::query_for(e)) == sim::Label::NDC ? 1 : 0;
    const auto f = sim::generate_scene(800000 + i, cfg, full_opts);
    full_dc += predict(f, plane::query_for(f)) == sim::Label::DC ? 1 : 0;
  }
  // Half the pairs add one obstacle, half enlarge the footprint; a DC
  // prediction must survive the perturbation.
  int pairs = 0, violations = 0;
  std::uint64_t seed = 900000;
  while (pairs < kPerturbationPairs / 2) {
    const auto s = sim::generate_scene(seed++, cfg);
    if (s.obstacles.empty()) continue;
    auto fewer = s;
    fewer.obstacles.pop_back();
    ++pairs;
    if (predict(fewer, plane::query_for(fewer)) == sim::Label::DC && predict(s, plane::query_for(s)) != sim::Label::DC)
      ++violations;
  }
  while (pairs < kPerturbationPairs) {
    const auto s = sim::generate_scene(seed++, cfg);
    const auto q = plane::query_for(s);
    auto big = q;
    big.footprint_width *= 1.4;
    big.footprint_length *= 1.4;
    const auto d = sim::render(s, cfg).depth;
    ++pairs;
    if (plane::predict_from_depth(d, q) == sim::Label::DC && plane::predict_from_depth(d, big) != sim::Label::DC)
      ++violations;
  }
  const bool pass = empty_ndc >= kBaselineRate * kBaselineScenes && full_dc >= kBaselineRate * kBaselineScenes &&
                    violations == 0;
  return {pass, "empty NDC " + std::to_string(empty_ndc) + "/200, occupied DC " + std::to_string(full_dc) +
                    "/200 (>= 95%), monotonicity violations " + std::to_string(violations) + "/" +
                    std::to_string(pairs)};
}

// ---------------------------------------------------------------- 7

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  for (std::string cell; std::getline(in, cell, '|');) {
    const auto b = cell.find_first_not_of(' ');
    const auto e = cell.find_last_not_of(' ');
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  return out;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

bool is_mean_std(const std::string& s) {
  double a = 0, b = 0;
  char tail = 0;
  return std::sscanf(s.c_str(), "%lf +- %lf%c", &a, &b, &tail) == 2;
}

bool is_number(const std::string& s) {
  double a = 0;
  char tail = 0;
  return std::sscanf(s.c_str(), "%lf%c", &a, &tail) == 1;
}

Outcome reporting_fidelity() {
  std::vector<std::string> bad;
  const auto dir = work_dir() / "reporting";
  sim::DatasetOptions o;
  o.n = 120;
  o.master_seed = 3;
  sim::generate_dataset(o, sim::GenConfig::defaults(), dir / "data");
  const auto data = load_dataset(dir / "data");

  AblationOptions ab;
  ab.train.epochs = 1;
  ab.train.batch_size = 16;
  ab.trials = kTrials;
  ab.seed = 1;

  // Table 3 layout.
  const auto grid = default_grid();
  const auto table3 = run_ablation(grid, data, ab);
  write_file(dir / "ablation.txt", table3.table());
  {
    const auto lines = split_lines(table3.table());
    if (lines.size() != grid.size() + 2) bad.push_back("table 3 row count");
    if (split_cells(lines.at(0)) != std::vector<std::string>{"Method", "BB", "AB", "SA", "Input", "Accuracy"})
      bad.push_back("table 3 header");
    const std::vector<std::string> methods{"Plane detect.", "PonNet-type1", "", "", "PonNet-type2", "", "",
                                           "PonNet-type3", "", "", "PonNet-type4", "PonNet"};
    const std::vector<std::string> inputs{"RGBD", "RGB", "D", "RGBD", "RGB", "D", "RGBD",
                                          "RGB", "D", "RGBD", "RGBD", "RGBD"};
    for (std::size_t r = 0; r < grid.size() && r + 2 < lines.size(); ++r) {
      const auto cells = split_cells(lines[r + 2]);
      if (cells.size() != 6 || cells[0] != methods[r] || cells[4] != inputs[r]) bad.push_back("table 3 row " + std::to_string(r));
      else if (r == 0 ? !is_number(cells[5]) : !is_mean_std(cells[5])) bad.push_back("table 3 accuracy " + std::to_string(r));
    }
    const auto j = table3.to_json();
    for (std::size_t r = 1; r < grid.size(); ++r) {
      const auto& col = j["rows"][r]["accuracy"]["Accuracy"];
      const auto trials = col["trials"].get<std::vector<double>>();
      if (trials.size() != static_cast<std::size_t>(kTrials)) bad.push_back("trial count");
      else {
        const auto ms = mean_std(trials);
        if (std::abs(ms.mean - col["mean"].get<double>()) > 1e-12 || std::abs(ms.std - col["std"].get<double>()) > 1e-12)
          bad.push_back("mean/std");
      }
    }
  }

  // Table 4 layout from a trained checkpoint.
  {
    auto tc = ab.train;
    tc.checkpoint = dir / "full.ckpt";
    train(tc, data);
    const auto m = evaluate_checkpoint(tc.checkpoint, data, sim::Split::test);
    const auto text = confusion_table(m);
    write_file(dir / "confusion.txt", text);
    const auto lines = split_lines(text);
    if (lines.size() != 7 || split_cells(lines[0]) != std::vector<std::string>{"y \\ y^", "Total", "RGB Att.", "Depth Att."})
      bad.push_back("table 4 header");
    std::size_t sum = 0;
    for (int row = 0; row < 2 && lines.size() == 7; ++row) {
      const auto cells = split_cells(lines[3 + row]);
      if (cells.size() != 4 || cells[0] != (row == 0 ? "DC" : "NDC")) bad.push_back("table 4 rows");
      for (std::size_t g = 1; g < cells.size(); ++g) {
        std::istringstream in(cells[g]);
        std::size_t a = 0, b = 0;
        if (!(in >> a >> b)) bad.push_back("table 4 cell");
        if (g == 1) sum += a + b;
      }
    }
    if (sum != data.split(sim::Split::test).size()) bad.push_back("table 4 total");
  }

  // Table 5 layout.
  const auto table5 = run_collision_types(collision_grid(), data, ab);
  write_file(dir / "collision_types.txt", table5.table());
  {
    const auto lines = split_lines(table5.table());
    if (lines.size() != collision_grid().size() + 2) bad.push_back("table 5 row count");
    if (split_cells(lines.at(0)) != std::vector<std::string>{"Method", "Input Type", "Any", "AO", "TO", "OO", "OD"})
      bad.push_back("table 5 header");
    for (std::size_t r = 2; r < lines.size(); ++r) {
      const auto cells = split_cells(lines[r]);
      if (cells.size() != 7) {
        bad.push_back("table 5 row width");
        continue;
      }
      for (std::size_t c = 2; c < 7; ++c)
        if (!is_mean_std(cells[c])) bad.push_back("table 5 cell");
    }
  }
  std::string detail = "Table 3: " + std::to_string(table3.rows.size()) + " rows x 6 columns, Table 4: 2x3 groups, "
                       "Table 5: " + std::to_string(table5.rows.size()) + " rows x 5 type columns";
  for (const auto& b : bad) detail += "; FAILED " + b;
  return {bad.empty(), detail};
}

// ---------------------------------------------------------------- 8

Outcome determinism() {
  bool same_physics = true, same_learning = true;
  if (physics_first.empty()) physics_oracle();
  if (learning_first.metrics.empty()) learning();
  int agree = 0, total = 0;
  const auto physics_again = physics_metrics(agree, total);
  write_file(work_dir() / "physics" / "run2.json", physics_again);
  same_physics = slurp(work_dir() / "physics" / "run1.json") == slurp(work_dir() / "physics" / "run2.json");
  const auto again = learning_run("run2");
  std::size_t identical = 0;
  for (int s = 1; s <= kLearningSeeds; ++s) {
    const auto name = "seed" + std::to_string(s) + ".json";
    if (slurp(work_dir() / "learning_run1" / name) == slurp(work_dir() / "learning_run2" / name)) ++identical;
  }
  same_learning = identical == static_cast<std::size_t>(kLearningSeeds) && !again.metrics.empty();
  const bool same_data = slurp(work_dir() / "learning_run1" / "data" / "manifest.jsonl") ==
                         slurp(work_dir() / "learning_run2" / "data" / "manifest.jsonl");
  return {same_physics && same_learning && same_data,
          std::string("physics metrics ") + (same_physics ? "identical" : "DIFFER") + ", learning metrics " +
              std::to_string(identical) + "/" + std::to_string(kLearningSeeds) + " identical, dataset manifest " +
              (same_data ? "identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient integrity", gradient_integrity},
      {"equation identities", equation_identities},
      {"physics oracle agreement", physics_oracle},
      {"depth colorization", colorization},
      {"learning", learning},
      {"plane baseline behavior", baseline_behavior},
      {"reporting fidelity", reporting_fidelity},
      {"determinism", determinism}};
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  bool all = true;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome out;
    try {
      out = criteria[k].second();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    all = all && out.pass;
    std::cout << (out.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[k].first
              << "): " << out.detail << std::endl;
  }
  return all ? 0 : 1;
}
