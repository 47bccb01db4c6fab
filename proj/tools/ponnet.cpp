// Command-line driver: dataset generation, training, evaluation, ablations,
// attention overlays, gradient checks and the plane baseline.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ponnet/harness/ablation.hpp"
#include "ponnet/harness/baseline.hpp"
#include "ponnet/harness/gradcheck_suite.hpp"
#include "ponnet/harness/overlay.hpp"
#include "ponnet/harness/train.hpp"

namespace fs = std::filesystem;
using namespace ponnet;
using namespace ponnet::harness;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out = ".";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Random seed");
  cmd->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "Output directory")->capture_default_str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

void progress_line(const std::string& line) { std::cerr << line << std::endl; }

// Options shared by the training-based subcommands, applied on top of the
// config file.
struct TrainFlags {
  std::optional<int> epochs, batch;
  std::optional<std::string> variant, input, precision;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--epochs", f.epochs, "Training epochs");
  cmd->add_option("--batch", f.batch, "Mini-batch size");
  cmd->add_option("--precision", f.precision, "float32 or float64");
}

TrainConfig train_config(const Common& c, const TrainFlags& f) {
  TrainConfig t = c.config.empty() ? TrainConfig{} : load_train_config(c.config);
  if (c.seed) t.seed = *c.seed;
  if (f.epochs) t.epochs = *f.epochs;
  if (f.batch) t.batch_size = *f.batch;
  if (f.variant) t.model.variant = model::parse_variant(*f.variant);
  if (f.input) t.model.input_mode = model::parse_input_mode(*f.input);
  if (f.precision) t.precision = parse_precision(*f.precision);
  t.eval_threads = sim::env_threads();
  t.validate();
  return t;
}

Dataset load(const std::string& data, int side) {
  LoadOptions o;
  o.side = side;
  return load_dataset(data, o);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ponnet: damaging-collision prediction for object placing"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  // gen-data
  Common gen_c;
  std::size_t gen_n = 1200;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic RGBD dataset with physics labels");
  add_common(gen, gen_c);
  gen->add_option("--n", gen_n, "Number of samples")->capture_default_str()->check(CLI::PositiveNumber);

  // train
  Common train_c;
  TrainFlags train_f;
  std::string train_data;
  auto* tr = app.add_subcommand("train", "Train one model and report validation-selected test metrics");
  add_common(tr, train_c);
  add_train_flags(tr, train_f);
  tr->add_option("--data", train_data, "Dataset directory or manifest")->required();
  tr->add_option("--variant", train_f.variant, "type1, type2, type3, type4 or full");
  tr->add_option("--input", train_f.input, "RGB, D or RGBD");

  // eval
  Common eval_c;
  std::string eval_data, eval_ckpt, eval_split = "test", eval_precision = "float32";
  int eval_heads = 0;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on one split (confusion matrices)");
  add_common(ev, eval_c);
  ev->add_option("--data", eval_data, "Dataset directory or manifest")->required();
  ev->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_option("--split", eval_split, "train, val or test")->capture_default_str();
  ev->add_option("--heads", eval_heads, "Expected head count (0 = any)");
  ev->add_option("--precision", eval_precision, "float32 or float64")->capture_default_str();

  // ablate / collision-types
  Common abl_c, col_c;
  TrainFlags abl_f, col_f;
  std::string abl_data, col_data;
  int abl_trials = 5, col_trials = 5;
  auto* ab = app.add_subcommand("ablate", "Variant x input ablation over several trials");
  add_common(ab, abl_c);
  add_train_flags(ab, abl_f);
  ab->add_option("--data", abl_data, "Dataset directory or manifest")->required();
  ab->add_option("--trials", abl_trials, "Trials per cell (>= 2)")->capture_default_str();
  auto* ct = app.add_subcommand("collision-types", "Five-head training with per-type accuracies");
  add_common(ct, col_c);
  add_train_flags(ct, col_f);
  ct->add_option("--data", col_data, "Dataset directory or manifest")->required();
  ct->add_option("--trials", col_trials, "Trials per cell (>= 2)")->capture_default_str();

  // overlay
  Common ov_c;
  std::string ov_data, ov_ckpt, ov_sample, ov_precision = "float32";
  int ov_display = 128;
  auto* ov = app.add_subcommand("overlay", "Export attention overlays for one sample");
  add_common(ov, ov_c);
  ov->add_option("--data", ov_data, "Dataset directory or manifest")->required();
  ov->add_option("--checkpoint", ov_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  ov->add_option("--sample", ov_sample, "Sample id or index")->required();
  ov->add_option("--display", ov_display, "Output side length in pixels")->capture_default_str();
  ov->add_option("--precision", ov_precision, "float32 or float64")->capture_default_str();

  // gradcheck
  Common gc_c;
  int gc_seeds = 10;
  bool gc_no_model = false;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference checks of every operator and the micro model");
  add_common(gc, gc_c);
  gc->add_option("--seeds", gc_seeds, "Seeds per case")->capture_default_str();
  gc->add_flag("--no-model", gc_no_model, "Operators only");

  // baseline
  Common bl_c;
  std::string bl_data, bl_split = "test";
  auto* bl = app.add_subcommand("baseline", "Plane-detection baseline on one split");
  add_common(bl, bl_c);
  bl->add_option("--data", bl_data, "Dataset directory or manifest")->required();
  bl->add_option("--split", bl_split, "train, val or test")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    const CLI::App* failed = &app;
    for (const auto* sub : app.get_subcommands()) failed = sub;
    std::cerr << "error: " << e.what() << "\n\n" << failed->help();
    return 2;
  }

  try {
    const unsigned threads = sim::env_threads();
    if (*gen) {
      sim::GenConfig config = gen_c.config.empty() ? sim::GenConfig::defaults() : sim::load_gen_config(gen_c.config);
      sim::DatasetOptions o;
      o.n = gen_n;
      o.master_seed = gen_c.seed.value_or(1);
      o.threads = threads;
      const auto manifest = sim::generate_dataset(o, config, gen_c.out);
      std::cout << manifest.stats.table();
      return 0;
    }
    if (*tr) {
      auto config = train_config(train_c, train_f);
      const fs::path out = train_c.out;
      fs::create_directories(out);
      config.checkpoint = out / "checkpoint.ckpt";
      const auto data = load(train_data, config.model.input_side);
      const auto result = train(config, data, [](const EpochLog& e) {
        char line[128];
        std::snprintf(line, sizeof line, "epoch %3d  loss %.5f  val acc %.4f", e.epoch, e.train_loss, e.val_accuracy);
        progress_line(line);
      });
      write_json(out / "train_config.json", to_json(config));
      write_json(out / "metrics.json", result.to_json());
      std::string report = "best epoch " + std::to_string(result.best_epoch) + ", loss reduction " +
                           fixed(100.0 * result.loss_reduction(), 2) + "%\n\n" + confusion_table(result.test);
      write_text(out / "confusion.txt", report);
      std::cout << report;
      return 0;
    }
    if (*ev) {
      const auto precision = parse_precision(eval_precision);
      const auto probe = model::PonNet<double>::load(eval_ckpt).config();
      const auto data = load(eval_data, probe.input_side);
      const auto metrics =
          evaluate_checkpoint(eval_ckpt, data, sim::parse_split(eval_split), eval_heads, precision, threads);
      const fs::path out = eval_c.out;
      write_json(out / "metrics.json",
                 {{"schema_version", kMetricsSchemaVersion}, {"split", eval_split}, {"metrics", metrics.to_json()}});
      std::string text;
      for (std::size_t h = 0; h < metrics.heads.size(); ++h) {
        if (metrics.heads.size() > 1) text += std::string(sim::kLabelNames[h]) + "\n";
        text += confusion_table(metrics, h) + "\n";
      }
      write_text(out / "confusion.txt", text);
      std::cout << text;
      return 0;
    }
    if (*ab || *ct) {
      const bool types = ct->parsed();
      const Common& c = types ? col_c : abl_c;
      AblationOptions o;
      o.train = train_config(c, types ? col_f : abl_f);
      o.trials = types ? col_trials : abl_trials;
      o.seed = c.seed.value_or(o.train.seed);
      o.threads = threads;
      const auto data = load(types ? col_data : abl_data, o.train.model.input_side);
      const auto report = types ? run_collision_types(collision_grid(), data, o, progress_line)
                                : run_ablation(default_grid(), data, o, progress_line);
      const fs::path out = c.out;
      const std::string stem = types ? "collision_types" : "ablation";
      write_json(out / (stem + ".json"), report.to_json());
      write_text(out / (stem + ".txt"), report.table());
      std::cout << report.table();
      bool ok = true;
      for (const auto& row : report.rows) ok = ok && row.ok();
      return ok ? 0 : 1;
    }
    if (*ov) {
      const auto probe = model::PonNet<double>::load(ov_ckpt).config();
      const auto data = load(ov_data, probe.input_side);
      std::size_t index = data.samples.size();
      for (std::size_t i = 0; i < data.samples.size(); ++i)
        if (data.samples[i].record.id == ov_sample) index = i;
      if (index == data.samples.size()) {
        try {
          std::size_t used = 0;
          index = std::stoul(ov_sample, &used);
          if (used != ov_sample.size()) throw std::invalid_argument(ov_sample);
        } catch (const std::exception&) {
          throw std::runtime_error("no sample with id or index '" + ov_sample + "'");
        }
      }
      const auto files =
          export_attention_overlay(ov_ckpt, data, index, ov_c.out, ov_display, parse_precision(ov_precision));
      for (const auto& p : {files.input, files.rgb_overlay, files.depth_overlay, files.panel})
        if (!p.empty()) std::cout << p.string() << '\n';
      return 0;
    }
    if (*gc) {
      GradCheckSuiteOptions o;
      if (!gc_c.config.empty()) {
        std::ifstream f(gc_c.config);
        const auto j = nlohmann::json::parse(f);
        o.seeds = j.value("seeds", o.seeds);
        o.threshold = j.value("threshold", o.threshold);
      }
      if (gc->count("--seeds")) o.seeds = gc_seeds;
      o.first_seed = gc_c.seed.value_or(o.first_seed);
      o.include_model = !gc_no_model;
      const auto result = run_gradcheck_suite(o);
      std::cout << result.summary();
      if (gc->count("--out")) write_json(fs::path(gc_c.out) / "gradcheck.json", result.to_json());
      std::cout << (result.passed() ? "gradcheck passed" : "gradcheck FAILED") << ", max rel err "
                << result.max_rel_error() << '\n';
      return result.passed() ? 0 : 1;
    }
    if (*bl) {
      const auto data = load(bl_data, 32);
      const auto metrics = run_baseline(data, data.split(sim::parse_split(bl_split)), threads);
      const fs::path out = bl_c.out;
      write_json(out / "baseline.json",
                 {{"schema_version", kMetricsSchemaVersion}, {"split", bl_split}, {"metrics", metrics.to_json()}});
      const auto text = confusion_table(metrics);
      write_text(out / "baseline.txt", text);
      std::cout << text;
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
