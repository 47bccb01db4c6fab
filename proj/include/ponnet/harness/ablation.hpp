#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ponnet/harness/train.hpp"

namespace ponnet::harness {

/// One row of the ablation grid: a trained variant or the plane baseline.
struct GridCell {
  bool baseline = false;
  model::Variant variant = model::Variant::full;
  model::InputMode input = model::InputMode::rgbd;

  std::string method() const;  // "Plane detect.", "PonNet-type1", ..., "PonNet"
  std::string backbone() const;   // BB: "-", "50" or "18"
  std::string attention() const;  // AB: "-", "S" or "M"
  std::string fusion() const;     // SA: "-", "N" or "Y"
  std::string input_name() const;
  bool operator==(const GridCell&) const = default;
};

/// Throws std::invalid_argument for cells outside the supported grid
/// (type4/full need RGBD; the baseline is RGBD only).
void validate_cell(const GridCell& cell);

/// Baseline, type1/2/3 x {RGB, D, RGBD}, type4, full.
std::vector<GridCell> default_grid();
/// The default grid without the baseline (collision-type mode).
std::vector<GridCell> collision_grid();

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1)
};
/// Requires at least two values.
MeanStd mean_std(const std::vector<double>& values);

struct AblationRow {
  GridCell cell;
  std::vector<std::uint64_t> seeds;           // empty for the baseline
  std::vector<std::vector<double>> accuracy;  // [column][trial]
  std::string error;                          // non-empty when the cell failed

  bool ok() const { return error.empty(); }
};

struct AblationReport {
  std::vector<std::string> columns;  // {"Accuracy"} or {"Any", "AO", "TO", "OO", "OD"}
  int trials = 0;
  std::vector<AblationRow> rows;

  /// Aligned text. Single column: Method, BB, AB, SA, Input, Accuracy.
  /// Per-type columns: Method, Input Type, Any, AO, TO, OO, OD. Accuracies in
  /// percent as mean +- std; the baseline shows no std.
  std::string table() const;
  nlohmann::json to_json() const;
};

struct AblationOptions {
  TrainConfig train;  // model widths, epochs, optimizer; variant/input/seed are set per cell
  int trials = 5;
  std::uint64_t seed = 1;  // trial t uses seed + t
  unsigned threads = 1;    // baseline and evaluation workers
};

using ProgressCallback = std::function<void(const std::string&)>;

/// Trains and tests every cell over the trial seeds. A failing cell records
/// its error and the remaining cells still run.
AblationReport run_ablation(const std::vector<GridCell>& grid, const Dataset& data, const AblationOptions& options,
                            const ProgressCallback& progress = {});

/// Five-head mode: every cell trains with one 2-way head per label kind and
/// reports per-type test accuracy. Rejects baseline cells and datasets
/// without per-type labels.
AblationReport run_collision_types(const std::vector<GridCell>& grid, const Dataset& data,
                                   const AblationOptions& options, const ProgressCallback& progress = {});

}  // namespace ponnet::harness
