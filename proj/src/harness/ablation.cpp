#include "ponnet/harness/ablation.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "ponnet/harness/baseline.hpp"

namespace ponnet::harness {

using model::InputMode;
using model::Variant;

std::string GridCell::method() const {
  if (baseline) return "Plane detect.";
  return variant == Variant::full ? "PonNet" : "PonNet-" + std::string(model::variant_name(variant));
}

std::string GridCell::backbone() const {
  if (baseline) return "-";
  return variant == Variant::type1 ? "50" : "18";
}

std::string GridCell::attention() const {
  if (baseline || variant == Variant::type1 || variant == Variant::type2) return "-";
  return variant == Variant::type3 ? "S" : "M";
}

std::string GridCell::fusion() const {
  if (baseline || (variant != Variant::type4 && variant != Variant::full)) return "-";
  return variant == Variant::full ? "Y" : "N";
}

std::string GridCell::input_name() const { return baseline ? "RGBD" : model::input_mode_name(input); }

void validate_cell(const GridCell& cell) {
  if (cell.baseline) {
    if (cell.input != InputMode::rgbd) throw std::invalid_argument("the plane baseline takes RGBD input");
    return;
  }
  if ((cell.variant == Variant::type4 || cell.variant == Variant::full) && cell.input != InputMode::rgbd)
    throw std::invalid_argument(cell.method() + " requires RGBD input");
}

std::vector<GridCell> collision_grid() {
  std::vector<GridCell> grid;
  for (Variant v : {Variant::type1, Variant::type2, Variant::type3})
    for (InputMode m : {InputMode::rgb, InputMode::depth, InputMode::rgbd}) grid.push_back({false, v, m});
  grid.push_back({false, Variant::type4, InputMode::rgbd});
  grid.push_back({false, Variant::full, InputMode::rgbd});
  return grid;
}

std::vector<GridCell> default_grid() {
  auto grid = collision_grid();
  grid.insert(grid.begin(), GridCell{true, Variant::full, InputMode::rgbd});
  return grid;
}

MeanStd mean_std(const std::vector<double>& values) {
  if (values.size() < 2) throw std::invalid_argument("mean_std needs at least two values");
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size() - 1))};
}

namespace {

std::string cell_text(const std::vector<double>& values) {
  if (values.empty()) return "-";
  if (values.size() == 1) return fixed(100.0 * values[0], 2);
  const auto ms = mean_std(values);
  return fixed(100.0 * ms.mean, 2) + " +- " + fixed(100.0 * ms.std, 2);
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string render(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    width.resize(std::max(width.size(), r.size()), 0);
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::size_t total = 0;
  for (auto w : width) total += w + 3;
  std::ostringstream os;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::string line;
    for (std::size_t c = 0; c < rows[i].size(); ++c) line += (c ? " | " : "") + pad(rows[i][c], width[c]);
    while (!line.empty() && line.back() == ' ') line.pop_back();
    os << line << '\n';
    if (i == 0) os << std::string(total - 3, '-') << '\n';
  }
  return os.str();
}

AblationRow run_cell(const GridCell& cell, const Dataset& data, const AblationOptions& options, int heads,
                     const ProgressCallback& progress) {
  AblationRow row;
  row.cell = cell;
  row.accuracy.resize(static_cast<std::size_t>(heads));
  try {
    validate_cell(cell);
    const auto test = data.split(sim::Split::test);
    if (test.empty()) throw std::runtime_error("dataset has an empty test split");
    if (cell.baseline) {
      row.accuracy[0].push_back(run_baseline(data, test, options.threads).accuracy(0));
      if (progress) progress(cell.method() + ": " + fixed(100.0 * row.accuracy[0][0], 2) + "%");
      return row;
    }
    for (int t = 0; t < options.trials; ++t) {
      TrainConfig config = options.train;
      config.model.variant = cell.variant;
      config.model.input_mode = cell.input;
      config.model.heads = heads;
      if (static_cast<int>(config.model.head_loss_weights.size()) != heads) config.model.head_loss_weights.clear();
      config.seed = options.seed + static_cast<std::uint64_t>(t);
      config.checkpoint.clear();
      config.eval_threads = options.threads;
      const auto result = train(config, data);
      row.seeds.push_back(config.seed);
      for (int h = 0; h < heads; ++h) row.accuracy[h].push_back(result.test.accuracy(static_cast<std::size_t>(h)));
      if (progress)
        progress(cell.method() + " " + cell.input_name() + " seed " + std::to_string(config.seed) + ": " +
                 fixed(100.0 * result.test.accuracy(0), 2) + "%");
    }
  } catch (const std::exception& e) {
    row.error = e.what();
    if (progress) progress(cell.method() + " " + cell.input_name() + " failed: " + row.error);
  }
  return row;
}

AblationReport run_grid(const std::vector<GridCell>& grid, const Dataset& data, const AblationOptions& options,
                        int heads, const ProgressCallback& progress) {
  if (options.trials < 2) throw std::invalid_argument("ablation needs at least two trials");
  AblationReport report;
  report.trials = options.trials;
  if (heads == 1) {
    report.columns = {"Accuracy"};
  } else {
    for (const char* name : sim::kLabelNames) report.columns.emplace_back(name);
  }
  for (const auto& cell : grid) report.rows.push_back(run_cell(cell, data, options, heads, progress));
  return report;
}

}  // namespace

std::string AblationReport::table() const {
  std::vector<std::vector<std::string>> out;
  const bool per_type = columns.size() > 1;
  if (per_type) {
    out.push_back({"Method", "Input Type"});
    out[0].insert(out[0].end(), columns.begin(), columns.end());
  } else {
    out.push_back({"Method", "BB", "AB", "SA", "Input", "Accuracy"});
  }
  std::string previous;
  for (const auto& row : rows) {
    const std::string method = row.cell.method() == previous ? "" : row.cell.method();
    previous = row.cell.method();
    std::vector<std::string> line;
    if (per_type) {
      line = {method, row.cell.input_name()};
    } else {
      const bool first = !method.empty();
      line = {method, first ? row.cell.backbone() : "", first ? row.cell.attention() : "",
              first ? row.cell.fusion() : "", row.cell.input_name()};
    }
    for (std::size_t c = 0; c < columns.size(); ++c)
      line.push_back(row.ok() ? cell_text(row.accuracy[c]) : "failed");
    out.push_back(line);
  }
  return render(out);
}

nlohmann::json AblationReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json r = {{"method", row.cell.method()},
                        {"bb", row.cell.backbone()},
                        {"ab", row.cell.attention()},
                        {"sa", row.cell.fusion()},
                        {"input", row.cell.input_name()},
                        {"seeds", row.seeds}};
    if (!row.ok()) {
      r["error"] = row.error;
    } else {
      nlohmann::json cols = nlohmann::json::object();
      for (std::size_t c = 0; c < columns.size(); ++c) {
        nlohmann::json col = {{"trials", row.accuracy[c]}};
        if (row.accuracy[c].size() >= 2) {
          const auto ms = mean_std(row.accuracy[c]);
          col["mean"] = ms.mean;
          col["std"] = ms.std;
        } else if (row.accuracy[c].size() == 1) {
          col["mean"] = row.accuracy[c][0];
        }
        cols[columns[c]] = col;
      }
      r["accuracy"] = cols;
    }
    rows_json.push_back(r);
  }
  return {{"schema_version", kMetricsSchemaVersion}, {"trials", trials}, {"columns", columns}, {"rows", rows_json}};
}

AblationReport run_ablation(const std::vector<GridCell>& grid, const Dataset& data, const AblationOptions& options,
                            const ProgressCallback& progress) {
  return run_grid(grid, data, options, 1, progress);
}

AblationReport run_collision_types(const std::vector<GridCell>& grid, const Dataset& data,
                                   const AblationOptions& options, const ProgressCallback& progress) {
  if (!data.has_type_labels()) throw DatasetError("collision-type mode needs per-type labels in every record");
  for (const auto& cell : grid)
    if (cell.baseline) throw std::invalid_argument("the plane baseline has no collision-type mode");
  return run_grid(grid, data, options, sim::kLabelKinds, progress);
}

}  // namespace ponnet::harness
