#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "ponnet/gradcore/adam.hpp"
#include "ponnet/harness/metrics.hpp"

namespace ponnet::harness {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Precision { f32, f64 };
const char* precision_name(Precision p);
Precision parse_precision(const std::string& text);

struct TrainConfig {
  model::ModelConfig model = model::ModelConfig::desk();
  int epochs = 60;
  int batch_size = 48;
  grad::AdamConfig optimizer;
  std::uint64_t seed = 1;  // becomes the model seed; the shuffle seed is derived from it
  Precision precision = Precision::f32;
  std::filesystem::path checkpoint;  // best-validation state, skipped when empty
  unsigned eval_threads = 1;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Missing fields keep their defaults; unknown fields are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);
TrainConfig load_train_config(const std::filesystem::path& path);

struct EpochLog {
  int epoch = 0;            // 1-based
  double train_loss = 0.0;  // mean over the epoch's mini-batches
  double val_accuracy = 0.0;
  bool operator==(const EpochLog&) const = default;
};

struct TrainResult {
  std::uint64_t seed = 0;
  std::vector<double> batch_losses;
  std::vector<EpochLog> epochs;
  int best_epoch = 0;
  Metrics validation;  // at the best epoch
  Metrics test;        // at the best epoch
  std::vector<grad::NamedBlob> best_state;

  double initial_loss() const { return batch_losses.empty() ? 0.0 : batch_losses.front(); }
  double final_loss() const { return epochs.empty() ? 0.0 : epochs.back().train_loss; }
  /// 1 - final / initial, where initial is the loss of the first mini-batch
  /// (before any update) and final the mean loss of the last epoch.
  double loss_reduction() const;
  /// Everything except the weights.
  nlohmann::json to_json() const;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Seeded mini-batch training with validation after every epoch. The state
/// with the highest validation accuracy (ties to the later epoch) is kept and
/// scored on the test split. Throws TrainError on a non-finite loss or
/// gradient, naming the epoch and batch.
TrainResult train(const TrainConfig& config, const Dataset& data, const EpochCallback& on_epoch = {});

/// Selection score of one validation result: accuracy of the single head, or
/// the mean over the heads with positive loss weight.
double selection_score(const Metrics& m, const model::ModelConfig& config);

/// Loads a checkpoint and scores one split. Rejects a checkpoint whose input
/// size differs from the dataset's or whose head count differs from
/// expected_heads (0 = accept any). Use the training precision to reproduce
/// the metrics recorded at training time exactly.
Metrics evaluate_checkpoint(const std::filesystem::path& checkpoint, const Dataset& data, sim::Split split,
                            int expected_heads = 0, Precision precision = Precision::f32, unsigned threads = 1);

}  // namespace ponnet::harness
