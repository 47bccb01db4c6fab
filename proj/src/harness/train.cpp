#include "ponnet/harness/train.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <span>

#include "ponnet/common/rng.hpp"

namespace ponnet::harness {

const char* precision_name(Precision p) { return p == Precision::f32 ? "float32" : "float64"; }

Precision parse_precision(const std::string& text) {
  if (text == "float32" || text == "float") return Precision::f32;
  if (text == "float64" || text == "double") return Precision::f64;
  throw TrainError("unknown precision '" + text + "' (float32 or float64)");
}

void TrainConfig::validate() const {
  model.validate();
  if (epochs < 1) throw TrainError("epochs must be >= 1");
  if (batch_size < 1) throw TrainError("batch size must be >= 1");
  if (!(optimizer.learning_rate > 0.0)) throw TrainError("learning rate must be positive");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) || !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0))
    throw TrainError("Adam betas must lie in [0, 1)");
  if (!(optimizer.epsilon > 0.0)) throw TrainError("Adam epsilon must be positive");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"model", model::to_json(c.model)},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"optimizer",
           {{"learning_rate", c.optimizer.learning_rate},
            {"beta1", c.optimizer.beta1},
            {"beta2", c.optimizer.beta2},
            {"epsilon", c.optimizer.epsilon}}},
          {"seed", c.seed},
          {"precision", precision_name(c.precision)},
          {"checkpoint", c.checkpoint.string()},
          {"eval_threads", c.eval_threads}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw TrainError("train config must be a JSON object");
  TrainConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "model") c.model = model::model_config_from_json(value);
      else if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "batch_size") c.batch_size = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "precision") c.precision = parse_precision(value.get<std::string>());
      else if (key == "checkpoint") c.checkpoint = value.get<std::string>();
      else if (key == "eval_threads") c.eval_threads = value.get<unsigned>();
      else if (key == "optimizer") {
        for (const auto& [k, v] : value.items()) {
          if (k == "learning_rate") c.optimizer.learning_rate = v.get<double>();
          else if (k == "beta1") c.optimizer.beta1 = v.get<double>();
          else if (k == "beta2") c.optimizer.beta2 = v.get<double>();
          else if (k == "epsilon") c.optimizer.epsilon = v.get<double>();
          else throw TrainError("unknown optimizer field '" + k + "'");
        }
      } else {
        throw TrainError("unknown train config field '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw TrainError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TrainError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw TrainError(path.string() + ": " + e.what());
  }
  return train_config_from_json(j);
}

double TrainResult::loss_reduction() const {
  const double first = initial_loss();
  return first > 0.0 ? 1.0 - final_loss() / first : 0.0;
}

nlohmann::json TrainResult::to_json() const {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& e : epochs)
    curve.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_accuracy", e.val_accuracy}});
  return {{"schema_version", kMetricsSchemaVersion},
          {"seed", seed},
          {"initial_loss", initial_loss()},
          {"final_loss", final_loss()},
          {"loss_reduction", loss_reduction()},
          {"best_epoch", best_epoch},
          {"epochs", curve},
          {"validation", validation.to_json()},
          {"test", test.to_json()}};
}

double selection_score(const Metrics& m, const model::ModelConfig& config) {
  if (m.heads.size() == 1) return m.accuracy(0);
  double sum = 0.0;
  int count = 0;
  for (int h = 0; h < config.heads; ++h) {
    if (config.head_weight(h) > 0.0) {
      sum += m.accuracy(static_cast<std::size_t>(h));
      ++count;
    }
  }
  return count == 0 ? m.accuracy(0) : sum / count;
}

namespace {

template <typename T>
TrainResult run(const TrainConfig& config, const Dataset& data, const EpochCallback& on_epoch) {
  const auto train_idx = data.split(sim::Split::train);
  const auto val_idx = data.split(sim::Split::val);
  const auto test_idx = data.split(sim::Split::test);
  if (train_idx.empty() || val_idx.empty()) throw TrainError("dataset needs non-empty train and validation splits");
  if (data.side != config.model.input_side)
    throw TrainError("dataset side " + std::to_string(data.side) + " does not match model input " +
                     std::to_string(config.model.input_side));

  model::ModelConfig mc = config.model;
  mc.seed = config.seed;
  model::PonNet<T> net(mc);
  grad::Adam<T> adam(config.optimizer);
  Rng shuffle_rng(mix_seed(config.seed, hash_name("shuffle")));

  TrainResult result;
  result.seed = config.seed;
  double best_score = -1.0;
  std::vector<std::size_t> order = train_idx;
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double epoch_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += batch) {
      const std::vector<std::size_t> idx(order.begin() + b, order.begin() + std::min(order.size(), b + batch));
      const auto context = [&] {
        return "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches + 1);
      };
      grad::Graph<T> g;
      const auto fwd = net.forward(g, make_batch<T>(data, idx), grad::Mode::train);
      const auto loss = net.total_loss(g, fwd, head_labels(data, idx, mc.heads));
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) throw TrainError("non-finite loss at " + context());
      net.zero_grad();
      g.backward(loss);
      try {
        adam.step(net.parameters());
      } catch (const grad::NonFiniteGradient& e) {
        throw TrainError("non-finite gradient at " + context() + ": " + e.what());
      }
      result.batch_losses.push_back(value);
      epoch_sum += value;
      ++batches;
    }
    const Metrics val = evaluate(net, data, val_idx, config.eval_threads);
    const double score = selection_score(val, mc);
    EpochLog log{epoch, epoch_sum / static_cast<double>(batches), score};
    result.epochs.push_back(log);
    if (score >= best_score) {
      best_score = score;
      result.best_epoch = epoch;
      result.validation = val;
      result.best_state = net.state();
    }
    if (on_epoch) on_epoch(log);
  }

  net.load_state(result.best_state);
  if (!test_idx.empty()) result.test = evaluate(net, data, test_idx, config.eval_threads);
  if (!config.checkpoint.empty()) net.save(config.checkpoint);
  return result;
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& data, const EpochCallback& on_epoch) {
  config.validate();
  return config.precision == Precision::f32 ? run<float>(config, data, on_epoch)
                                            : run<double>(config, data, on_epoch);
}

namespace {

template <typename T>
Metrics evaluate_loaded(const std::filesystem::path& checkpoint, const Dataset& data, sim::Split split,
                        int expected_heads, unsigned threads) {
  auto net = model::PonNet<T>::load(checkpoint);
  const auto& mc = net.config();
  if (expected_heads != 0 && mc.heads != expected_heads)
    throw TrainError(checkpoint.string() + ": checkpoint has " + std::to_string(mc.heads) + " heads, expected " +
                     std::to_string(expected_heads));
  if (mc.input_side != data.side)
    throw TrainError(checkpoint.string() + ": checkpoint expects " + std::to_string(mc.input_side) +
                     " px inputs, dataset has " + std::to_string(data.side));
  return evaluate(net, data, data.split(split), threads);
}

}  // namespace

Metrics evaluate_checkpoint(const std::filesystem::path& checkpoint, const Dataset& data, sim::Split split,
                            int expected_heads, Precision precision, unsigned threads) {
  return precision == Precision::f32 ? evaluate_loaded<float>(checkpoint, data, split, expected_heads, threads)
                                     : evaluate_loaded<double>(checkpoint, data, split, expected_heads, threads);
}

}  // namespace ponnet::harness
