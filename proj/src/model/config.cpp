#include "ponnet/model/config.hpp"

#include <fstream>
#include <set>

namespace ponnet::model {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::type1: return "type1";
    case Variant::type2: return "type2";
    case Variant::type3: return "type3";
    case Variant::type4: return "type4";
    case Variant::full: return "full";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::type1, Variant::type2, Variant::type3, Variant::type4, Variant::full})
    if (variant_name(v) == s) return v;
  throw ConfigError("unknown variant '" + s + "'");
}

std::string input_mode_name(InputMode m) {
  switch (m) {
    case InputMode::rgb: return "RGB";
    case InputMode::depth: return "D";
    case InputMode::rgbd: return "RGBD";
  }
  return "?";
}

InputMode parse_input_mode(const std::string& s) {
  if (s == "RGB" || s == "rgb") return InputMode::rgb;
  if (s == "D" || s == "d" || s == "depth") return InputMode::depth;
  if (s == "RGBD" || s == "rgbd") return InputMode::rgbd;
  throw ConfigError("unknown input mode '" + s + "'");
}

int ModelConfig::feature_side() const {
  int s = input_side;
  for (std::size_t i = 0; i < pre_channels.size(); ++i) s = (s - 1) / 2 + 1;
  return s;
}

bool ModelConfig::has_attention() const {
  return variant == Variant::full || variant == Variant::type4 || variant == Variant::type3;
}

bool ModelConfig::two_streams() const { return variant == Variant::full || variant == Variant::type4; }

double ModelConfig::head_weight(int h) const {
  return head_loss_weights.empty() ? 1.0 : head_loss_weights.at(static_cast<std::size_t>(h));
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v < 1) throw ConfigError(std::string("model config: ") + what + " must be >= 1");
  };
  positive(input_side, "input_side");
  positive(feature_channels, "feature_channels");
  positive(bottleneck_channels, "bottleneck_channels");
  positive(output_dim, "output_dim");
  positive(heads, "heads");
  if (attention_blocks < 0 || deep_extra_blocks < 0) throw ConfigError("model config: block counts must be >= 0");
  if (post_channels.empty()) throw ConfigError("model config: post_channels must not be empty");
  for (int c : pre_channels) positive(c, "pre_channels");
  for (int c : post_channels) positive(c, "post_channels");
  for (int c : head_widths) positive(c, "head_widths");
  if (!(lambda_r >= 0) || !(lambda_d >= 0) || !(lambda_p >= 0))
    throw ConfigError("model config: loss weights must be >= 0");
  if (!head_loss_weights.empty()) {
    if (head_loss_weights.size() != static_cast<std::size_t>(heads))
      throw ConfigError("model config: head_loss_weights needs one entry per head");
    for (double w : head_loss_weights)
      if (!(w >= 0)) throw ConfigError("model config: head loss weights must be >= 0");
  }
  if (two_streams() && input_mode != InputMode::rgbd)
    throw ConfigError("model config: variant " + variant_name(variant) + " requires RGBD input");
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::micro() {
  ModelConfig c;
  c.input_side = 16;
  c.pre_channels = {4, 8};
  c.feature_channels = 8;
  c.bottleneck_channels = 2;
  c.post_channels = {8, 8};
  c.output_dim = 8;
  c.head_widths = {8, 4};
  return c;
}

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.input_side = 56;
  c.pre_channels = {64, 128};
  c.feature_channels = 256;
  c.bottleneck_channels = 64;
  c.post_channels = {512, 512};
  c.output_dim = 256;
  c.head_widths = {256, 16};
  return c;
}

nlohmann::json to_json(const ModelConfig& c) {
  return {
      {"version", kModelConfigVersion},
      {"variant", variant_name(c.variant)},
      {"input_mode", input_mode_name(c.input_mode)},
      {"input_side", c.input_side},
      {"pre_channels", c.pre_channels},
      {"feature_channels", c.feature_channels},
      {"bottleneck_channels", c.bottleneck_channels},
      {"attention_blocks", c.attention_blocks},
      {"post_channels", c.post_channels},
      {"deep_extra_blocks", c.deep_extra_blocks},
      {"output_dim", c.output_dim},
      {"head_widths", c.head_widths},
      {"lambda_r", c.lambda_r},
      {"lambda_d", c.lambda_d},
      {"lambda_p", c.lambda_p},
      {"heads", c.heads},
      {"head_loss_weights", c.head_loss_weights},
      {"seed", c.seed},
  };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  static const std::set<std::string> known = {
      "version", "variant", "input_mode", "input_side", "pre_channels", "feature_channels",
      "bottleneck_channels", "attention_blocks", "post_channels", "deep_extra_blocks", "output_dim",
      "head_widths", "lambda_r", "lambda_d", "lambda_p", "heads", "head_loss_weights", "seed"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError("model config: unknown field '" + key + "'");
  if (j.contains("version") && j.at("version").get<int>() != kModelConfigVersion)
    throw ConfigError("model config: unsupported version " + j.at("version").dump());

  ModelConfig c;
  try {
    if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
    if (j.contains("input_mode")) c.input_mode = parse_input_mode(j.at("input_mode").get<std::string>());
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("input_side", c.input_side);
    get("pre_channels", c.pre_channels);
    get("feature_channels", c.feature_channels);
    get("bottleneck_channels", c.bottleneck_channels);
    get("attention_blocks", c.attention_blocks);
    get("post_channels", c.post_channels);
    get("deep_extra_blocks", c.deep_extra_blocks);
    get("output_dim", c.output_dim);
    get("head_widths", c.head_widths);
    get("lambda_r", c.lambda_r);
    get("lambda_d", c.lambda_d);
    get("lambda_p", c.lambda_p);
    get("heads", c.heads);
    get("head_loss_weights", c.head_loss_weights);
    get("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

ModelConfig load_model_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return model_config_from_json(j);
}

}  // namespace ponnet::model
