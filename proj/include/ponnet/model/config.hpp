#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace ponnet::model {

enum class Variant { type1, type2, type3, type4, full };
enum class InputMode { rgb, depth, rgbd };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& s);
std::string input_mode_name(InputMode m);
InputMode parse_input_mode(const std::string& s);

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr int kModelConfigVersion = 1;

struct ModelConfig {
  Variant variant = Variant::full;
  /// full and type4 always consume both streams (rgbd).
  InputMode input_mode = InputMode::rgbd;
  int input_side = 32;
  /// Stride-2 conv widths of the pre-attention stack; a final stride-1 conv
  /// maps to feature_channels.
  std::vector<int> pre_channels = {16, 32};
  int feature_channels = 32;  // C_f
  int bottleneck_channels = 8;
  int attention_blocks = 3;
  /// First conv has stride 2, the rest stride 1.
  std::vector<int> post_channels = {64, 64};
  /// Residual blocks appended to the post stack by type1.
  int deep_extra_blocks = 2;
  int output_dim = 32;  // D_o
  std::vector<int> head_widths = {32, 8};
  double lambda_r = 1.0;
  double lambda_d = 1.0;
  double lambda_p = 0.3;
  int heads = 1;
  /// Per-head weights inside each loss term; empty means all ones.
  std::vector<double> head_loss_weights;
  std::uint64_t seed = 1;

  /// Spatial side S of the feature map after the pre stack.
  int feature_side() const;
  bool has_attention() const;
  bool two_streams() const;
  double head_weight(int h) const;

  /// Throws ConfigError on an inconsistent configuration.
  void validate() const;

  static ModelConfig desk();
  /// 16x16 input, C_f = 8, D_o = 8; for gradient checks.
  static ModelConfig micro();
  /// Published widths: 56 px input -> 14x14x256 features, 512-d post, D_o 256.
  static ModelConfig paper();

  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& c);
/// Missing fields keep the desk defaults; unknown fields are rejected.
ModelConfig model_config_from_json(const nlohmann::json& j);
ModelConfig load_model_config(const std::filesystem::path& path);

}  // namespace ponnet::model
