#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"

namespace eogstage {

struct ConvSpec {
  std::size_t channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  bool operator==(const ConvSpec&) const = default;
};

struct TransformerSpec {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ff_dim = 128;
  bool operator==(const TransformerSpec&) const = default;
};

enum class PositionalEncoding { Sinusoidal, None };

// Architecture hyperparameters. The defaults are sized for CPU training; none
// of the layer sizes come from a published reference implementation.
struct ModelConfig {
  std::size_t samples_per_epoch = 3000;
  std::size_t window_size = 9;
  ConvSpec stem{8, 7, 2};
  std::vector<ConvSpec> residual_blocks{{16, 3, 2}, {32, 3, 2}, {64, 3, 2}};
  std::size_t se_reduction = 4;
  std::size_t d_model = 64;
  TransformerSpec transformer{};
  std::size_t num_classes = 5;
  PositionalEncoding positional_encoding = PositionalEncoding::Sinusoidal;
  double dropout = 0.0;
  double norm_eps = 1e-5;

  bool operator==(const ModelConfig&) const = default;

  // Throws ConfigError naming the first violated constraint, including
  // feature maps that would shrink to nothing.
  void validate() const;

  std::size_t center_index() const { return (window_size - 1) / 2; }
  std::size_t last_conv_channels() const;
  // Temporal length of the final residual block's output for one epoch.
  std::size_t last_conv_length() const;
};

// Small enough for finite-difference checks and second-scale training runs.
ModelConfig tiny_config();

// Default architecture for 30-s epochs sampled at 32 Hz, with a stride-4 stem.
// Trains on a few thousand epochs in minutes on one core.
ModelConfig desk_config();

nlohmann::json to_json(const ModelConfig& config);
// Missing keys take their defaults; unknown keys and wrong types are
// ConfigErrors. The result is validated.
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace eogstage
