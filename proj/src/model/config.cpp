#include "eogstage/model/config.hpp"

#include <fmt/format.h>

#include "eogstage/common/error.hpp"

namespace eogstage {

namespace {

std::size_t conv_out(std::size_t len, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (kernel > len + 2 * pad) return 0;
  return (len + 2 * pad - kernel) / stride + 1;
}

void check_conv(const ConvSpec& c, const std::string& where) {
  if (c.channels == 0) throw ConfigError(where + ".channels must be positive");
  if (c.kernel == 0) throw ConfigError(where + ".kernel must be positive");
  if (c.stride == 0) throw ConfigError(where + ".stride must be positive");
}

using json = nlohmann::json;

std::size_t get_size(const json& j, const char* key, std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_unsigned()) throw ConfigError(fmt::format("'{}' must be a non-negative integer", key));
  return v.get<std::size_t>();
}

double get_double(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number()) throw ConfigError(fmt::format("'{}' must be a number", key));
  return v.get<double>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* where) {
  if (!j.is_object()) throw ConfigError(fmt::format("{} must be an object", where));
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError(fmt::format("unknown key '{}' in {}", key, where));
  }
}

ConvSpec conv_from_json(const json& j, const ConvSpec& fallback, const char* where) {
  reject_unknown(j, {"channels", "kernel", "stride"}, where);
  return {get_size(j, "channels", fallback.channels), get_size(j, "kernel", fallback.kernel),
          get_size(j, "stride", fallback.stride)};
}

json conv_to_json(const ConvSpec& c) {
  return {{"channels", c.channels}, {"kernel", c.kernel}, {"stride", c.stride}};
}

}  // namespace

void ModelConfig::validate() const {
  if (samples_per_epoch == 0) throw ConfigError("samples_per_epoch must be positive");
  if (window_size == 0 || window_size % 2 == 0)
    throw ConfigError(fmt::format("window_size must be odd and >= 1, got {}", window_size));
  if (num_classes != 5) throw ConfigError("num_classes must be 5");
  check_conv(stem, "stem");
  if (residual_blocks.empty()) throw ConfigError("at least one residual block is required");
  if (se_reduction == 0) throw ConfigError("se_reduction must be positive");
  if (d_model == 0) throw ConfigError("d_model must be positive");
  if (transformer.heads == 0 || d_model % transformer.heads != 0)
    throw ConfigError(fmt::format("d_model {} is not divisible by heads {}", d_model,
                                  transformer.heads));
  if (transformer.ff_dim == 0) throw ConfigError("transformer.ff_dim must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  if (!(norm_eps > 0.0)) throw ConfigError("norm_eps must be positive");

  std::size_t len = conv_out(samples_per_epoch, stem.kernel, stem.stride, stem.kernel / 2);
  if (len == 0) throw ConfigError("stem kernel is longer than the padded epoch");
  for (std::size_t i = 0; i < residual_blocks.size(); ++i) {
    const auto& b = residual_blocks[i];
    auto where = fmt::format("residual_blocks[{}]", i);
    check_conv(b, where);
    if (b.channels % se_reduction != 0)
      throw ConfigError(fmt::format("se_reduction {} does not divide {}.channels = {}",
                                    se_reduction, where, b.channels));
    // Main path: strided conv then stride-1 conv, both "same" padded.
    std::size_t main = conv_out(len, b.kernel, b.stride, b.kernel / 2);
    main = conv_out(main, b.kernel, 1, b.kernel / 2);
    std::size_t shortcut = conv_out(len, 1, b.stride, 0);
    if (main == 0) throw ConfigError(where + " shrinks the feature map to nothing");
    if (main != shortcut)
      throw ConfigError(fmt::format("{}: main path length {} != shortcut length {} (use an odd kernel)",
                                    where, main, shortcut));
    len = main;
  }
}

std::size_t ModelConfig::last_conv_channels() const { return residual_blocks.back().channels; }

std::size_t ModelConfig::last_conv_length() const {
  std::size_t len = conv_out(samples_per_epoch, stem.kernel, stem.stride, stem.kernel / 2);
  for (const auto& b : residual_blocks) len = conv_out(len, 1, b.stride, 0);
  return len;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.samples_per_epoch = 64;
  c.window_size = 3;
  c.stem = {4, 5, 2};
  c.residual_blocks = {{4, 3, 2}, {8, 3, 2}};
  c.se_reduction = 2;
  c.d_model = 16;
  c.transformer = {1, 2, 32};
  return c;
}

ModelConfig desk_config() {
  ModelConfig c;
  c.samples_per_epoch = 960;
  c.stem = {8, 7, 4};
  return c;
}

nlohmann::json to_json(const ModelConfig& c) {
  json blocks = json::array();
  for (const auto& b : c.residual_blocks) blocks.push_back(conv_to_json(b));
  return {
      {"samples_per_epoch", c.samples_per_epoch},
      {"window_size", c.window_size},
      {"stem", conv_to_json(c.stem)},
      {"residual_blocks", blocks},
      {"se_reduction", c.se_reduction},
      {"d_model", c.d_model},
      {"transformer",
       {{"layers", c.transformer.layers},
        {"heads", c.transformer.heads},
        {"ff_dim", c.transformer.ff_dim}}},
      {"num_classes", c.num_classes},
      {"positional_encoding",
       c.positional_encoding == PositionalEncoding::Sinusoidal ? "sinusoidal" : "none"},
      {"dropout", c.dropout},
      {"norm_eps", c.norm_eps},
  };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  reject_unknown(j,
                 {"samples_per_epoch", "window_size", "stem", "residual_blocks", "se_reduction",
                  "d_model", "transformer", "num_classes", "positional_encoding", "dropout",
                  "norm_eps"},
                 "model config");
  ModelConfig c;
  c.samples_per_epoch = get_size(j, "samples_per_epoch", c.samples_per_epoch);
  c.window_size = get_size(j, "window_size", c.window_size);
  if (j.contains("stem")) c.stem = conv_from_json(j.at("stem"), c.stem, "stem");
  if (j.contains("residual_blocks")) {
    const auto& arr = j.at("residual_blocks");
    if (!arr.is_array()) throw ConfigError("residual_blocks must be an array");
    c.residual_blocks.clear();
    for (const auto& b : arr) c.residual_blocks.push_back(conv_from_json(b, {}, "residual block"));
  }
  c.se_reduction = get_size(j, "se_reduction", c.se_reduction);
  c.d_model = get_size(j, "d_model", c.d_model);
  if (j.contains("transformer")) {
    const auto& t = j.at("transformer");
    reject_unknown(t, {"layers", "heads", "ff_dim"}, "transformer");
    c.transformer.layers = get_size(t, "layers", c.transformer.layers);
    c.transformer.heads = get_size(t, "heads", c.transformer.heads);
    c.transformer.ff_dim = get_size(t, "ff_dim", c.transformer.ff_dim);
  }
  c.num_classes = get_size(j, "num_classes", c.num_classes);
  if (j.contains("positional_encoding")) {
    const auto& p = j.at("positional_encoding");
    if (p == "sinusoidal")
      c.positional_encoding = PositionalEncoding::Sinusoidal;
    else if (p == "none")
      c.positional_encoding = PositionalEncoding::None;
    else
      throw ConfigError("positional_encoding must be \"sinusoidal\" or \"none\"");
  }
  c.dropout = get_double(j, "dropout", c.dropout);
  c.norm_eps = get_double(j, "norm_eps", c.norm_eps);
  c.validate();
  return c;
}

}  // namespace eogstage
