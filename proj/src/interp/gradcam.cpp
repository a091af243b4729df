#include "eogstage/interp/gradcam.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "eogstage/common/error.hpp"
#include "eogstage/tensor/tape.hpp"

namespace eogstage {

std::vector<double> cam_from_activations(std::span<const double> activations,
                                         std::span<const double> gradients,
                                         std::size_t channels, std::size_t length,
                                         std::size_t samples) {
  if (channels == 0 || length == 0 || samples == 0) throw ShapeError("gradcam: empty map");
  if (activations.size() != channels * length || gradients.size() != channels * length) {
    throw ShapeError("gradcam: activations and gradients must both be [C, L]");
  }
  std::vector<double> cam(length, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    double alpha = 0;
    for (std::size_t l = 0; l < length; ++l) alpha += gradients[c * length + l];
    alpha /= static_cast<double>(length);
    for (std::size_t l = 0; l < length; ++l) cam[l] += alpha * activations[c * length + l];
  }
  for (auto& v : cam) v = std::max(v, 0.0);

  std::vector<double> out(samples);
  const double scale = static_cast<double>(length) / static_cast<double>(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    const double pos = std::clamp((static_cast<double>(i) + 0.5) * scale - 0.5, 0.0,
                                  static_cast<double>(length - 1));
    const auto l0 = static_cast<std::size_t>(pos);
    const std::size_t l1 = std::min(l0 + 1, length - 1);
    const double frac = pos - static_cast<double>(l0);
    out[i] = (1 - frac) * cam[l0] + frac * cam[l1];
  }
  const auto [lo, hi] = std::minmax_element(out.begin(), out.end());
  const double mn = *lo, mx = *hi;
  if (mx <= 0) {
    std::fill(out.begin(), out.end(), 0.0);
  } else if (mx == mn) {
    std::fill(out.begin(), out.end(), 1.0);
  } else {
    for (auto& v : out) v = (v - mn) / (mx - mn);
  }
  return out;
}

Saliency1D gradcam_1d(SleepStager<float>& model, const Tensor<float>& window,
                      std::size_t target_class) {
  const auto& cfg = model.config();
  if (target_class >= cfg.num_classes) {
    throw DataError(fmt::format("gradcam: target class {} outside 0..{}", target_class, cfg.num_classes - 1));
  }
  if (cfg.residual_blocks.empty()) throw ConfigError("model has no residual block for gradcam");
  const std::size_t w = cfg.window_size, s = cfg.samples_per_epoch;
  if (window.numel() != w * s || (window.rank() != 3 && window.rank() != 4)) {
    throw ShapeError(fmt::format("gradcam: expected a [{}, 1, {}] window, got {}", w, s,
                                 shape_str(window.shape())));
  }
  Tensor<float> x(Shape{1, w, 1, s}, std::vector<float>(window.data().begin(), window.data().end()));

  auto& tape = autograd::Tape<float>::current();
  tape.clear();
  model.zero_grad();
  ForwardTrace<float> trace;
  auto logits = model.logits(x, false, &trace);
  auto score = ops::sum(ops::select(logits, 1, target_class));
  autograd::backward(score);
  model.zero_grad();

  auto& a = trace.last_conv;  // [W, C, L']
  const std::size_t c = a.dim(1), len = a.dim(2);
  const std::size_t offset = cfg.center_index() * c * len;
  std::vector<double> act(c * len), grad(c * len, 0.0);
  auto ad = a.data();
  for (std::size_t i = 0; i < c * len; ++i) act[i] = ad[offset + i];
  if (a.has_grad()) {
    auto gd = a.grad();
    for (std::size_t i = 0; i < c * len; ++i) {
      grad[i] = gd[offset + i];
      if (!std::isfinite(grad[i])) throw NumericError("gradcam: non-finite gradient at the last conv layer");
    }
  }
  Saliency1D out;
  out.values = cam_from_activations(act, grad, c, len, s);
  out.target = target_class;
  out.layer = fmt::format("blocks.{}", cfg.residual_blocks.size() - 1);
  return out;
}

}  // namespace eogstage
