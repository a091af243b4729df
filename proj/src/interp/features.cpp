#include "eogstage/interp/features.hpp"

#include <algorithm>

#include "eogstage/common/error.hpp"
#include "eogstage/tensor/tape.hpp"

namespace eogstage {

FeatureMatrix extract_features(SleepStager<float>& model, const Dataset& data,
                               const std::vector<ContextWindow>& windows, std::size_t batch_size) {
  const auto& cfg = model.config();
  if (cfg.residual_blocks.empty()) throw ConfigError("model has no residual block to read features from");
  autograd::NoGradGuard no_grad;
  const std::size_t s = cfg.samples_per_epoch;
  FeatureMatrix out;
  out.dims = cfg.last_conv_channels();
  out.rows = windows.size();
  out.values.reserve(out.rows * out.dims);
  batch_size = std::max<std::size_t>(batch_size, 1);
  for (std::size_t first = 0; first < windows.size(); first += batch_size) {
    const std::size_t count = std::min(batch_size, windows.size() - first);
    Tensor<float> epochs(Shape{count, 1, s});
    auto dst = epochs.data();
    for (std::size_t b = 0; b < count; ++b) {
      const auto& w = windows[first + b];
      const auto& sig = data.recordings.at(w.recording).epochs.at(w.first + cfg.center_index()).signal;
      if (sig.size() != s) throw DataError("epoch length does not match the model");
      std::copy(sig.begin(), sig.end(), dst.begin() + static_cast<std::ptrdiff_t>(b * s));
      out.labels.push_back(w.label);
    }
    auto a = model.conv_features(epochs, false);
    const std::size_t c = a.dim(1), len = a.dim(2);
    auto ad = a.data();
    for (std::size_t b = 0; b < count; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0;
        for (std::size_t l = 0; l < len; ++l) acc += ad[(b * c + ch) * len + l];
        out.values.push_back(acc / static_cast<double>(len));
      }
    }
  }
  return out;
}

}  // namespace eogstage
