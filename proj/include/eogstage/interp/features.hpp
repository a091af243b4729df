#pragma once

#include <cstddef>
#include <vector>

#include "eogstage/data/dataset.hpp"
#include "eogstage/model/model.hpp"

namespace eogstage {

// Row-major N x dims matrix with one class label per row.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t dims = 0;
  std::vector<double> values;
  std::vector<Stage> labels;

  std::span<const double> row(std::size_t i) const { return {values.data() + i * dims, dims}; }
};

// Output of the final residual block for the center epoch of each window,
// averaged over time (eval mode): one row of last_conv_channels() values per
// window. ConfigError when the model has no residual block.
FeatureMatrix extract_features(SleepStager<float>& model, const Dataset& data,
                               const std::vector<ContextWindow>& windows,
                               std::size_t batch_size = 256);

}  // namespace eogstage
