#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "eogstage/model/model.hpp"

namespace eogstage {

struct Saliency1D {
  std::vector<double> values;  // one per input sample, in [0, 1]
  std::size_t target = 0;
  std::string layer;
};

// The GradCAM map for activations A and gradients G, both [C, L]:
// relu(sum_c mean_l(G[c]) * A[c]) linearly interpolated to `samples` points
// (sample centres aligned) and min-max scaled to [0, 1]. An all-zero map
// stays zero; a constant positive map becomes all ones.
std::vector<double> cam_from_activations(std::span<const double> activations,
                                         std::span<const double> gradients,
                                         std::size_t channels, std::size_t length,
                                         std::size_t samples);

// Saliency of the center epoch of `window` ([W, 1, S] or [1, W, 1, S]) for
// the pre-softmax logit of `target_class`, taken at the last residual block
// in eval mode. Parameter gradients are cleared afterwards. NumericError on
// non-finite gradients.
Saliency1D gradcam_1d(SleepStager<float>& model, const Tensor<float>& window,
                      std::size_t target_class);

}  // namespace eogstage
