#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "eogstage/tensor/tensor.hpp"

namespace eogstage {

// Mean over the batch of -log_probs[b, target_b] for log_probs [B, K].
// With class weights the mean is weighted: sum(w_t * loss_b) / sum(w_t).
// DataError for a target outside 0..K-1.
template <typename T>
Tensor<T> nll_loss(const Tensor<T>& log_probs, const std::vector<std::size_t>& targets,
                   std::span<const T> class_weights = {});

}  // namespace eogstage
