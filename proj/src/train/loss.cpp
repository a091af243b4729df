#include "eogstage/train/loss.hpp"

#include <string>

#include "eogstage/common/error.hpp"
#include "eogstage/tensor/tape.hpp"

namespace eogstage {

template <typename T>
Tensor<T> nll_loss(const Tensor<T>& log_probs, const std::vector<std::size_t>& targets,
                   std::span<const T> class_weights) {
  if (log_probs.rank() != 2) {
    throw ShapeError("nll_loss: expected [B, K], got " + shape_str(log_probs.shape()));
  }
  const std::size_t batch = log_probs.dim(0);
  const std::size_t k = log_probs.dim(1);
  if (batch == 0 || targets.size() != batch) {
    throw ShapeError("nll_loss: " + std::to_string(targets.size()) + " targets for batch " +
                     std::to_string(batch));
  }
  if (!class_weights.empty() && class_weights.size() != k) {
    throw ShapeError("nll_loss: " + std::to_string(class_weights.size()) +
                     " class weights for " + std::to_string(k) + " classes");
  }
  for (std::size_t b = 0; b < batch; ++b) {
    if (targets[b] >= k) {
      throw DataError("nll_loss: target " + std::to_string(targets[b]) + " at row " +
                      std::to_string(b) + " is outside 0.." + std::to_string(k - 1));
    }
  }
  std::vector<T> w(batch, T(1));
  if (!class_weights.empty()) {
    for (std::size_t b = 0; b < batch; ++b) w[b] = class_weights[targets[b]];
  }
  T denom = 0;
  for (T x : w) denom += x;
  if (!(denom > 0)) throw NumericError("nll_loss: class weights of the batch sum to zero");

  auto lp = log_probs.data();
  T total = 0;
  for (std::size_t b = 0; b < batch; ++b) total -= w[b] * lp[b * k + targets[b]];
  auto out = Tensor<T>::scalar(total / denom);
  autograd::record<T>("nll_loss", {log_probs}, out,
                      [lp = log_probs, out = out, targets, w = std::move(w), denom, k]() mutable {
                        const T g = out.grad()[0];
                        auto gx = lp.ensure_grad();
                        for (std::size_t b = 0; b < targets.size(); ++b) {
                          gx[b * k + targets[b]] -= g * w[b] / denom;
                        }
                      });
  return out;
}

template Tensor<float> nll_loss<float>(const Tensor<float>&, const std::vector<std::size_t>&,
                                       std::span<const float>);
template Tensor<double> nll_loss<double>(const Tensor<double>&, const std::vector<std::size_t>&,
                                         std::span<const double>);

}  // namespace eogstage
