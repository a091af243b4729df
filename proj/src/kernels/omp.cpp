#include <algorithm>
#include <cstdint>

#include "eogstage/kernels/kernels.hpp"

namespace eogstage::kernels::omp {

namespace {

// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelThreshold = 1 << 15;

// Output positions i whose tap k lands inside the unpadded input:
// 0 <= i*stride + k - padding < in_length.
struct TapRange {
  std::size_t lo;
  std::size_t hi;  // exclusive
};

TapRange tap_range(const Conv1dDims& d, std::size_t k, std::size_t lout) {
  std::size_t lo = 0;
  if (d.padding > k) lo = (d.padding - k + d.stride - 1) / d.stride;
  const std::size_t limit = d.in_length + d.padding;  // i*stride + k < limit
  std::size_t hi = 0;
  if (limit > k) hi = std::min(lout, (limit - k - 1) / d.stride + 1);
  return {lo, std::max(lo, hi)};
}

}  // namespace

template <typename T>
void conv1d_forward(const Conv1dDims& d, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output) {
  const std::size_t lout = d.out_length();
  const auto rows = static_cast<std::int64_t>(d.batch * d.out_channels);
  const bool par = d.batch * d.out_channels * lout * d.in_channels * d.kernel > kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t row = 0; row < rows; ++row) {
    const auto n = static_cast<std::size_t>(row) / d.out_channels;
    const auto co = static_cast<std::size_t>(row) % d.out_channels;
    T* out = output.data() + static_cast<std::size_t>(row) * lout;
    std::fill(out, out + lout, bias.empty() ? T(0) : bias[co]);
    for (std::size_t ci = 0; ci < d.in_channels; ++ci) {
      const T* in = input.data() + (n * d.in_channels + ci) * d.in_length;
      const T* w = weight.data() + (co * d.in_channels + ci) * d.kernel;
      for (std::size_t k = 0; k < d.kernel; ++k) {
        const auto r = tap_range(d, k, lout);
        if (r.lo >= r.hi) continue;
        const T wk = w[k];
        const T* src = in + (r.lo * d.stride + k - d.padding);
        if (d.stride == 1) {
          for (std::size_t i = r.lo; i < r.hi; ++i) out[i] += wk * src[i - r.lo];
        } else {
          for (std::size_t i = r.lo; i < r.hi; ++i) out[i] += wk * src[(i - r.lo) * d.stride];
        }
      }
    }
  }
}

template <typename T>
void conv1d_backward_input(const Conv1dDims& d, std::span<const T> grad_output,
                           std::span<const T> weight, std::span<T> grad_input) {
  const std::size_t lout = d.out_length();
  const auto rows = static_cast<std::int64_t>(d.batch * d.in_channels);
  const bool par = d.batch * d.out_channels * lout * d.in_channels * d.kernel > kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t row = 0; row < rows; ++row) {
    const auto n = static_cast<std::size_t>(row) / d.in_channels;
    const auto ci = static_cast<std::size_t>(row) % d.in_channels;
    T* gin = grad_input.data() + static_cast<std::size_t>(row) * d.in_length;
    for (std::size_t co = 0; co < d.out_channels; ++co) {
      const T* g = grad_output.data() + (n * d.out_channels + co) * lout;
      const T* w = weight.data() + (co * d.in_channels + ci) * d.kernel;
      for (std::size_t k = 0; k < d.kernel; ++k) {
        const auto r = tap_range(d, k, lout);
        if (r.lo >= r.hi) continue;
        const T wk = w[k];
        T* dst = gin + (r.lo * d.stride + k - d.padding);
        for (std::size_t i = r.lo; i < r.hi; ++i) dst[(i - r.lo) * d.stride] += wk * g[i];
      }
    }
  }
}

template <typename T>
void conv1d_backward_weight(const Conv1dDims& d, std::span<const T> grad_output,
                            std::span<const T> input, std::span<T> grad_weight,
                            std::span<T> grad_bias) {
  const std::size_t lout = d.out_length();
  const auto pairs = static_cast<std::int64_t>(d.out_channels * d.in_channels);
  const bool par = d.batch * d.out_channels * lout * d.in_channels * d.kernel > kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t pair = 0; pair < pairs; ++pair) {
    const auto co = static_cast<std::size_t>(pair) / d.in_channels;
    const auto ci = static_cast<std::size_t>(pair) % d.in_channels;
    T* gw = grad_weight.data() + static_cast<std::size_t>(pair) * d.kernel;
    for (std::size_t k = 0; k < d.kernel; ++k) {
      const auto r = tap_range(d, k, lout);
      if (r.lo >= r.hi) continue;
      T acc = 0;
      for (std::size_t n = 0; n < d.batch; ++n) {
        const T* g = grad_output.data() + (n * d.out_channels + co) * lout;
        const T* src = input.data() + (n * d.in_channels + ci) * d.in_length +
                       (r.lo * d.stride + k - d.padding);
        for (std::size_t i = r.lo; i < r.hi; ++i) acc += g[i] * src[(i - r.lo) * d.stride];
      }
      gw[k] += acc;
    }
  }
  if (!grad_bias.empty()) {
    for (std::size_t co = 0; co < d.out_channels; ++co) {
      T acc = 0;
      for (std::size_t n = 0; n < d.batch; ++n) {
        const T* g = grad_output.data() + (n * d.out_channels + co) * lout;
        for (std::size_t i = 0; i < lout; ++i) acc += g[i];
      }
      grad_bias[co] += acc;
    }
  }
}

template <typename T>
void dense_forward(const DenseDims& d, std::span<const T> x, std::span<const T> w,
                   std::span<const T> b, std::span<T> out) {
  const auto rows = static_cast<std::int64_t>(d.rows);
  const bool par = d.rows * d.in_features * d.out_features > kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + static_cast<std::size_t>(r) * d.in_features;
    T* o = out.data() + static_cast<std::size_t>(r) * d.out_features;
    for (std::size_t j = 0; j < d.out_features; ++j) {
      const T* wj = w.data() + j * d.in_features;
      T acc = 0;
      for (std::size_t i = 0; i < d.in_features; ++i) acc += xr[i] * wj[i];
      o[j] = (b.empty() ? T(0) : b[j]) + acc;
    }
  }
}

template <typename T>
void dense_backward_input(const DenseDims& d, std::span<const T> grad_out, std::span<const T> w,
                          std::span<T> grad_x) {
  const auto rows = static_cast<std::int64_t>(d.rows);
  const bool par = d.rows * d.in_features * d.out_features > kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* g = grad_out.data() + static_cast<std::size_t>(r) * d.out_features;
    T* gx = grad_x.data() + static_cast<std::size_t>(r) * d.in_features;
    for (std::size_t j = 0; j < d.out_features; ++j) {
      const T gj = g[j];
      const T* wj = w.data() + j * d.in_features;
      for (std::size_t i = 0; i < d.in_features; ++i) gx[i] += gj * wj[i];
    }
  }
}

template <typename T>
void dense_backward_weight(const DenseDims& d, std::span<const T> grad_out, std::span<const T> x,
                           std::span<T> grad_w, std::span<T> grad_b) {
  const auto outs = static_cast<std::int64_t>(d.out_features);
  const bool par = d.rows * d.in_features * d.out_features > kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t j = 0; j < outs; ++j) {
    T* gw = grad_w.data() + static_cast<std::size_t>(j) * d.in_features;
    T bias_acc = 0;
    for (std::size_t r = 0; r < d.rows; ++r) {
      const T g = grad_out[r * d.out_features + static_cast<std::size_t>(j)];
      bias_acc += g;
      const T* xr = x.data() + r * d.in_features;
      for (std::size_t i = 0; i < d.in_features; ++i) gw[i] += g * xr[i];
    }
    if (!grad_b.empty()) grad_b[static_cast<std::size_t>(j)] += bias_acc;
  }
}

template <typename T>
void pairwise_sq_distances(std::size_t n, std::size_t dims, std::span<const T> x,
                           std::span<T> out) {
  const auto rows = static_cast<std::int64_t>(n);
  const bool par = n * n * dims > kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < rows; ++i) {
    const T* xi = x.data() + static_cast<std::size_t>(i) * dims;
    T* row = out.data() + static_cast<std::size_t>(i) * n;
    for (std::size_t j = 0; j < n; ++j) {
      const T* xj = x.data() + j * dims;
      T acc = 0;
      for (std::size_t k = 0; k < dims; ++k) {
        const T diff = xi[k] - xj[k];
        acc += diff * diff;
      }
      row[j] = acc;
    }
  }
}

#define EOGSTAGE_INSTANTIATE(T)                                                                \
  template void conv1d_forward<T>(const Conv1dDims&, std::span<const T>, std::span<const T>,    \
                                  std::span<const T>, std::span<T>);                            \
  template void conv1d_backward_input<T>(const Conv1dDims&, std::span<const T>,                 \
                                         std::span<const T>, std::span<T>);                     \
  template void conv1d_backward_weight<T>(const Conv1dDims&, std::span<const T>,                \
                                          std::span<const T>, std::span<T>, std::span<T>);      \
  template void dense_forward<T>(const DenseDims&, std::span<const T>, std::span<const T>,      \
                                 std::span<const T>, std::span<T>);                             \
  template void dense_backward_input<T>(const DenseDims&, std::span<const T>,                   \
                                        std::span<const T>, std::span<T>);                      \
  template void dense_backward_weight<T>(const DenseDims&, std::span<const T>,                  \
                                         std::span<const T>, std::span<T>, std::span<T>);       \
  template void pairwise_sq_distances<T>(std::size_t, std::size_t, std::span<const T>,          \
                                         std::span<T>);

EOGSTAGE_INSTANTIATE(float)
EOGSTAGE_INSTANTIATE(double)

}  // namespace eogstage::kernels::omp
