#include "eogstage/kernels/kernels.hpp"

namespace eogstage::kernels::serial {

template <typename T>
void conv1d_forward(const Conv1dDims& d, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output) {
  const std::size_t lout = d.out_length();
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t co = 0; co < d.out_channels; ++co) {
      for (std::size_t i = 0; i < lout; ++i) {
        T acc = bias.empty() ? T(0) : bias[co];
        for (std::size_t ci = 0; ci < d.in_channels; ++ci) {
          for (std::size_t k = 0; k < d.kernel; ++k) {
            const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(i * d.stride + k) -
                                       static_cast<std::ptrdiff_t>(d.padding);
            if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(d.in_length)) continue;
            acc += weight[(co * d.in_channels + ci) * d.kernel + k] *
                   input[(n * d.in_channels + ci) * d.in_length + static_cast<std::size_t>(pos)];
          }
        }
        output[(n * d.out_channels + co) * lout + i] = acc;
      }
    }
  }
}

template <typename T>
void conv1d_backward_input(const Conv1dDims& d, std::span<const T> grad_output,
                           std::span<const T> weight, std::span<T> grad_input) {
  const std::size_t lout = d.out_length();
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t co = 0; co < d.out_channels; ++co) {
      for (std::size_t i = 0; i < lout; ++i) {
        const T g = grad_output[(n * d.out_channels + co) * lout + i];
        for (std::size_t ci = 0; ci < d.in_channels; ++ci) {
          for (std::size_t k = 0; k < d.kernel; ++k) {
            const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(i * d.stride + k) -
                                       static_cast<std::ptrdiff_t>(d.padding);
            if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(d.in_length)) continue;
            grad_input[(n * d.in_channels + ci) * d.in_length + static_cast<std::size_t>(pos)] +=
                g * weight[(co * d.in_channels + ci) * d.kernel + k];
          }
        }
      }
    }
  }
}

template <typename T>
void conv1d_backward_weight(const Conv1dDims& d, std::span<const T> grad_output,
                            std::span<const T> input, std::span<T> grad_weight,
                            std::span<T> grad_bias) {
  const std::size_t lout = d.out_length();
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t co = 0; co < d.out_channels; ++co) {
      for (std::size_t i = 0; i < lout; ++i) {
        const T g = grad_output[(n * d.out_channels + co) * lout + i];
        if (!grad_bias.empty()) grad_bias[co] += g;
        for (std::size_t ci = 0; ci < d.in_channels; ++ci) {
          for (std::size_t k = 0; k < d.kernel; ++k) {
            const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(i * d.stride + k) -
                                       static_cast<std::ptrdiff_t>(d.padding);
            if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(d.in_length)) continue;
            grad_weight[(co * d.in_channels + ci) * d.kernel + k] +=
                g * input[(n * d.in_channels + ci) * d.in_length + static_cast<std::size_t>(pos)];
          }
        }
      }
    }
  }
}

template <typename T>
void dense_forward(const DenseDims& d, std::span<const T> x, std::span<const T> w,
                   std::span<const T> b, std::span<T> out) {
  for (std::size_t r = 0; r < d.rows; ++r) {
    for (std::size_t o = 0; o < d.out_features; ++o) {
      T acc = b.empty() ? T(0) : b[o];
      for (std::size_t i = 0; i < d.in_features; ++i) {
        acc += x[r * d.in_features + i] * w[o * d.in_features + i];
      }
      out[r * d.out_features + o] = acc;
    }
  }
}

template <typename T>
void dense_backward_input(const DenseDims& d, std::span<const T> grad_out, std::span<const T> w,
                          std::span<T> grad_x) {
  for (std::size_t r = 0; r < d.rows; ++r) {
    for (std::size_t i = 0; i < d.in_features; ++i) {
      T acc = 0;
      for (std::size_t o = 0; o < d.out_features; ++o) {
        acc += grad_out[r * d.out_features + o] * w[o * d.in_features + i];
      }
      grad_x[r * d.in_features + i] += acc;
    }
  }
}

template <typename T>
void dense_backward_weight(const DenseDims& d, std::span<const T> grad_out, std::span<const T> x,
                           std::span<T> grad_w, std::span<T> grad_b) {
  for (std::size_t o = 0; o < d.out_features; ++o) {
    for (std::size_t i = 0; i < d.in_features; ++i) {
      T acc = 0;
      for (std::size_t r = 0; r < d.rows; ++r) {
        acc += grad_out[r * d.out_features + o] * x[r * d.in_features + i];
      }
      grad_w[o * d.in_features + i] += acc;
    }
    if (!grad_b.empty()) {
      T acc = 0;
      for (std::size_t r = 0; r < d.rows; ++r) acc += grad_out[r * d.out_features + o];
      grad_b[o] += acc;
    }
  }
}

template <typename T>
void pairwise_sq_distances(std::size_t n, std::size_t dims, std::span<const T> x,
                           std::span<T> out) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = 0;
      for (std::size_t k = 0; k < dims; ++k) {
        const T diff = x[i * dims + k] - x[j * dims + k];
        acc += diff * diff;
      }
      out[i * n + j] = acc;
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

}  // namespace eogstage::kernels::serial
