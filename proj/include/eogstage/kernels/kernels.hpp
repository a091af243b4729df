#pragma once

// Hot loops behind the tensor ops.
//
// Two implementations share each signature:
//   kernels::serial  straightforward nested loops, kept as the reference
//   kernels::omp     reordered for contiguous access and parallelised with
//                    OpenMP over independent outputs
//
// Every omp kernel assigns each output element to exactly one iteration of
// the parallel loop and fixes the summation order inside it, so results do
// not depend on the thread count. Backward kernels accumulate (+=) into
// their gradient outputs.

#include <cstddef>
#include <span>

namespace eogstage::kernels {

struct Conv1dDims {
  std::size_t batch;
  std::size_t in_channels;
  std::size_t out_channels;
  std::size_t in_length;
  std::size_t kernel;
  std::size_t stride;
  std::size_t padding;

  std::size_t out_length() const { return (in_length + 2 * padding - kernel) / stride + 1; }
};

// Row-major x[rows, in] times w[out, in]^T plus b[out].
struct DenseDims {
  std::size_t rows;
  std::size_t in_features;
  std::size_t out_features;
};

#define EOGSTAGE_KERNEL_DECLS                                                               \
  template <typename T>                                                                    \
  void conv1d_forward(const Conv1dDims& d, std::span<const T> input,                        \
                      std::span<const T> weight, std::span<const T> bias,                   \
                      std::span<T> output);                                                 \
  template <typename T>                                                                    \
  void conv1d_backward_input(const Conv1dDims& d, std::span<const T> grad_output,           \
                             std::span<const T> weight, std::span<T> grad_input);           \
  template <typename T>                                                                    \
  void conv1d_backward_weight(const Conv1dDims& d, std::span<const T> grad_output,          \
                              std::span<const T> input, std::span<T> grad_weight,           \
                              std::span<T> grad_bias);                                      \
  template <typename T>                                                                    \
  void dense_forward(const DenseDims& d, std::span<const T> x, std::span<const T> w,        \
                     std::span<const T> b, std::span<T> out);                               \
  template <typename T>                                                                    \
  void dense_backward_input(const DenseDims& d, std::span<const T> grad_out,                \
                            std::span<const T> w, std::span<T> grad_x);                     \
  template <typename T>                                                                    \
  void dense_backward_weight(const DenseDims& d, std::span<const T> grad_out,               \
                             std::span<const T> x, std::span<T> grad_w, std::span<T> grad_b); \
  /* out[i*n+j] = squared Euclidean distance between rows i and j of x[n, dims] */          \
  template <typename T>                                                                    \
  void pairwise_sq_distances(std::size_t n, std::size_t dims, std::span<const T> x,         \
                             std::span<T> out);

namespace serial {
EOGSTAGE_KERNEL_DECLS
}  // namespace serial

namespace omp {
EOGSTAGE_KERNEL_DECLS
}  // namespace omp

#undef EOGSTAGE_KERNEL_DECLS

}  // namespace eogstage::kernels
