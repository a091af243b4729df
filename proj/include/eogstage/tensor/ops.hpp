#pragma once

#include <cstddef>
#include <vector>

#include "eogstage/common/rng.hpp"
#include "eogstage/tensor/tensor.hpp"

// Differentiable tensor operations. Each op computes its forward result
// eagerly and, when recording is enabled and an input requires grad, pushes
// its backward rule onto the current thread's tape.
namespace eogstage::ops {

// Elementwise with numpy-style broadcasting (shapes aligned on the right).
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

// Full reductions to a scalar of shape [].
template <typename T>
Tensor<T> sum(const Tensor<T>& a);
template <typename T>
Tensor<T> mean(const Tensor<T>& a);

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& axes);
// Picks `index` along `axis`, dropping that axis.
template <typename T>
Tensor<T> select(const Tensor<T>& a, std::size_t axis, std::size_t index);

struct Conv1dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// Cross-correlation: out[b,co,i] = bias[co] + sum_{ci,k} w[co,ci,k] * xpad[b,ci,i*stride+k].
// input [B,Cin,L], weight [Cout,Cin,K], bias [Cout] (may be undefined).
template <typename T>
Tensor<T> conv1d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 Conv1dOptions options = {});

enum class PoolKind { Max, Avg, GlobalAvg };

// input [B,C,L]. Max pooling routes the gradient to the first maximal index.
// GlobalAvg ignores kernel/stride and returns [B,C,1].
template <typename T>
Tensor<T> pool1d(const Tensor<T>& input, PoolKind kind, std::size_t kernel = 1,
                 std::size_t stride = 1);

// Affine map on the last axis: input [..,Din], weight [Dout,Din], bias [Dout] or undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

enum class Activation { Relu, Sigmoid };

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
// Output is clamped into the open interval (0,1) for very large |x|.
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind);

template <typename T>
struct RunningStats {
  Tensor<T> mean;
  Tensor<T> var;
  T momentum = T(0.1);
};

// input [N,C,L]; normalises each channel over N*L. In training mode batch
// statistics are used and `stats` (if given) is updated with the unbiased
// batch variance; otherwise `stats` must be given and is used as-is.
template <typename T>
Tensor<T> batch_norm1d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                       RunningStats<T>* stats, bool training, T eps);

// Normalises over the last axis.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps);

// Along the last axis, stabilised by subtracting the row maximum.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x);
template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x);

// softmax(q k^T / sqrt(dk)) v over the last two axes; q, k, v share shape [..,T,dk].
// When `weights_out` is non-null it receives the attention matrix [..,T,T].
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                    Tensor<T>* weights_out = nullptr);

// Inverted dropout; identity when !training or p == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, T p, Rng& rng, bool training);

}  // namespace eogstage::ops
