#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "eogstage/common/rng.hpp"
#include "eogstage/model/config.hpp"
#include "eogstage/tensor/ops.hpp"
#include "eogstage/tensor/tensor.hpp"

namespace eogstage {

template <typename T>
using NamedTensors = std::vector<std::pair<std::string, Tensor<T>>>;

template <typename T>
struct BatchNorm {
  Tensor<T> gamma, beta;
  ops::RunningStats<T> stats;
};

template <typename T>
struct SqueezeExcite {
  Tensor<T> w1;  // [C/r, C]
  Tensor<T> w2;  // [C, C/r]
};

template <typename T>
struct ResidualBlock {
  ConvSpec spec;
  std::size_t in_channels = 0;
  Tensor<T> conv1, conv2;
  BatchNorm<T> bn1, bn2;
  SqueezeExcite<T> se;
  bool projected = false;  // shortcut is a strided 1x1 conv + norm
  Tensor<T> shortcut_conv;
  BatchNorm<T> shortcut_bn;
};

template <typename T>
struct Dense {
  Tensor<T> weight, bias;
};

template <typename T>
struct EncoderLayer {
  Dense<T> q, k, v, o;
  Tensor<T> norm1_gamma, norm1_beta;
  Dense<T> ff1, ff2;
  Tensor<T> norm2_gamma, norm2_beta;
};

// Intermediate activations kept for interpretability. Filled on request.
template <typename T>
struct ForwardTrace {
  Tensor<T> last_conv;  // [B*W, C, L'] output of the final residual block
  std::vector<Tensor<T>> attention;  // per layer, [B, H, W, W]
};

// Squeeze-excite gate applied to features [B,C,L]: the input scaled by
// sigmoid(w2 relu(w1 mean_L(x))) per channel.
template <typename T>
Tensor<T> se_block(const Tensor<T>& features, const Tensor<T>& w1, const Tensor<T>& w2);

// Sinusoidal table [length, d]: even columns sin(pos / 10000^(i/d)), odd
// columns the matching cos.
template <typename T>
Tensor<T> positional_encoding(std::size_t length, std::size_t d);

// SE-ResNet epoch encoder shared across the window, a post-norm transformer
// over the W epoch tokens and a linear head on the center token.
template <typename T>
class SleepStager {
 public:
  SleepStager(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  // Kaiming-uniform weights (bound 1/sqrt(fan_in), a tenth of that for the
  // classifier head), zero biases, unit norm scales. Resets running
  // statistics.
  void init_parameters(std::uint64_t seed);

  // window [B, W, 1, S] -> pre-softmax logits [B, 5].
  Tensor<T> logits(const Tensor<T>& window, bool training, ForwardTrace<T>* trace = nullptr);
  // log_softmax(logits(...)).
  Tensor<T> forward(const Tensor<T>& window, bool training, ForwardTrace<T>* trace = nullptr);

  // The two halves of logits(): epochs [N, 1, S] -> tokens [N, d_model], and
  // tokens [B, W, d_model] -> logits [B, 5]. Evaluation encodes each epoch of
  // a recording once and reuses its token in every window that contains it.
  Tensor<T> encode_epochs(const Tensor<T>& epochs, bool training,
                          ForwardTrace<T>* trace = nullptr);
  Tensor<T> classify_tokens(const Tensor<T>& tokens, bool training,
                            ForwardTrace<T>* trace = nullptr);
  // Last residual block output [N, C, L'] for epochs [N, 1, S].
  Tensor<T> conv_features(const Tensor<T>& epochs, bool training);
  Tensor<T> transformer(const Tensor<T>& tokens, bool training, ForwardTrace<T>* trace = nullptr);
  // One residual SE block applied to [N, Cin, L].
  Tensor<T> residual(const Tensor<T>& x, std::size_t block, bool training);

  // Trainable parameters in a fixed order.
  NamedTensors<T> parameters() const;
  // Parameters followed by batch-norm running statistics; what a checkpoint holds.
  NamedTensors<T> state() const;
  void zero_grad();

  std::size_t parameter_count() const;

  // Component access for tests and interpretability.
  std::vector<ResidualBlock<T>>& blocks() { return blocks_; }
  std::vector<EncoderLayer<T>>& layers() { return layers_; }
  Dense<T>& head() { return head_; }
  Dense<T>& projection() { return proj_; }

 private:
  enum class Role { Weight, HeadWeight, Bias, Gamma, Beta, RunningMean, RunningVar };
  template <typename Fn>
  void visit(Fn&& fn) const;

  Tensor<T> batch_norm(const Tensor<T>& x, BatchNorm<T>& bn, bool training);
  Tensor<T> maybe_dropout(const Tensor<T>& x, bool training);

  ModelConfig config_;
  Tensor<T> stem_conv_;
  BatchNorm<T> stem_bn_;
  std::vector<ResidualBlock<T>> blocks_;
  Dense<T> proj_;
  std::vector<EncoderLayer<T>> layers_;
  Dense<T> head_;
  Tensor<T> pe_;
  Rng dropout_rng_;
};

extern template class SleepStager<float>;
extern template class SleepStager<double>;

}  // namespace eogstage
