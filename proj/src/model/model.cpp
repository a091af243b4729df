#include "eogstage/model/model.hpp"

#include <cmath>

#include <fmt/format.h>

#include "eogstage/common/error.hpp"

namespace eogstage {

namespace {

template <typename T>
BatchNorm<T> make_bn(std::size_t channels) {
  BatchNorm<T> bn;
  bn.gamma = Tensor<T>({channels}, T(1));
  bn.beta = Tensor<T>({channels}, T(0));
  bn.stats.mean = Tensor<T>({channels}, T(0));
  bn.stats.var = Tensor<T>({channels}, T(1));
  return bn;
}

template <typename T>
Dense<T> make_dense(std::size_t in, std::size_t out) {
  return {Tensor<T>({out, in}), Tensor<T>({out})};
}

}  // namespace

template <typename T>
Tensor<T> se_block(const Tensor<T>& features, const Tensor<T>& w1, const Tensor<T>& w2) {
  if (features.rank() != 3) throw ShapeError("se_block: features must be [B,C,L]");
  const std::size_t b = features.dim(0), c = features.dim(1);
  auto s = ops::reshape(ops::pool1d(features, ops::PoolKind::GlobalAvg), {b, c});
  auto e = ops::sigmoid(ops::linear(ops::relu(ops::linear(s, w1, Tensor<T>())), w2, Tensor<T>()));
  return ops::mul(features, ops::reshape(e, {b, c, 1}));
}

template <typename T>
Tensor<T> positional_encoding(std::size_t length, std::size_t d) {
  Tensor<T> pe({length, d});
  auto p = pe.data();
  for (std::size_t pos = 0; pos < length; ++pos)
    for (std::size_t i = 0; i < d; i += 2) {
      double angle = static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(i) / d);
      p[pos * d + i] = static_cast<T>(std::sin(angle));
      if (i + 1 < d) p[pos * d + i + 1] = static_cast<T>(std::cos(angle));
    }
  return pe;
}

template <typename T>
SleepStager<T>::SleepStager(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  const auto& c = config_;
  stem_conv_ = Tensor<T>({c.stem.channels, 1, c.stem.kernel});
  stem_bn_ = make_bn<T>(c.stem.channels);

  std::size_t in = c.stem.channels;
  for (const auto& spec : c.residual_blocks) {
    ResidualBlock<T> b;
    b.spec = spec;
    b.in_channels = in;
    b.conv1 = Tensor<T>({spec.channels, in, spec.kernel});
    b.bn1 = make_bn<T>(spec.channels);
    b.conv2 = Tensor<T>({spec.channels, spec.channels, spec.kernel});
    b.bn2 = make_bn<T>(spec.channels);
    const std::size_t squeezed = spec.channels / c.se_reduction;
    b.se.w1 = Tensor<T>({squeezed, spec.channels});
    b.se.w2 = Tensor<T>({spec.channels, squeezed});
    b.projected = in != spec.channels || spec.stride != 1;
    if (b.projected) {
      b.shortcut_conv = Tensor<T>({spec.channels, in, 1});
      b.shortcut_bn = make_bn<T>(spec.channels);
    }
    blocks_.push_back(std::move(b));
    in = spec.channels;
  }
  proj_ = make_dense<T>(in, c.d_model);

  for (std::size_t i = 0; i < c.transformer.layers; ++i) {
    EncoderLayer<T> l;
    l.q = make_dense<T>(c.d_model, c.d_model);
    l.k = make_dense<T>(c.d_model, c.d_model);
    l.v = make_dense<T>(c.d_model, c.d_model);
    l.o = make_dense<T>(c.d_model, c.d_model);
    l.norm1_gamma = Tensor<T>({c.d_model}, T(1));
    l.norm1_beta = Tensor<T>({c.d_model}, T(0));
    l.ff1 = make_dense<T>(c.d_model, c.transformer.ff_dim);
    l.ff2 = make_dense<T>(c.transformer.ff_dim, c.d_model);
    l.norm2_gamma = Tensor<T>({c.d_model}, T(1));
    l.norm2_beta = Tensor<T>({c.d_model}, T(0));
    layers_.push_back(std::move(l));
  }
  head_ = make_dense<T>(c.d_model, c.num_classes);
  if (c.positional_encoding == PositionalEncoding::Sinusoidal)
    pe_ = positional_encoding<T>(c.window_size, c.d_model);

  for (auto& [name, t] : parameters()) t.set_requires_grad(true);
  init_parameters(seed);
}

template <typename T>
template <typename Fn>
void SleepStager<T>::visit(Fn&& fn) const {
  auto bn = [&](const std::string& prefix, const BatchNorm<T>& n) {
    fn(prefix + ".gamma", n.gamma, Role::Gamma);
    fn(prefix + ".beta", n.beta, Role::Beta);
    fn(prefix + ".running_mean", n.stats.mean, Role::RunningMean);
    fn(prefix + ".running_var", n.stats.var, Role::RunningVar);
  };
  auto dense = [&](const std::string& prefix, const Dense<T>& d) {
    fn(prefix + ".weight", d.weight, Role::Weight);
    fn(prefix + ".bias", d.bias, Role::Bias);
  };
  fn("stem.conv.weight", stem_conv_, Role::Weight);
  bn("stem.bn", stem_bn_);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& b = blocks_[i];
    const std::string p = fmt::format("blocks.{}", i);
    fn(p + ".conv1.weight", b.conv1, Role::Weight);
    bn(p + ".bn1", b.bn1);
    fn(p + ".conv2.weight", b.conv2, Role::Weight);
    bn(p + ".bn2", b.bn2);
    fn(p + ".se.w1", b.se.w1, Role::Weight);
    fn(p + ".se.w2", b.se.w2, Role::Weight);
    if (b.projected) {
      fn(p + ".shortcut.conv.weight", b.shortcut_conv, Role::Weight);
      bn(p + ".shortcut.bn", b.shortcut_bn);
    }
  }
  dense("proj", proj_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    const std::string p = fmt::format("layers.{}", i);
    dense(p + ".attn.q", l.q);
    dense(p + ".attn.k", l.k);
    dense(p + ".attn.v", l.v);
    dense(p + ".attn.o", l.o);
    fn(p + ".norm1.gamma", l.norm1_gamma, Role::Gamma);
    fn(p + ".norm1.beta", l.norm1_beta, Role::Beta);
    dense(p + ".ff1", l.ff1);
    dense(p + ".ff2", l.ff2);
    fn(p + ".norm2.gamma", l.norm2_gamma, Role::Gamma);
    fn(p + ".norm2.beta", l.norm2_beta, Role::Beta);
  }
  fn("head.weight", head_.weight, Role::HeadWeight);
  fn("head.bias", head_.bias, Role::Bias);
}

template <typename T>
void SleepStager<T>::init_parameters(std::uint64_t seed) {
  Rng rng(seed);
  dropout_rng_ = Rng::derive(seed, 0xd0);
  visit([&](const std::string&, Tensor<T> t, Role role) {
    auto d = t.data();
    switch (role) {
      case Role::Weight: {
        // fan_in = everything but the output axis.
        const double bound = 1.0 / std::sqrt(static_cast<double>(t.numel() / t.dim(0)));
        for (auto& v : d) v = static_cast<T>(rng.uniform(-bound, bound));
        break;
      }
      case Role::HeadWeight: {
        // A tenth of the usual bound keeps the initial logits small, so the
        // untrained model predicts close to uniformly.
        const double bound = 0.1 / std::sqrt(static_cast<double>(t.dim(1)));
        for (auto& v : d) v = static_cast<T>(rng.uniform(-bound, bound));
        break;
      }
      case Role::Gamma:
      case Role::RunningVar:
        for (auto& v : d) v = T(1);
        break;
      default:
        for (auto& v : d) v = T(0);
    }
  });
}

template <typename T>
NamedTensors<T> SleepStager<T>::parameters() const {
  NamedTensors<T> out;
  visit([&](const std::string& name, const Tensor<T>& t, Role role) {
    if (role != Role::RunningMean && role != Role::RunningVar) out.emplace_back(name, t);
  });
  return out;
}

template <typename T>
NamedTensors<T> SleepStager<T>::state() const {
  NamedTensors<T> params, buffers;
  visit([&](const std::string& name, const Tensor<T>& t, Role role) {
    if (role == Role::RunningMean || role == Role::RunningVar)
      buffers.emplace_back(name, t);
    else
      params.emplace_back(name, t);
  });
  for (auto& b : buffers) params.push_back(std::move(b));
  return params;
}

template <typename T>
void SleepStager<T>::zero_grad() {
  for (auto& [name, t] : parameters()) t.clear_grad();
}

template <typename T>
std::size_t SleepStager<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : parameters()) n += t.numel();
  return n;
}

template <typename T>
Tensor<T> SleepStager<T>::batch_norm(const Tensor<T>& x, BatchNorm<T>& bn, bool training) {
  return ops::batch_norm1d(x, bn.gamma, bn.beta, &bn.stats, training, static_cast<T>(config_.norm_eps));
}

template <typename T>
Tensor<T> SleepStager<T>::residual(const Tensor<T>& x, std::size_t block, bool training) {
  auto& b = blocks_.at(block);
  if (x.rank() != 3 || x.dim(1) != b.in_channels)
    throw ShapeError(fmt::format("residual block {} expects [N, {}, L], got {}", block,
                                 b.in_channels, shape_str(x.shape())));
  const auto& s = b.spec;
  auto h = ops::conv1d(x, b.conv1, Tensor<T>(), {s.stride, s.kernel / 2});
  h = ops::relu(batch_norm(h, b.bn1, training));
  h = ops::conv1d(h, b.conv2, Tensor<T>(), {1, s.kernel / 2});
  h = batch_norm(h, b.bn2, training);
  h = se_block(h, b.se.w1, b.se.w2);
  Tensor<T> shortcut = x;
  if (b.projected)
    shortcut = batch_norm(ops::conv1d(x, b.shortcut_conv, Tensor<T>(), {s.stride, 0}),
                          b.shortcut_bn, training);
  return ops::relu(ops::add(h, shortcut));
}

template <typename T>
Tensor<T> SleepStager<T>::maybe_dropout(const Tensor<T>& x, bool training) {
  if (config_.dropout <= 0.0) return x;
  return ops::dropout(x, static_cast<T>(config_.dropout), dropout_rng_, training);
}

template <typename T>
Tensor<T> SleepStager<T>::conv_features(const Tensor<T>& epochs, bool training) {
  if (epochs.rank() != 3 || epochs.dim(1) != 1 || epochs.dim(2) != config_.samples_per_epoch)
    throw ShapeError(fmt::format("epoch encoder expects [N, 1, {}], got {}",
                                 config_.samples_per_epoch, shape_str(epochs.shape())));
  const auto& st = config_.stem;
  auto h = ops::conv1d(epochs, stem_conv_, Tensor<T>(), {st.stride, st.kernel / 2});
  h = ops::relu(batch_norm(h, stem_bn_, training));
  for (std::size_t i = 0; i < blocks_.size(); ++i) h = residual(h, i, training);
  return h;
}

template <typename T>
Tensor<T> SleepStager<T>::encode_epochs(const Tensor<T>& epochs, bool training,
                                        ForwardTrace<T>* trace) {
  auto h = conv_features(epochs, training);
  if (trace) trace->last_conv = h;
  auto pooled = ops::reshape(ops::pool1d(h, ops::PoolKind::GlobalAvg), {h.dim(0), h.dim(1)});
  return ops::linear(pooled, proj_.weight, proj_.bias);
}

template <typename T>
Tensor<T> SleepStager<T>::transformer(const Tensor<T>& tokens, bool training,
                                      ForwardTrace<T>* trace) {
  const std::size_t d = config_.d_model, heads = config_.transformer.heads, dk = d / heads;
  if (tokens.rank() != 3 || tokens.dim(1) != config_.window_size || tokens.dim(2) != d)
    throw ShapeError(fmt::format("transformer expects [B, {}, {}], got {}", config_.window_size,
                                 d, shape_str(tokens.shape())));
  const std::size_t b = tokens.dim(0), w = tokens.dim(1);
  auto x = pe_.defined() ? ops::add(tokens, pe_) : tokens;
  const T eps = static_cast<T>(config_.norm_eps);

  auto split = [&](const Tensor<T>& t) {
    return ops::permute(ops::reshape(t, {b, w, heads, dk}), {0, 2, 1, 3});
  };
  for (auto& l : layers_) {
    auto q = split(ops::linear(x, l.q.weight, l.q.bias));
    auto k = split(ops::linear(x, l.k.weight, l.k.bias));
    auto v = split(ops::linear(x, l.v.weight, l.v.bias));
    Tensor<T> weights;
    auto a = ops::attention(q, k, v, trace ? &weights : nullptr);
    if (trace) trace->attention.push_back(weights);
    a = ops::reshape(ops::permute(a, {0, 2, 1, 3}), {b, w, d});
    a = maybe_dropout(ops::linear(a, l.o.weight, l.o.bias), training);
    x = ops::layer_norm(ops::add(x, a), l.norm1_gamma, l.norm1_beta, eps);

    auto f = ops::relu(ops::linear(x, l.ff1.weight, l.ff1.bias));
    f = maybe_dropout(ops::linear(f, l.ff2.weight, l.ff2.bias), training);
    x = ops::layer_norm(ops::add(x, f), l.norm2_gamma, l.norm2_beta, eps);
  }
  return x;
}

template <typename T>
Tensor<T> SleepStager<T>::classify_tokens(const Tensor<T>& tokens, bool training,
                                          ForwardTrace<T>* trace) {
  auto x = transformer(tokens, training, trace);
  auto center = ops::select(x, 1, config_.center_index());
  return ops::linear(center, head_.weight, head_.bias);
}

template <typename T>
Tensor<T> SleepStager<T>::logits(const Tensor<T>& window, bool training, ForwardTrace<T>* trace) {
  const auto& c = config_;
  if (window.rank() != 4 || window.dim(1) != c.window_size || window.dim(2) != 1 ||
      window.dim(3) != c.samples_per_epoch)
    throw ShapeError(fmt::format("model expects windows [B, {}, 1, {}], got {}", c.window_size,
                                 c.samples_per_epoch, shape_str(window.shape())));
  const std::size_t b = window.dim(0);
  auto epochs = ops::reshape(window, {b * c.window_size, 1, c.samples_per_epoch});
  auto tokens = encode_epochs(epochs, training, trace);
  return classify_tokens(ops::reshape(tokens, {b, c.window_size, c.d_model}), training, trace);
}

template <typename T>
Tensor<T> SleepStager<T>::forward(const Tensor<T>& window, bool training, ForwardTrace<T>* trace) {
  return ops::log_softmax(logits(window, training, trace));
}

template Tensor<float> se_block(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> se_block(const Tensor<double>&, const Tensor<double>&,
                                 const Tensor<double>&);
template Tensor<float> positional_encoding<float>(std::size_t, std::size_t);
template Tensor<double> positional_encoding<double>(std::size_t, std::size_t);
template class SleepStager<float>;
template class SleepStager<double>;

}  // namespace eogstage
