#include "eogstage/tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "eogstage/common/error.hpp"
#include "eogstage/kernels/kernels.hpp"
#include "eogstage/tensor/tape.hpp"

namespace eogstage::ops {

namespace {

using autograd::record;

// Element offsets of a and b for every element of the broadcast output.
struct Broadcast {
  Shape out_shape;
  std::vector<std::size_t> a_index;
  std::vector<std::size_t> b_index;
  bool same = false;
};

Broadcast plan_broadcast(const Shape& a, const Shape& b) {
  Broadcast plan;
  if (a == b) {
    plan.out_shape = a;
    plan.same = true;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  std::vector<std::size_t> sa(rank, 0), sb(rank, 0);
  std::size_t stride_a = 1, stride_b = 1;
  for (std::size_t r = 0; r < rank; ++r) {
    const std::size_t axis = rank - 1 - r;
    const std::size_t da = r < a.size() ? a[a.size() - 1 - r] : 1;
    const std::size_t db = r < b.size() ? b[b.size() - 1 - r] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b) +
                       " (axis " + std::to_string(axis) + ": " + std::to_string(da) + " vs " +
                       std::to_string(db) + ")");
    }
    out[axis] = std::max(da, db);
    sa[axis] = da == 1 ? 0 : stride_a;
    sb[axis] = db == 1 ? 0 : stride_b;
    stride_a *= da;
    stride_b *= db;
  }
  const std::size_t n = shape_numel(out);
  plan.a_index.resize(n);
  plan.b_index.resize(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t i = 0; i < n; ++i) {
    plan.a_index[i] = oa;
    plan.b_index[i] = ob;
    for (std::size_t axis = rank; axis-- > 0;) {
      ++idx[axis];
      oa += sa[axis];
      ob += sb[axis];
      if (idx[axis] < out[axis]) break;
      oa -= sa[axis] * out[axis];
      ob -= sb[axis] * out[axis];
      idx[axis] = 0;
    }
  }
  plan.out_shape = std::move(out);
  return plan;
}

enum class BinaryKind { Add, Sub, Mul };

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, BinaryKind kind) {
  auto plan = std::make_shared<Broadcast>(plan_broadcast(a.shape(), b.shape()));
  Tensor<T> out(plan->out_shape);
  auto ad = a.data();
  auto bd = b.data();
  auto od = out.data();
  const std::size_t n = od.size();
  for (std::size_t i = 0; i < n; ++i) {
    const T x = ad[plan->same ? i : plan->a_index[i]];
    const T y = bd[plan->same ? i : plan->b_index[i]];
    switch (kind) {
      case BinaryKind::Add: od[i] = x + y; break;
      case BinaryKind::Sub: od[i] = x - y; break;
      case BinaryKind::Mul: od[i] = x * y; break;
    }
  }
  record<T>("binary", {a, b}, out, [a = a, b = b, out = out, plan = plan, kind = kind]() mutable {
    auto g = out.grad();
    const std::size_t n = g.size();
    if (a.requires_grad()) {
      auto ga = a.ensure_grad();
      auto bd = b.data();
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t ia = plan->same ? i : plan->a_index[i];
        const std::size_t ib = plan->same ? i : plan->b_index[i];
        ga[ia] += kind == BinaryKind::Mul ? g[i] * bd[ib] : g[i];
      }
    }
    if (b.requires_grad()) {
      auto gb = b.ensure_grad();
      auto ad = a.data();
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t ia = plan->same ? i : plan->a_index[i];
        const std::size_t ib = plan->same ? i : plan->b_index[i];
        switch (kind) {
          case BinaryKind::Add: gb[ib] += g[i]; break;
          case BinaryKind::Sub: gb[ib] -= g[i]; break;
          case BinaryKind::Mul: gb[ib] += g[i] * ad[ia]; break;
        }
      }
    }
  });
  return out;
}

void require_rank(const Shape& s, std::size_t rank, const char* op, const char* what) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     ", got shape " + shape_str(s));
  }
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryKind::Add);
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryKind::Sub);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryKind::Mul);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  Tensor<T> out(a.shape());
  auto ad = a.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] * factor;
  record<T>("scale", {a}, out, [a = a, out = out, factor = factor]() mutable {
    auto g = out.grad();
    auto ga = a.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = 0;
  for (auto v : a.data()) acc += v;
  auto out = Tensor<T>::scalar(acc);
  record<T>("sum", {a}, out, [a = a, out = out]() mutable {
    const T g = out.grad()[0];
    for (auto& ga : a.ensure_grad()) ga += g;
  });
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  if (a.numel() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  Tensor<T> out(std::move(shape), std::vector<T>(a.data().begin(), a.data().end()));
  record<T>("reshape", {a}, out, [a = a, out = out]() mutable {
    auto g = out.grad();
    auto ga = a.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
  return out;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& axes) {
  const auto& in = a.shape();
  const std::size_t rank = in.size();
  if (axes.size() != rank) {
    throw ShapeError("permute: " + std::to_string(axes.size()) + " axes for shape " +
                     shape_str(in));
  }
  std::vector<bool> seen(rank, false);
  for (auto ax : axes) {
    if (ax >= rank || seen[ax]) throw ShapeError("permute: invalid axis list");
    seen[ax] = true;
  }
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_stride[i - 1] = in_stride[i] * in[i];
  Shape out_shape(rank);
  std::vector<std::size_t> stride(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in[axes[i]];
    stride[i] = in_stride[axes[i]];
  }
  const std::size_t n = a.numel();
  auto source = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t off = 0;
  for (std::size_t i = 0; i < n; ++i) {
    (*source)[i] = off;
    for (std::size_t ax = rank; ax-- > 0;) {
      ++idx[ax];
      off += stride[ax];
      if (idx[ax] < out_shape[ax]) break;
      off -= stride[ax] * out_shape[ax];
      idx[ax] = 0;
    }
  }
  Tensor<T> out(out_shape);
  auto ad = a.data();
  auto od = out.data();
  for (std::size_t i = 0; i < n; ++i) od[i] = ad[(*source)[i]];
  record<T>("permute", {a}, out, [a = a, out = out, source = source]() mutable {
    auto g = out.grad();
    auto ga = a.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[(*source)[i]] += g[i];
  });
  return out;
}

template <typename T>
Tensor<T> select(const Tensor<T>& a, std::size_t axis, std::size_t index) {
  const auto& s = a.shape();
  if (axis >= s.size()) throw ShapeError("select: axis out of range for " + shape_str(s));
  if (index >= s[axis]) {
    throw ShapeError("select: index " + std::to_string(index) + " out of range for axis " +
                     std::to_string(axis) + " of " + shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t dim = s[axis];
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i != axis) out_shape.push_back(s[i]);
  }
  Tensor<T> out(out_shape);
  auto ad = a.data();
  auto od = out.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(ad.begin() + static_cast<std::ptrdiff_t>((o * dim + index) * inner), inner,
                od.begin() + static_cast<std::ptrdiff_t>(o * inner));
  }
  record<T>("select", {a}, out, [a = a, out = out, outer = outer, inner = inner, dim = dim, index = index]() mutable {
    auto g = out.grad();
    auto ga = a.ensure_grad();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t j = 0; j < inner; ++j) ga[(o * dim + index) * inner + j] += g[o * inner + j];
    }
  });
  return out;
}

template <typename T>
Tensor<T> conv1d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 Conv1dOptions options) {
  require_rank(input.shape(), 3, "conv1d", "input");
  require_rank(weight.shape(), 3, "conv1d", "weight");
  kernels::Conv1dDims d{input.dim(0), input.dim(1), weight.dim(0), input.dim(2),
                        weight.dim(2), options.stride, options.padding};
  if (weight.dim(1) != d.in_channels) {
    throw ShapeError("conv1d: weight in_channels (dim 1) is " + std::to_string(weight.dim(1)) +
                     " but input channels (dim 1) is " + std::to_string(d.in_channels));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != d.out_channels)) {
    throw ShapeError("conv1d: bias shape " + shape_str(bias.shape()) + " does not match " +
                     std::to_string(d.out_channels) + " output channels");
  }
  if (d.stride < 1) throw ShapeError("conv1d: stride must be >= 1");
  if (d.kernel < 1 || d.kernel > d.in_length + 2 * d.padding) {
    throw ShapeError("conv1d: kernel length (weight dim 2) " + std::to_string(d.kernel) +
                     " exceeds padded input length " +
                     std::to_string(d.in_length + 2 * d.padding));
  }
  Tensor<T> out({d.batch, d.out_channels, d.out_length()});
  const std::span<const T> no_bias;
  kernels::omp::conv1d_forward<T>(d, input.data(), weight.data(),
                                  bias.defined() ? bias.data() : no_bias, out.data());
  record<T>("conv1d", {input, weight, bias}, out, [input = input, weight = weight, bias = bias, out = out, d = d]() mutable {
    auto g = out.grad();
    if (input.requires_grad()) {
      kernels::omp::conv1d_backward_input<T>(d, g, weight.data(), input.ensure_grad());
    }
    const bool want_w = weight.requires_grad();
    const bool want_b = bias.defined() && bias.requires_grad();
    if (want_w || want_b) {
      std::vector<T> scratch_w;
      std::span<T> gw;
      if (want_w) {
        gw = weight.ensure_grad();
      } else {
        scratch_w.assign(weight.numel(), T(0));
        gw = scratch_w;
      }
      std::span<T> gb = want_b ? bias.ensure_grad() : std::span<T>{};
      kernels::omp::conv1d_backward_weight<T>(d, g, input.data(), gw, gb);
    }
  });
  return out;
}

template <typename T>
Tensor<T> pool1d(const Tensor<T>& input, PoolKind kind, std::size_t kernel, std::size_t stride) {
  require_rank(input.shape(), 3, "pool1d", "input");
  const std::size_t rows = input.dim(0) * input.dim(1);
  const std::size_t len = input.dim(2);
  auto xd = input.data();
  if (kind == PoolKind::GlobalAvg) {
    if (len == 0) throw ShapeError("pool1d: empty input");
    Tensor<T> out({input.dim(0), input.dim(1), 1});
    auto od = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
      T acc = 0;
      for (std::size_t i = 0; i < len; ++i) acc += xd[r * len + i];
      od[r] = acc / static_cast<T>(len);
    }
    record<T>("global_avg_pool", {input}, out, [input = input, out = out, rows = rows, len = len]() mutable {
      auto g = out.grad();
      auto gx = input.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const T v = g[r] / static_cast<T>(len);
        for (std::size_t i = 0; i < len; ++i) gx[r * len + i] += v;
      }
    });
    return out;
  }
  if (kernel < 1 || stride < 1) throw ShapeError("pool1d: kernel and stride must be >= 1");
  if (kernel > len) {
    throw ShapeError("pool1d: kernel " + std::to_string(kernel) + " exceeds input length " +
                     std::to_string(len));
  }
  const std::size_t lout = (len - kernel) / stride + 1;
  Tensor<T> out({input.dim(0), input.dim(1), lout});
  auto od = out.data();
  if (kind == PoolKind::Max) {
    auto argmax = std::make_shared<std::vector<std::size_t>>(rows * lout);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t i = 0; i < lout; ++i) {
        std::size_t best = r * len + i * stride;
        for (std::size_t k = 1; k < kernel; ++k) {
          const std::size_t pos = r * len + i * stride + k;
          if (xd[pos] > xd[best]) best = pos;
        }
        od[r * lout + i] = xd[best];
        (*argmax)[r * lout + i] = best;
      }
    }
    record<T>("max_pool", {input}, out, [input = input, out = out, argmax = argmax]() mutable {
      auto g = out.grad();
      auto gx = input.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[(*argmax)[i]] += g[i];
    });
    return out;
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < lout; ++i) {
      T acc = 0;
      for (std::size_t k = 0; k < kernel; ++k) acc += xd[r * len + i * stride + k];
      od[r * lout + i] = acc / static_cast<T>(kernel);
    }
  }
  record<T>("avg_pool", {input}, out, [input = input, out = out, rows = rows, len = len, lout = lout, kernel = kernel, stride = stride]() mutable {
    auto g = out.grad();
    auto gx = input.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t i = 0; i < lout; ++i) {
        const T v = g[r * lout + i] / static_cast<T>(kernel);
        for (std::size_t k = 0; k < kernel; ++k) gx[r * len + i * stride + k] += v;
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (input.rank() < 1) throw ShapeError("linear: input must have rank >= 1");
  require_rank(weight.shape(), 2, "linear", "weight");
  const std::size_t din = input.shape().back();
  if (weight.dim(1) != din) {
    throw ShapeError("linear: input trailing dim " + std::to_string(din) +
                     " does not match weight in_features (dim 1) " + std::to_string(weight.dim(1)));
  }
  const std::size_t dout = weight.dim(0);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != dout)) {
    throw ShapeError("linear: bias shape " + shape_str(bias.shape()) + " does not match " +
                     std::to_string(dout) + " outputs");
  }
  Shape out_shape = input.shape();
  out_shape.back() = dout;
  kernels::DenseDims d{input.numel() / std::max<std::size_t>(din, 1), din, dout};
  Tensor<T> out(out_shape);
  const std::span<const T> no_bias;
  kernels::omp::dense_forward<T>(d, input.data(), weight.data(),
                                 bias.defined() ? bias.data() : no_bias, out.data());
  record<T>("linear", {input, weight, bias}, out, [input = input, weight = weight, bias = bias, out = out, d = d]() mutable {
    auto g = out.grad();
    if (input.requires_grad()) {
      kernels::omp::dense_backward_input<T>(d, g, weight.data(), input.ensure_grad());
    }
    const bool want_w = weight.requires_grad();
    const bool want_b = bias.defined() && bias.requires_grad();
    if (want_w || want_b) {
      std::vector<T> scratch_w;
      std::span<T> gw;
      if (want_w) {
        gw = weight.ensure_grad();
      } else {
        scratch_w.assign(weight.numel(), T(0));
        gw = scratch_w;
      }
      std::span<T> gb = want_b ? bias.ensure_grad() : std::span<T>{};
      kernels::omp::dense_backward_weight<T>(d, g, input.data(), gw, gb);
    }
  });
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = xd[i] > T(0) ? xd[i] : T(0);
  record<T>("relu", {x}, out, [x = x, out = out]() mutable {
    auto g = out.grad();
    auto gx = x.ensure_grad();
    auto xd = x.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xd[i] > T(0)) gx[i] += g[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  constexpr T lo = std::numeric_limits<T>::min();
  const T hi = std::nextafter(T(1), T(0));
  Tensor<T> out(x.shape());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) {
    const T v = xd[i];
    T s;
    if (v >= T(0)) {
      s = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      s = e / (T(1) + e);
    }
    od[i] = std::clamp(s, lo, hi);
  }
  record<T>("sigmoid", {x}, out, [x = x, out = out]() mutable {
    auto g = out.grad();
    auto gx = x.ensure_grad();
    auto od = out.data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * od[i] * (T(1) - od[i]);
  });
  return out;
}

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind) {
  return kind == Activation::Relu ? relu(x) : sigmoid(x);
}

template <typename T>
Tensor<T> batch_norm1d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                       RunningStats<T>* stats, bool training, T eps) {
  require_rank(input.shape(), 3, "batch_norm1d", "input");
  if (!(eps > T(0))) throw NumericError("batch_norm1d: eps must be > 0");
  const std::size_t n = input.dim(0), c = input.dim(1), len = input.dim(2);
  if (gamma.numel() != c || beta.numel() != c) {
    throw ShapeError("batch_norm1d: gamma/beta must have " + std::to_string(c) + " elements");
  }
  if (!training && stats == nullptr) {
    throw Error("batch_norm1d: evaluation mode needs running statistics");
  }
  const std::size_t count = n * len;
  if (count == 0) throw ShapeError("batch_norm1d: empty input");
  auto xd = input.data();
  auto gd = gamma.data();
  auto bd = beta.data();

  auto xhat = std::make_shared<std::vector<T>>(input.numel());
  auto inv_std = std::make_shared<std::vector<T>>(c);
  Tensor<T> out(input.shape());
  auto od = out.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mu, var;
    if (training) {
      double acc = 0;
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t i = 0; i < len; ++i) acc += xd[(b * c + ch) * len + i];
      }
      mu = acc / static_cast<double>(count);
      double sq = 0;
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t i = 0; i < len; ++i) {
          const double dv = xd[(b * c + ch) * len + i] - mu;
          sq += dv * dv;
        }
      }
      var = sq / static_cast<double>(count);
      if (stats != nullptr) {
        const double m = stats->momentum;
        const double unbiased = count > 1 ? sq / static_cast<double>(count - 1) : var;
        auto rm = stats->mean.data();
        auto rv = stats->var.data();
        rm[ch] = static_cast<T>((1.0 - m) * rm[ch] + m * mu);
        rv[ch] = static_cast<T>((1.0 - m) * rv[ch] + m * unbiased);
      }
    } else {
      mu = stats->mean.data()[ch];
      var = stats->var.data()[ch];
    }
    const T is = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    (*inv_std)[ch] = is;
    const T m = static_cast<T>(mu);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t i = 0; i < len; ++i) {
        const std::size_t p = (b * c + ch) * len + i;
        const T h = (xd[p] - m) * is;
        (*xhat)[p] = h;
        od[p] = gd[ch] * h + bd[ch];
      }
    }
  }
  record<T>("batch_norm1d", {input, gamma, beta}, out,
            [input = input, gamma = gamma, beta = beta, out = out, xhat = xhat, inv_std = inv_std, training = training, n = n, c = c, len = len]() mutable {
              auto g = out.grad();
              auto gd = gamma.data();
              const double count = static_cast<double>(n * len);
              for (std::size_t ch = 0; ch < c; ++ch) {
                double sum_g = 0, sum_gx = 0;
                for (std::size_t b = 0; b < n; ++b) {
                  for (std::size_t i = 0; i < len; ++i) {
                    const std::size_t p = (b * c + ch) * len + i;
                    sum_g += g[p];
                    sum_gx += g[p] * (*xhat)[p];
                  }
                }
                if (gamma.requires_grad()) gamma.ensure_grad()[ch] += static_cast<T>(sum_gx);
                if (beta.requires_grad()) beta.ensure_grad()[ch] += static_cast<T>(sum_g);
                if (!input.requires_grad()) continue;
                auto gx = input.ensure_grad();
                const T scale_ch = gd[ch] * (*inv_std)[ch];
                const T mean_g = static_cast<T>(sum_g / count);
                const T mean_gx = static_cast<T>(sum_gx / count);
                for (std::size_t b = 0; b < n; ++b) {
                  for (std::size_t i = 0; i < len; ++i) {
                    const std::size_t p = (b * c + ch) * len + i;
                    if (training) {
                      gx[p] += scale_ch * (g[p] - mean_g - (*xhat)[p] * mean_gx);
                    } else {
                      gx[p] += scale_ch * g[p];
                    }
                  }
                }
              }
            });
  return out;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps) {
  if (input.rank() < 1) throw ShapeError("layer_norm: input must have rank >= 1");
  if (!(eps > T(0))) throw NumericError("layer_norm: eps must be > 0");
  const std::size_t d = input.shape().back();
  if (gamma.numel() != d || beta.numel() != d) {
    throw ShapeError("layer_norm: gamma/beta must have " + std::to_string(d) + " elements");
  }
  const std::size_t rows = d == 0 ? 0 : input.numel() / d;
  auto xd = input.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  auto xhat = std::make_shared<std::vector<T>>(input.numel());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  Tensor<T> out(input.shape());
  auto od = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0;
    for (std::size_t i = 0; i < d; ++i) acc += xd[r * d + i];
    const double mu = acc / static_cast<double>(d);
    double sq = 0;
    for (std::size_t i = 0; i < d; ++i) {
      const double dv = xd[r * d + i] - mu;
      sq += dv * dv;
    }
    const T is = static_cast<T>(1.0 / std::sqrt(sq / static_cast<double>(d) + eps));
    (*inv_std)[r] = is;
    for (std::size_t i = 0; i < d; ++i) {
      const T h = (xd[r * d + i] - static_cast<T>(mu)) * is;
      (*xhat)[r * d + i] = h;
      od[r * d + i] = gd[i] * h + bd[i];
    }
  }
  record<T>("layer_norm", {input, gamma, beta}, out,
            [input = input, gamma = gamma, beta = beta, out = out, xhat = xhat, inv_std = inv_std, rows = rows, d = d]() mutable {
              auto g = out.grad();
              auto gd = gamma.data();
              if (gamma.requires_grad() || beta.requires_grad()) {
                std::vector<T> gg(d, T(0)), gb(d, T(0));
                for (std::size_t r = 0; r < rows; ++r) {
                  for (std::size_t i = 0; i < d; ++i) {
                    gg[i] += g[r * d + i] * (*xhat)[r * d + i];
                    gb[i] += g[r * d + i];
                  }
                }
                if (gamma.requires_grad()) {
                  auto dst = gamma.ensure_grad();
                  for (std::size_t i = 0; i < d; ++i) dst[i] += gg[i];
                }
                if (beta.requires_grad()) {
                  auto dst = beta.ensure_grad();
                  for (std::size_t i = 0; i < d; ++i) dst[i] += gb[i];
                }
              }
              if (!input.requires_grad()) return;
              auto gx = input.ensure_grad();
              for (std::size_t r = 0; r < rows; ++r) {
                double mean_dh = 0, mean_dhx = 0;
                for (std::size_t i = 0; i < d; ++i) {
                  const double dh = g[r * d + i] * gd[i];
                  mean_dh += dh;
                  mean_dhx += dh * (*xhat)[r * d + i];
                }
                mean_dh /= static_cast<double>(d);
                mean_dhx /= static_cast<double>(d);
                for (std::size_t i = 0; i < d; ++i) {
                  const T dh = g[r * d + i] * gd[i];
                  gx[r * d + i] += (*inv_std)[r] * (dh - static_cast<T>(mean_dh) -
                                                    (*xhat)[r * d + i] * static_cast<T>(mean_dhx));
                }
              }
            });
  return out;
}

namespace {

template <typename T>
void softmax_rows(std::span<const T> x, std::span<T> y, std::size_t rows, std::size_t k,
                  bool log_space) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * k;
    T* yr = y.data() + r * k;
    const T mx = *std::max_element(xr, xr + k);
    T total = 0;
    for (std::size_t i = 0; i < k; ++i) total += std::exp(xr[i] - mx);
    if (log_space) {
      const T lse = std::log(total);
      for (std::size_t i = 0; i < k; ++i) yr[i] = xr[i] - mx - lse;
    } else {
      for (std::size_t i = 0; i < k; ++i) yr[i] = std::exp(xr[i] - mx) / total;
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  if (x.rank() < 1 || x.shape().back() < 1) throw ShapeError("softmax: last axis must be >= 1");
  const std::size_t k = x.shape().back();
  const std::size_t rows = x.numel() / k;
  Tensor<T> out(x.shape());
  softmax_rows<T>(x.data(), out.data(), rows, k, false);
  record<T>("softmax", {x}, out, [x = x, out = out, rows = rows, k = k]() mutable {
    auto g = out.grad();
    auto y = out.data();
    auto gx = x.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      T dot = 0;
      for (std::size_t i = 0; i < k; ++i) dot += g[r * k + i] * y[r * k + i];
      for (std::size_t i = 0; i < k; ++i) gx[r * k + i] += y[r * k + i] * (g[r * k + i] - dot);
    }
  });
  return out;
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x) {
  if (x.rank() < 1 || x.shape().back() < 1) {
    throw ShapeError("log_softmax: last axis must be >= 1");
  }
  const std::size_t k = x.shape().back();
  const std::size_t rows = x.numel() / k;
  Tensor<T> out(x.shape());
  softmax_rows<T>(x.data(), out.data(), rows, k, true);
  record<T>("log_softmax", {x}, out, [x = x, out = out, rows = rows, k = k]() mutable {
    auto g = out.grad();
    auto y = out.data();
    auto gx = x.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      T total = 0;
      for (std::size_t i = 0; i < k; ++i) total += g[r * k + i];
      for (std::size_t i = 0; i < k; ++i) {
        gx[r * k + i] += g[r * k + i] - std::exp(y[r * k + i]) * total;
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                    Tensor<T>* weights_out) {
  if (q.rank() < 2) throw ShapeError("attention: inputs need rank >= 2");
  if (q.shape() != k.shape() || q.shape() != v.shape()) {
    throw ShapeError("attention: q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) +
                     ", v " + shape_str(v.shape()) + " must match");
  }
  const std::size_t t = q.dim(q.rank() - 2);
  const std::size_t dk = q.dim(q.rank() - 1);
  const std::size_t batch = q.numel() / (t * dk);
  const T inv_scale = T(1) / std::sqrt(static_cast<T>(dk));
  Shape wshape(q.shape().begin(), q.shape().end() - 1);
  wshape.push_back(t);
  Tensor<T> weights(wshape);
  Tensor<T> out(q.shape());
  auto qd = q.data();
  auto kd = k.data();
  auto vd = v.data();
  auto wd = weights.data();
  auto od = out.data();
  std::vector<T> scores(t);
  for (std::size_t b = 0; b < batch; ++b) {
    const T* qb = qd.data() + b * t * dk;
    const T* kb = kd.data() + b * t * dk;
    const T* vb = vd.data() + b * t * dk;
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = 0; j < t; ++j) {
        T acc = 0;
        for (std::size_t e = 0; e < dk; ++e) acc += qb[i * dk + e] * kb[j * dk + e];
        scores[j] = acc * inv_scale;
      }
      T* wrow = wd.data() + (b * t + i) * t;
      softmax_rows<T>(scores, std::span<T>(wrow, t), 1, t, false);
      T* orow = od.data() + (b * t + i) * dk;
      for (std::size_t e = 0; e < dk; ++e) orow[e] = T(0);
      for (std::size_t j = 0; j < t; ++j) {
        for (std::size_t e = 0; e < dk; ++e) orow[e] += wrow[j] * vb[j * dk + e];
      }
    }
  }
  if (weights_out != nullptr) *weights_out = weights;
  record<T>("attention", {q, k, v}, out,
            [q = q, k = k, v = v, out = out, weights = weights, batch = batch, t = t, dk = dk, inv_scale = inv_scale]() mutable {
              auto g = out.grad();
              auto wd = weights.data();
              auto qd = q.data();
              auto kd = k.data();
              auto vd = v.data();
              std::span<T> gq = q.requires_grad() ? q.ensure_grad() : std::span<T>{};
              std::span<T> gk = k.requires_grad() ? k.ensure_grad() : std::span<T>{};
              std::span<T> gv = v.requires_grad() ? v.ensure_grad() : std::span<T>{};
              std::vector<T> dw(t), ds(t);
              for (std::size_t b = 0; b < batch; ++b) {
                const std::size_t base = b * t * dk;
                for (std::size_t i = 0; i < t; ++i) {
                  const T* wrow = wd.data() + (b * t + i) * t;
                  const T* gout = g.data() + base + i * dk;
                  // dV[j] += w[i,j] * dO[i]; dW[i,j] = dO[i] . V[j]
                  T dot = 0;
                  for (std::size_t j = 0; j < t; ++j) {
                    T acc = 0;
                    for (std::size_t e = 0; e < dk; ++e) {
                      acc += gout[e] * vd[base + j * dk + e];
                      if (!gv.empty()) gv[base + j * dk + e] += wrow[j] * gout[e];
                    }
                    dw[j] = acc;
                    dot += acc * wrow[j];
                  }
                  for (std::size_t j = 0; j < t; ++j) ds[j] = wrow[j] * (dw[j] - dot) * inv_scale;
                  for (std::size_t j = 0; j < t; ++j) {
                    for (std::size_t e = 0; e < dk; ++e) {
                      if (!gq.empty()) gq[base + i * dk + e] += ds[j] * kd[base + j * dk + e];
                      if (!gk.empty()) gk[base + j * dk + e] += ds[j] * qd[base + i * dk + e];
                    }
                  }
                }
              }
            });
  return out;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, T p, Rng& rng, bool training) {
  if (p < T(0) || p >= T(1)) throw NumericError("dropout: p must be in [0, 1)");
  if (!training || p == T(0)) return x;
  auto mask = std::make_shared<std::vector<T>>(x.numel());
  const T keep_scale = T(1) / (T(1) - p);
  for (auto& m : *mask) m = rng.uniform() < static_cast<double>(p) ? T(0) : keep_scale;
  Tensor<T> out(x.shape());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = xd[i] * (*mask)[i];
  record<T>("dropout", {x}, out, [x = x, out = out, mask = mask]() mutable {
    auto g = out.grad();
    auto gx = x.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*mask)[i];
  });
  return out;
}

#define EOGSTAGE_INSTANTIATE_OPS(T)                                                          \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                          \
  template Tensor<T> sum<T>(const Tensor<T>&);                                               \
  template Tensor<T> mean<T>(const Tensor<T>&);                                              \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                    \
  template Tensor<T> permute<T>(const Tensor<T>&, const std::vector<std::size_t>&);          \
  template Tensor<T> select<T>(const Tensor<T>&, std::size_t, std::size_t);                  \
  template Tensor<T> conv1d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,         \
                               Conv1dOptions);                                               \
  template Tensor<T> pool1d<T>(const Tensor<T>&, PoolKind, std::size_t, std::size_t);        \
  template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);        \
  template Tensor<T> relu<T>(const Tensor<T>&);                                              \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                                           \
  template Tensor<T> activation<T>(const Tensor<T>&, Activation);                            \
  template Tensor<T> batch_norm1d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                     RunningStats<T>*, bool, T);                             \
  template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T); \
  template Tensor<T> softmax<T>(const Tensor<T>&);                                           \
  template Tensor<T> log_softmax<T>(const Tensor<T>&);                                       \
  template Tensor<T> attention<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                  Tensor<T>*);                                               \
  template Tensor<T> dropout<T>(const Tensor<T>&, T, Rng&, bool);

EOGSTAGE_INSTANTIATE_OPS(float)
EOGSTAGE_INSTANTIATE_OPS(double)

}  // namespace eogstage::ops
