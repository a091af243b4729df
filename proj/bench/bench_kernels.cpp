// Serial reference kernels against the OpenMP versions, at the shapes the
// desk model sees for a batch of 16 nine-epoch windows (144 epochs).
#include <benchmark/benchmark.h>

#include <vector>

#include "eogstage/common/rng.hpp"
#include "eogstage/kernels/kernels.hpp"

namespace k = eogstage::kernels;

namespace {

std::vector<float> noise(std::size_t n, std::uint64_t seed) {
  eogstage::Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return v;
}

// Range(0): layer. 0 = stem, 1 = first residual conv, 2 = last residual conv.
k::Conv1dDims conv_dims(int layer) {
  switch (layer) {
    case 0: return {144, 1, 8, 960, 7, 4, 3};
    case 1: return {144, 8, 16, 240, 3, 2, 1};
    default: return {144, 32, 64, 60, 3, 2, 1};
  }
}

struct ConvData {
  k::Conv1dDims d;
  std::vector<float> in, w, b, out, gout, gin, gw, gb;
  explicit ConvData(int layer) : d(conv_dims(layer)) {
    in = noise(d.batch * d.in_channels * d.in_length, 1);
    w = noise(d.out_channels * d.in_channels * d.kernel, 2);
    b = noise(d.out_channels, 3);
    out.resize(d.batch * d.out_channels * d.out_length());
    gout = noise(out.size(), 4);
    gin.resize(in.size());
    gw.resize(w.size());
    gb.resize(b.size());
  }
};

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  ConvData c(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    if constexpr (Parallel)
      k::omp::conv1d_forward<float>(c.d, c.in, c.w, c.b, c.out);
    else
      k::serial::conv1d_forward<float>(c.d, c.in, c.w, c.b, c.out);
    benchmark::DoNotOptimize(c.out.data());
  }
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
  ConvData c(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::omp::conv1d_backward_input<float>(c.d, c.gout, c.w, c.gin);
      k::omp::conv1d_backward_weight<float>(c.d, c.gout, c.in, c.gw, c.gb);
    } else {
      k::serial::conv1d_backward_input<float>(c.d, c.gout, c.w, c.gin);
      k::serial::conv1d_backward_weight<float>(c.d, c.gout, c.in, c.gw, c.gb);
    }
    benchmark::DoNotOptimize(c.gw.data());
  }
}

// Token projection and feed-forward sized layers: [144 x 64] x [64 x 128].
template <bool Parallel>
void BM_Dense(benchmark::State& state) {
  const k::DenseDims d{static_cast<std::size_t>(state.range(0)), 64, 128};
  auto x = noise(d.rows * d.in_features, 5);
  auto w = noise(d.out_features * d.in_features, 6);
  auto b = noise(d.out_features, 7);
  std::vector<float> out(d.rows * d.out_features);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::omp::dense_forward<float>(d, x, w, b, out);
    else
      k::serial::dense_forward<float>(d, x, w, b, out);
    benchmark::DoNotOptimize(out.data());
  }
}

// t-SNE input: N feature rows of 64 dims.
template <bool Parallel>
void BM_PairwiseDistances(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> x(n * 64);
  eogstage::Rng rng(8);
  for (auto& v : x) v = rng.normal();
  std::vector<double> out(n * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::omp::pairwise_sq_distances<double>(n, 64, x, out);
    else
      k::serial::pairwise_sq_distances<double>(n, 64, x, out);
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/serial")->DenseRange(0, 2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/omp")->DenseRange(0, 2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/serial")->DenseRange(0, 2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/omp")->DenseRange(0, 2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Dense<false>)->Name("dense_forward/serial")->Arg(144)->Arg(1296)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Dense<true>)->Name("dense_forward/omp")->Arg(144)->Arg(1296)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_PairwiseDistances<false>)->Name("pairwise/serial")->Arg(500)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PairwiseDistances<true>)->Name("pairwise/omp")->Arg(500)->Arg(1000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
