// One training pass at train stride 1 against stride 4 on the same
// synthetic recordings; the stride-4 pass sees about a quarter of the windows.
#include <benchmark/benchmark.h>

#include "eogstage/common/rng.hpp"
#include "eogstage/data/synth.hpp"
#include "eogstage/train/trainer.hpp"

using namespace eogstage;

namespace {

Dataset recordings() {
  Dataset data;
  for (std::uint64_t r = 0; r < 2; ++r) {
    Rng rng = Rng::derive(11, r);
    SynthConfig sc;
    sc.epochs_per_recording = 120;
    sc.excluded_rate = 0;
    auto stages = synth_hypnogram(sc, rng);
    data.recordings.push_back(synth_recording(stages, 960, 32.0, rng));
  }
  return data;
}

void BM_TrainPass(benchmark::State& state) {
  static const Dataset data = recordings();
  TrainConfig config;
  config.train_stride = static_cast<std::size_t>(state.range(0));
  config.batch_size = 16;
  config.max_epochs = 1;
  config.validation_fraction = 0;
  std::size_t windows = data.windows(9, config.train_stride).size();
  for (auto _ : state) {
    auto result = train_fold(data, nullptr, desk_config(), config);
    benchmark::DoNotOptimize(result.steps);
  }
  state.counters["windows"] = static_cast<double>(windows);
}

}  // namespace

BENCHMARK(BM_TrainPass)->Name("train_pass/stride")->Arg(1)->Arg(4)->Unit(benchmark::kSecond)->Iterations(1);

BENCHMARK_MAIN();
