#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "eogstage/train/trainer.hpp"

namespace eogstage {

struct FoldReport {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> train, validation, test;
  ConfusionMatrix confusion;
  MetricsReport metrics;
  std::uint64_t steps = 0;
  std::size_t epochs = 0;
  double seconds = 0;
};

struct CrossValResult {
  std::vector<FoldReport> folds;
  ConfusionMatrix pooled;  // elementwise sum of the fold confusions
  MetricsReport pooled_metrics;
  MetricsReport averaged_metrics;
};

// Subjects held out of `train` for early stopping: round(fraction * n), at
// least one when fraction > 0 and n >= 2, never all of them.
std::vector<std::string> choose_validation(const std::vector<std::string>& train, double fraction,
                                           std::uint64_t seed);

nlohmann::json to_json(const FoldReport& r);

// Subject-level k-fold CV. Fold i trains with seed ^ i and is tested at
// eval_stride with its best checkpoint. Up to `jobs` folds run concurrently.
// Each fold writes into out_dir/fold_<i>; the summary files are written even
// when a fold fails, covering the folds that finished, before the error is
// rethrown. `only` restricts the run to the listed fold indices.
CrossValResult cross_validate(const DatasetManifest& manifest, std::size_t k,
                              const ModelConfig& model_config, const TrainConfig& config,
                              const std::filesystem::path& out_dir, std::size_t jobs = 1,
                              const std::vector<std::size_t>& only = {});

}  // namespace eogstage
