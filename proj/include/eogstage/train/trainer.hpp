#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "eogstage/data/dataset.hpp"
#include "eogstage/eval/metrics.hpp"
#include "eogstage/model/checkpoint.hpp"
#include "eogstage/train/adam.hpp"

#include "json.hpp"

namespace eogstage {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 50;
  std::size_t max_steps = 0;  // 0: limited by max_epochs only
  std::uint64_t seed = 0;
  std::size_t train_stride = 4;
  std::size_t eval_stride = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t patience = 10;  // epochs without a validation MF1 gain
  double validation_fraction = 0.1;
  bool class_weights = false;  // inverse-frequency weighting of the loss

  void validate() const;
  AdamConfig adam() const { return {learning_rate, beta1, beta2, eps}; }
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct Prediction {
  std::size_t recording = 0;
  std::size_t epoch_index = 0;
  Stage truth = Stage::W;
  Stage predicted = Stage::W;
};

struct Evaluation {
  ConfusionMatrix confusion;
  std::vector<Prediction> predictions;
};

// Scores every window at `stride` in eval mode. Each epoch is encoded once
// and its token shared by all windows that contain it.
Evaluation evaluate(SleepStager<float>& model, const Dataset& data, std::size_t stride,
                    std::size_t batch_size = 256);

// w_c = N / (K n_c) over the window labels, 0 for absent classes.
std::array<float, kClasses> inverse_frequency_weights(const std::vector<ContextWindow>& windows);

struct LossRow {
  std::uint64_t step = 0;
  double loss = 0;
  double lr = 0;
};

struct TrainResult {
  Checkpoint final_state;
  // Highest validation MF1; the final state when no validation set was given.
  Checkpoint best_state;
  std::vector<LossRow> losses;
  std::uint64_t steps = 0;
  std::size_t epochs = 0;
  std::optional<double> best_validation_mf1;
  bool stopped_early = false;
};

// Adam on NLL over shuffled train windows at train_stride, one validation
// pass per epoch when `validation` is given. When `out_dir` is non-empty it
// receives loss.csv (appended every step), final.eogs and best.eogs.
TrainResult train_fold(const Dataset& train, const Dataset* validation,
                       const ModelConfig& model_config, const TrainConfig& config,
                       const std::filesystem::path& out_dir = {}, std::int64_t fold = -1);

}  // namespace eogstage
