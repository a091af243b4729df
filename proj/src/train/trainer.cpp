#include "eogstage/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "eogstage/common/error.hpp"
#include "eogstage/common/io.hpp"
#include "eogstage/tensor/tape.hpp"
#include "eogstage/train/loss.hpp"

namespace eogstage {

void TrainConfig::validate() const {
  adam().validate();
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (train_stride < 1 || eval_stride < 1) throw ConfigError("strides must be >= 1");
  if (!(validation_fraction >= 0 && validation_fraction < 1)) {
    throw ConfigError(fmt::format("validation_fraction must be in [0, 1), got {}", validation_fraction));
  }
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},       {"max_steps", c.max_steps},
          {"seed", c.seed},                   {"train_stride", c.train_stride},
          {"eval_stride", c.eval_stride},     {"beta1", c.beta1},
          {"beta2", c.beta2},                 {"eps", c.eps},
          {"patience", c.patience},           {"validation_fraction", c.validation_fraction},
          {"class_weights", c.class_weights}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  TrainConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "max_epochs") c.max_epochs = value.get<std::size_t>();
      else if (key == "max_steps") c.max_steps = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "train_stride") c.train_stride = value.get<std::size_t>();
      else if (key == "eval_stride") c.eval_stride = value.get<std::size_t>();
      else if (key == "beta1") c.beta1 = value.get<double>();
      else if (key == "beta2") c.beta2 = value.get<double>();
      else if (key == "eps") c.eps = value.get<double>();
      else if (key == "patience") c.patience = value.get<std::size_t>();
      else if (key == "validation_fraction") c.validation_fraction = value.get<double>();
      else if (key == "class_weights") c.class_weights = value.get<bool>();
      else throw ConfigError("unknown training config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  c.validate();
  return c;
}

Evaluation evaluate(SleepStager<float>& model, const Dataset& data, std::size_t stride,
                    std::size_t batch_size) {
  autograd::NoGradGuard no_grad;
  const std::size_t w = model.config().window_size;
  const std::size_t d = model.config().d_model;
  const std::size_t s = model.config().samples_per_epoch;
  if (batch_size < 1) batch_size = 1;
  Evaluation out;
  for (std::size_t r = 0; r < data.recordings.size(); ++r) {
    const auto& rec = data.recordings[r];
    auto windows = build_windows(rec, w, stride, r);
    if (windows.empty()) continue;
    if (rec.samples_per_epoch != s) {
      throw DataError(fmt::format("recording {} has {} samples per epoch, the model expects {}",
                                  rec.recording, rec.samples_per_epoch, s));
    }
    const std::size_t n = rec.epochs.size();
    std::vector<float> tokens(n * d);
    for (std::size_t first = 0; first < n; first += batch_size) {
      const std::size_t count = std::min(batch_size, n - first);
      Tensor<float> epochs(Shape{count, 1, s});
      auto dst = epochs.data();
      for (std::size_t i = 0; i < count; ++i) {
        const auto& sig = rec.epochs[first + i].signal;
        std::copy(sig.begin(), sig.end(), dst.begin() + static_cast<std::ptrdiff_t>(i * s));
      }
      auto t = model.encode_epochs(epochs, false);
      std::copy(t.data().begin(), t.data().end(),
                tokens.begin() + static_cast<std::ptrdiff_t>(first * d));
    }
    for (std::size_t first = 0; first < windows.size(); first += batch_size) {
      const std::size_t count = std::min(batch_size, windows.size() - first);
      Tensor<float> batch(Shape{count, w, d});
      auto dst = batch.data();
      for (std::size_t b = 0; b < count; ++b) {
        const auto& win = windows[first + b];
        std::copy_n(tokens.begin() + static_cast<std::ptrdiff_t>(win.first * d), w * d,
                    dst.begin() + static_cast<std::ptrdiff_t>(b * w * d));
      }
      auto logits = model.classify_tokens(batch, false);
      auto ld = logits.data();
      for (std::size_t b = 0; b < count; ++b) {
        const auto& win = windows[first + b];
        for (std::size_t c = 0; c < kClasses; ++c) {
          if (!std::isfinite(ld[b * kClasses + c])) {
            throw NumericError(fmt::format("non-finite logit for recording {} epoch {}",
                                           rec.recording, win.start_epoch));
          }
        }
        auto row = ld.subspan(b * kClasses, kClasses);
        const auto pred = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        const auto& center = rec.epochs[win.first + model.config().center_index()];
        out.confusion.accumulate(stage_index(win.label), pred);
        out.predictions.push_back({r, center.epoch_index, win.label, stage_from_index(pred)});
      }
    }
  }
  return out;
}

std::array<float, kClasses> inverse_frequency_weights(const std::vector<ContextWindow>& windows) {
  std::array<std::size_t, kClasses> counts{};
  for (const auto& w : windows) ++counts[stage_index(w.label)];
  std::array<float, kClasses> weights{};
  for (std::size_t c = 0; c < kClasses; ++c) {
    if (counts[c] > 0) {
      weights[c] = static_cast<float>(static_cast<double>(windows.size()) /
                                      (static_cast<double>(kClasses) * static_cast<double>(counts[c])));
    }
  }
  return weights;
}

namespace {

class LossLog {
 public:
  explicit LossLog(const std::filesystem::path& path) {
    if (path.empty()) return;
    file_.open(path, std::ios::out | std::ios::trunc);
    if (!file_) throw Error("cannot open " + path.string() + " for writing");
    file_ << "step,loss,lr\n";
  }
  void append(const LossRow& row) {
    if (!file_.is_open()) return;
    file_ << fmt::format("{},{:.9g},{:g}\n", row.step, row.loss, row.lr);
    file_.flush();
  }

 private:
  std::ofstream file_;
};

}  // namespace

TrainResult train_fold(const Dataset& train, const Dataset* validation,
                       const ModelConfig& model_config, const TrainConfig& config,
                       const std::filesystem::path& out_dir, std::int64_t fold) {
  model_config.validate();
  config.validate();
  const std::size_t w = model_config.window_size;
  auto windows = train.windows(w, config.train_stride);
  if (windows.empty()) throw DataError("training set has no windows");
  if (train.samples_per_epoch() != model_config.samples_per_epoch) {
    throw DataError(fmt::format("training data has {} samples per epoch, the model expects {}",
                                train.samples_per_epoch(), model_config.samples_per_epoch));
  }
  std::array<float, kClasses> weights{};
  std::span<const float> weight_span;
  if (config.class_weights) {
    weights = inverse_frequency_weights(windows);
    weight_span = weights;
  }
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  autograd::Tape<float>::current().clear();
  SleepStager<float> model(model_config, config.seed);
  Adam<float> opt(model.parameters(), config.adam());
  Rng shuffle_rng = Rng::derive(config.seed, 0x5f);
  LossLog log(out_dir.empty() ? std::filesystem::path{} : out_dir / "loss.csv");

  TrainResult result;
  std::size_t since_best = 0;
  bool done = false;
  const auto meta = [&](std::uint64_t step) { return TrainingMeta{fold, step, config.seed}; };
  const std::string tag = fold >= 0 ? fmt::format("fold {} ", fold) : std::string();

  for (std::size_t epoch = 0; epoch < config.max_epochs && !done; ++epoch) {
    shuffle_rng.shuffle(windows.begin(), windows.end());
    for (std::size_t first = 0; first < windows.size(); first += config.batch_size) {
      const auto last = windows.begin() + static_cast<std::ptrdiff_t>(std::min(first + config.batch_size, windows.size()));
      std::vector<ContextWindow> chunk(windows.begin() + static_cast<std::ptrdiff_t>(first), last);
      auto [x, y] = train.batch(chunk, w);
      auto loss = nll_loss(model.forward(x, true), y, weight_span);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        autograd::Tape<float>::current().clear();
        throw NumericError(fmt::format("loss became {} at step {}", value, result.steps + 1));
      }
      autograd::backward(loss);
      opt.step();
      opt.zero_grad();
      ++result.steps;
      LossRow row{result.steps, value, config.learning_rate};
      result.losses.push_back(row);
      log.append(row);
      if (config.max_steps > 0 && result.steps >= config.max_steps) {
        done = true;
        break;
      }
    }
    result.epochs = epoch + 1;
    spdlog::debug("{}epoch {}: step {}, last loss {:.5f}", tag, epoch + 1, result.steps,
                  result.losses.back().loss);
    if (validation != nullptr && !validation->recordings.empty()) {
      auto eval = evaluate(model, *validation, config.eval_stride);
      if (eval.confusion.total() == 0) continue;
      const double mf1 = compute_metrics(eval.confusion).mf1;
      spdlog::info("{}epoch {}: validation MF1 {:.4f}", tag, epoch + 1, mf1);
      if (!result.best_validation_mf1 || mf1 > *result.best_validation_mf1) {
        result.best_validation_mf1 = mf1;
        result.best_state = snapshot(model, meta(result.steps));
        since_best = 0;
      } else if (++since_best >= config.patience) {
        result.stopped_early = true;
        break;
      }
    }
  }

  result.final_state = snapshot(model, meta(result.steps));
  if (!result.best_validation_mf1) result.best_state = result.final_state;
  if (!out_dir.empty()) {
    auto write = [](const Checkpoint& c, const std::filesystem::path& p) {
      auto bytes = encode_checkpoint(c);
      io::write_atomic(p, bytes);
    };
    write(result.final_state, out_dir / "final.eogs");
    write(result.best_state, out_dir / "best.eogs");
  }
  return result;
}

}  // namespace eogstage
