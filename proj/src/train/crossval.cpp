#include "eogstage/train/crossval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fmt/format.h>
#include <map>
#include <mutex>
#include <spdlog/spdlog.h>
#include <thread>

#include "eogstage/common/error.hpp"
#include "eogstage/common/io.hpp"

namespace eogstage {

std::vector<std::string> choose_validation(const std::vector<std::string>& train, double fraction,
                                           std::uint64_t seed) {
  const std::size_t n = train.size();
  if (fraction <= 0 || n < 2) return {};
  auto count = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n)));
  count = std::clamp<std::size_t>(count, 1, n - 1);
  auto pool = train;
  std::sort(pool.begin(), pool.end());
  Rng rng = Rng::derive(seed, 0x7a);
  rng.shuffle(pool.begin(), pool.end());
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

nlohmann::json to_json(const FoldReport& r) {
  return {{"fold", r.index},
          {"seed", r.seed},
          {"train_subjects", r.train},
          {"validation_subjects", r.validation},
          {"test_subjects", r.test},
          {"steps", r.steps},
          {"epochs", r.epochs},
          {"seconds", r.seconds},
          {"metrics", to_json(r.metrics)},
          {"confusion", to_json(r.confusion)}};
}

namespace {

FoldReport run_fold(const DatasetManifest& manifest, const Fold& fold, std::size_t index,
                    const ModelConfig& model_config, TrainConfig config,
                    const std::filesystem::path& dir) {
  const auto start = std::chrono::steady_clock::now();
  FoldReport report;
  report.index = index;
  report.seed = config.seed ^ static_cast<std::uint64_t>(index);
  config.seed = report.seed;
  report.validation = choose_validation(fold.train, config.validation_fraction, report.seed);
  for (const auto& s : fold.train) {
    if (!std::binary_search(report.validation.begin(), report.validation.end(), s)) {
      report.train.push_back(s);
    }
  }
  report.test = fold.test;

  const Dataset train = load_dataset(manifest, report.train);
  Dataset validation;
  if (!report.validation.empty()) validation = load_dataset(manifest, report.validation);
  const Dataset test = load_dataset(manifest, report.test);

  auto trained = train_fold(train, report.validation.empty() ? nullptr : &validation,
                            model_config, config, dir, static_cast<std::int64_t>(index));
  auto model = restore(trained.best_state);
  auto eval = evaluate(model, test, config.eval_stride);
  report.confusion = eval.confusion;
  report.metrics = compute_metrics(eval.confusion);
  report.steps = trained.steps;
  report.epochs = trained.epochs;
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  io::write_atomic(dir / "metrics.csv", metrics_csv({report.metrics}));
  io::write_atomic(dir / "confusion.csv", confusion_csv(report.confusion));
  io::write_atomic(dir / "confusion_normalized.csv", normalized_csv(report.metrics));
  io::write_atomic(dir / "report.json", to_json(report).dump(2) + "\n");
  return report;
}

void write_summary(const CrossValResult& result, std::size_t k, const std::filesystem::path& dir,
                   const std::string& error) {
  std::vector<MetricsReport> rows;
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : result.folds) {
    rows.push_back(f.metrics);
    folds.push_back(to_json(f));
  }
  nlohmann::json summary{{"k", k}, {"completed_folds", result.folds.size()}, {"folds", folds}};
  if (!result.folds.empty()) {
    summary["pooled_confusion"] = to_json(result.pooled);
    summary["pooled_metrics"] = to_json(result.pooled_metrics);
    summary["averaged_metrics"] = to_json(result.averaged_metrics);
    io::write_atomic(dir / "fold_metrics.csv", metrics_csv(rows));
    io::write_atomic(dir / "metrics.csv", metrics_csv({result.pooled_metrics}));
    io::write_atomic(dir / "averaged_metrics.csv", metrics_csv({result.averaged_metrics}));
    io::write_atomic(dir / "confusion.csv", confusion_csv(result.pooled));
    io::write_atomic(dir / "confusion_normalized.csv", normalized_csv(result.pooled_metrics));
  }
  if (!error.empty()) summary["error"] = error;
  io::write_atomic(dir / "crossval.json", summary.dump(2) + "\n");
}

}  // namespace

CrossValResult cross_validate(const DatasetManifest& manifest, std::size_t k,
                              const ModelConfig& model_config, const TrainConfig& config,
                              const std::filesystem::path& out_dir, std::size_t jobs,
                              const std::vector<std::size_t>& only) {
  model_config.validate();
  config.validate();
  const auto folds = kfold_split(manifest.subjects(), k, config.seed);
  std::vector<std::size_t> order = only;
  if (order.empty()) {
    for (std::size_t i = 0; i < folds.size(); ++i) order.push_back(i);
  }
  for (auto i : order)
    if (i >= folds.size()) throw ConfigError(fmt::format("fold {} out of range for k = {}", i, k));
  std::filesystem::create_directories(out_dir);
  jobs = std::clamp<std::size_t>(jobs, 1, order.size());

  std::map<std::size_t, FoldReport> done;
  std::exception_ptr failure;
  std::size_t failed_fold = 0;
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t slot = next.fetch_add(1);
      if (slot >= order.size()) return;
      const std::size_t i = order[slot];
      {
        std::lock_guard lock(mu);
        if (failure) return;
      }
      try {
        spdlog::info("fold {} (k = {}): {} train, {} test subjects", i, folds.size(),
                     folds[i].train.size(), folds[i].test.size());
        auto r = run_fold(manifest, folds[i], i, model_config, config,
                          out_dir / fmt::format("fold_{}", i));
        spdlog::info("fold {}: acc {:.4f} mf1 {:.4f} kappa {:.4f}", i, r.metrics.acc,
                     r.metrics.mf1, r.metrics.kappa);
        std::lock_guard lock(mu);
        done.emplace(i, std::move(r));
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) {
          failure = std::current_exception();
          failed_fold = i;
        }
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  CrossValResult result;
  for (auto& [i, r] : done) {
    result.pooled += r.confusion;
    result.folds.push_back(std::move(r));
  }
  std::vector<MetricsReport> per_fold;
  for (const auto& f : result.folds) per_fold.push_back(f.metrics);
  if (!result.folds.empty()) {
    result.pooled_metrics = compute_metrics(result.pooled);
    result.averaged_metrics = average_metrics(per_fold);
  }
  std::string message;
  if (failure) {
    try {
      std::rethrow_exception(failure);
    } catch (const std::exception& e) {
      message = fmt::format("fold {} failed: {}", failed_fold, e.what());
    }
  }
  write_summary(result, k, out_dir, message);
  if (failure) std::rethrow_exception(failure);
  return result;
}

}  // namespace eogstage
