#include "commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "eogstage/common/error.hpp"
#include "eogstage/common/io.hpp"
#include "eogstage/common/rng.hpp"
#include "eogstage/data/synth.hpp"
#include "eogstage/interp/features.hpp"
#include "eogstage/interp/gradcam.hpp"
#include "eogstage/interp/tsne.hpp"
#include "eogstage/report/svg.hpp"
#include "eogstage/tensor/tape.hpp"
#include "eogstage/train/crossval.hpp"

namespace eogstage::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const std::set<std::string> kSections{"model", "training", "synth", "tsne"};

json section(const json& cfg, const char* name) {
  return cfg.contains(name) ? cfg.at(name) : json::object();
}

std::vector<std::string> class_names() {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < kNumStages; ++c) names.emplace_back(stage_name(stage_from_index(c)));
  return names;
}

// Recording ids end up in file names.
std::string safe_name(const std::string& s) {
  std::string out;
  for (char ch : s) {
    const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') ||
                    ch == '-' || ch == '_' || ch == '.';
    out += ok ? ch : '_';
  }
  return out.empty() ? "_" : out;
}

Stage parse_stage(const std::string& name) {
  Stage s;
  try {
    s = map_label(name);
  } catch (const DataError&) {
    throw ConfigError(fmt::format("'{}' is not a sleep stage", name));
  }
  if (s == Stage::Excluded) throw ConfigError(fmt::format("'{}' is not a scored stage", name));
  return s;
}

ModelConfig preset_config(const std::string& name) {
  if (name == "desk") return desk_config();
  if (name == "tiny") return tiny_config();
  if (name == "default") return ModelConfig{};
  throw UsageError("unknown preset " + name);
}

std::size_t samples_per_epoch(const DatasetManifest& m) {
  const double s = m.sampling_rate * kEpochSeconds;
  if (std::abs(s - std::round(s)) > 1e-9)
    throw ConfigError(fmt::format("sampling rate {} Hz gives a fractional epoch length", m.sampling_rate));
  return static_cast<std::size_t>(std::lround(s));
}

// Preset, then the manifest's epoch length and window size, then the config
// files; later sources win.
ModelConfig resolve_model(const RunSpec& spec, const DatasetManifest& m, const json& cfg) {
  json j = to_json(preset_config(spec.preset));
  j["samples_per_epoch"] = samples_per_epoch(m);
  j["window_size"] = m.windowing.window_size;
  j.merge_patch(section(cfg, "model"));
  return model_config_from_json(j);
}

TrainConfig resolve_training(const RunSpec& spec, const DatasetManifest& m, const json& cfg) {
  json j = to_json(TrainConfig{});
  j["train_stride"] = m.windowing.train_stride;
  j["eval_stride"] = m.windowing.eval_stride;
  j.merge_patch(section(cfg, "training"));
  j["seed"] = spec.seed;
  return train_config_from_json(j);
}

enum class Role { Train, Test };

std::vector<std::string> select_subjects(const RunSpec& spec, const DatasetManifest& m, Role role) {
  const auto all = m.subjects();
  if (spec.fold) {
    const auto folds = kfold_split(all, *spec.folds, spec.seed);
    if (*spec.fold >= folds.size())
      throw ConfigError(fmt::format("--fold {} out of range for --folds {}", *spec.fold, *spec.folds));
    return role == Role::Train ? folds[*spec.fold].train : folds[*spec.fold].test;
  }
  if (spec.folds) throw UsageError("--folds needs --fold");
  for (const auto& s : spec.subjects)
    if (!std::binary_search(all.begin(), all.end(), s))
      throw ConfigError(fmt::format("subject '{}' is not in the manifest", s));
  auto out = spec.subjects;
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out.empty() ? all : out;
}

std::vector<std::vector<double>> normalized_rows(const MetricsReport& m) {
  std::vector<std::vector<double>> rows;
  for (const auto& r : m.normalized) rows.emplace_back(r.begin(), r.end());
  return rows;
}

std::string confusion_svg(const std::vector<std::vector<double>>& rows, const std::string& title) {
  const auto names = class_names();
  return svg::heatmap(rows, names, names, title);
}

// At most ~2000 points per curve; the last point is always kept.
svg::Series thin(std::string name, const std::vector<std::pair<double, double>>& pts) {
  svg::Series s{std::move(name), {}};
  const std::size_t every = std::max<std::size_t>(1, (pts.size() + 1999) / 2000);
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (i % every == 0 || i + 1 == pts.size()) s.points.push_back(pts[i]);
  return s;
}

std::string metrics_line(const MetricsReport& m) {
  return fmt::format("acc {:.4f}  mf1 {:.4f}  kappa {:.4f}", m.acc, m.mf1, m.kappa);
}

void write(const fs::path& path, const std::string& text) { io::write_atomic(path, text); }

// ---- CSV input for `report` and event lists ----

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

// Rows after the header. DataError unless every row has `columns` cells.
std::vector<std::vector<std::string>> read_csv(const fs::path& path, std::size_t columns) {
  std::istringstream in(io::read_text(path));
  std::string line;
  std::vector<std::vector<std::string>> rows;
  bool header = true;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != columns)
      throw DataError(fmt::format("{}:{}: expected {} columns, got {}", path.string(), lineno, columns,
                                  cells.size()));
    rows.push_back(std::move(cells));
  }
  return rows;
}

double number(const std::string& s, const fs::path& path) {
  double v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size() || !std::isfinite(v))
    throw DataError(fmt::format("{}: '{}' is not a finite number", path.string(), s));
  return v;
}

std::size_t count(const std::string& s, const fs::path& path) {
  std::size_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size())
    throw DataError(fmt::format("{}: '{}' is not a non-negative integer", path.string(), s));
  return v;
}

std::vector<std::pair<double, double>> read_loss(const fs::path& path) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : read_csv(path, 3)) pts.emplace_back(number(r[0], path), number(r[1], path));
  return pts;
}

std::vector<std::vector<double>> read_normalized(const fs::path& path) {
  auto rows = read_csv(path, kNumStages + 1);
  if (rows.size() != kNumStages)
    throw DataError(fmt::format("{}: expected {} rows", path.string(), kNumStages));
  std::vector<std::vector<double>> out;
  for (const auto& r : rows) {
    std::vector<double> row;
    for (std::size_t c = 1; c <= kNumStages; ++c) row.push_back(number(r[c], path));
    out.push_back(std::move(row));
  }
  return out;
}

using BurstMap = std::map<std::pair<std::string, std::size_t>,
                          std::vector<std::pair<std::size_t, std::size_t>>>;

// events.csv as written next to a synthetic manifest; empty when absent.
BurstMap read_events(const fs::path& root) {
  BurstMap bursts;
  const auto path = root / "events.csv";
  if (!fs::exists(path)) return bursts;
  for (const auto& r : read_csv(path, 4))
    bursts[{r[0], count(r[1], path)}].emplace_back(count(r[2], path), count(r[3], path));
  return bursts;
}

std::vector<fs::path> fold_dirs(const fs::path& root) {
  std::vector<std::pair<std::size_t, fs::path>> found;
  if (!fs::is_directory(root)) return {};
  for (const auto& e : fs::directory_iterator(root)) {
    const auto name = e.path().filename().string();
    if (!e.is_directory() || name.rfind("fold_", 0) != 0) continue;
    std::size_t i = 0;
    auto [end, ec] = std::from_chars(name.data() + 5, name.data() + name.size(), i);
    if (ec == std::errc{} && end == name.data() + name.size()) found.emplace_back(i, e.path());
  }
  std::sort(found.begin(), found.end());
  std::vector<fs::path> out;
  for (auto& [i, p] : found) out.push_back(p);
  return out;
}

json tsne_to_json(const TsneConfig& c) {
  return {{"perplexity", c.perplexity},
          {"iterations", c.iterations},
          {"learning_rate", c.learning_rate},
          {"exaggeration", c.exaggeration},
          {"exaggeration_iterations", c.exaggeration_iterations},
          {"initial_momentum", c.initial_momentum},
          {"final_momentum", c.final_momentum},
          {"entropy_tolerance", c.entropy_tolerance},
          {"search_iterations", c.search_iterations}};
}

TsneConfig tsne_from_json(const json& j) {
  TsneConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "perplexity") c.perplexity = v.get<double>();
      else if (key == "iterations") c.iterations = v.get<std::size_t>();
      else if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "exaggeration") c.exaggeration = v.get<double>();
      else if (key == "exaggeration_iterations") c.exaggeration_iterations = v.get<std::size_t>();
      else if (key == "initial_momentum") c.initial_momentum = v.get<double>();
      else if (key == "final_momentum") c.final_momentum = v.get<double>();
      else if (key == "entropy_tolerance") c.entropy_tolerance = v.get<double>();
      else if (key == "search_iterations") c.search_iterations = v.get<std::size_t>();
      else throw ConfigError(fmt::format("unknown key '{}' in tsne config", key));
    }
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("tsne config: {}", e.what()));
  }
  if (!(c.perplexity > 0)) throw ConfigError("tsne perplexity must be positive");
  if (!(c.learning_rate > 0)) throw ConfigError("tsne learning_rate must be positive");
  return c;
}

std::size_t argmax(std::span<const float> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

json load_config_files(const RunSpec& spec) {
  json merged = json::object();
  for (const auto& path : spec.configs) {
    json j;
    try {
      j = json::parse(io::read_text(path));
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    } catch (const json::exception& e) {
      throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
    }
    if (!j.is_object()) throw ConfigError(path.string() + ": expected a JSON object");
    if (j.contains("tool") && j.contains("config")) {
      json kept = json::object();
      for (const auto& [key, v] : j.at("config").items())
        if (kSections.count(key)) kept[key] = v;
      j = kept;
    }
    for (const auto& [key, v] : j.items()) {
      if (!kSections.count(key))
        throw ConfigError(fmt::format("{}: unknown section '{}' (expected model, training, synth or tsne)",
                                      path.string(), key));
      if (!v.is_object()) throw ConfigError(fmt::format("{}: section '{}' must be an object", path.string(), key));
    }
    merged.merge_patch(j);
  }
  return merged;
}

void cmd_synth(RunContext& ctx) {
  const auto& spec = ctx.spec;
  const json cfg = load_config_files(spec);
  SynthConfig c = synth_config_from_json(section(cfg, "synth"));
  if (spec.num_subjects) c.subjects = *spec.num_subjects;
  if (spec.epochs_per_recording) c.epochs_per_recording = *spec.epochs_per_recording;
  if (spec.sampling_rate) c.sampling_rate = *spec.sampling_rate;
  ctx.config["synth"] = to_json(c);
  ctx.publish();
  synth_dataset(c, spec.seed, spec.out);
  ctx.out << fmt::format("synth: {} subjects x {} recordings x {} epochs at {} Hz -> {}\n", c.subjects,
                         c.recordings_per_subject, c.epochs_per_recording, c.sampling_rate,
                         (spec.out / "manifest.json").string());
}

void cmd_ingest(RunContext& ctx) {
  const auto& spec = ctx.spec;
  const auto manifest = load_manifest(spec.manifest);
  const auto subjects = select_subjects(spec, manifest, Role::Test);
  ctx.config["manifest"] = manifest_to_json(manifest);
  ctx.config["subjects"] = subjects;
  ctx.publish();

  const Dataset data = load_dataset(manifest, subjects);
  const auto& w = manifest.windowing;
  std::string csv = "subject,recording,epochs,excluded,W,N1,N2,N3,REM,train_windows,eval_windows\n";
  std::array<std::size_t, kNumStages> total{};
  std::size_t epochs = 0, excluded = 0, train_windows = 0, eval_windows = 0;
  for (std::size_t r = 0; r < data.recordings.size(); ++r) {
    const auto& rec = data.recordings[r];
    std::array<std::size_t, kNumStages> n{};
    std::vector<Stage> stages;
    for (const auto& e : rec.epochs) {
      ++n[stage_index(e.stage)];
      stages.push_back(e.stage);
    }
    const auto tw = build_windows(rec, w.window_size, w.train_stride, r).size();
    const auto ew = build_windows(rec, w.window_size, w.eval_stride, r).size();
    csv += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", rec.subject, rec.recording, rec.epochs.size(),
                       rec.excluded, n[0], n[1], n[2], n[3], n[4], tw, ew);
    for (std::size_t c = 0; c < kNumStages; ++c) total[c] += n[c];
    epochs += rec.epochs.size();
    excluded += rec.excluded;
    train_windows += tw;
    eval_windows += ew;
    write(spec.out / ("hypnogram_" + safe_name(rec.recording) + ".svg"),
          svg::hypnogram(stages, {}, "Hypnogram " + rec.recording));
  }
  write(spec.out / "recordings.csv", csv);
  ctx.out << fmt::format("ingest: {} recordings, {} epochs ({} excluded)\n", data.recordings.size(), epochs,
                         excluded);
  ctx.out << fmt::format("  W {}  N1 {}  N2 {}  N3 {}  REM {}\n", total[0], total[1], total[2], total[3],
                         total[4]);
  ctx.out << fmt::format("  windows: {} at train stride {}, {} at eval stride {}\n", train_windows,
                         w.train_stride, eval_windows, w.eval_stride);
}

void cmd_train(RunContext& ctx) {
  const auto& spec = ctx.spec;
  const auto manifest = load_manifest(spec.manifest);
  const json cfg = load_config_files(spec);
  const ModelConfig model_config = resolve_model(spec, manifest, cfg);
  const TrainConfig config = resolve_training(spec, manifest, cfg);

  const auto pool = select_subjects(spec, manifest, Role::Train);
  const auto validation = choose_validation(pool, config.validation_fraction, config.seed);
  std::vector<std::string> train;
  for (const auto& s : pool)
    if (!std::binary_search(validation.begin(), validation.end(), s)) train.push_back(s);

  ctx.config["model"] = to_json(model_config);
  ctx.config["training"] = to_json(config);
  ctx.config["manifest"] = manifest_to_json(manifest);
  ctx.config["subjects"] = {{"train", train}, {"validation", validation}};
  ctx.publish();

  const Dataset train_data = load_dataset(manifest, train);
  Dataset validation_data;
  if (!validation.empty()) validation_data = load_dataset(manifest, validation);
  const auto fold = spec.fold ? static_cast<std::int64_t>(*spec.fold) : std::int64_t{-1};
  const auto result = train_fold(train_data, validation.empty() ? nullptr : &validation_data, model_config,
                                 config, spec.out, fold);

  std::vector<std::pair<double, double>> pts;
  for (const auto& r : result.losses) pts.emplace_back(static_cast<double>(r.step), r.loss);
  if (!pts.empty()) write(spec.out / "loss.svg", svg::line({thin("train", pts)}, "Training loss", "Step", "Loss"));

  json summary{{"steps", result.steps},
               {"epochs", result.epochs},
               {"stopped_early", result.stopped_early},
               {"final_loss", result.losses.empty() ? 0.0 : result.losses.back().loss},
               {"best_step", result.best_state.meta.step},
               {"best_digest", parameter_digest(result.best_state)},
               {"final_digest", parameter_digest(result.final_state)}};
  if (result.best_validation_mf1) summary["best_validation_mf1"] = *result.best_validation_mf1;
  write(spec.out / "train.json", summary.dump(2) + "\n");

  ctx.out << fmt::format("train: {} steps over {} epochs, final loss {:.4f}", result.steps, result.epochs,
                         result.losses.empty() ? 0.0 : result.losses.back().loss);
  if (result.best_validation_mf1) ctx.out << fmt::format(", best validation mf1 {:.4f}", *result.best_validation_mf1);
  ctx.out << "\n";
}

void cmd_evaluate(RunContext& ctx) {
  const auto& spec = ctx.spec;
  const auto ckpt = load_checkpoint(spec.checkpoint);
  const auto manifest = load_manifest(spec.manifest);
  const auto subjects = select_subjects(spec, manifest, Role::Test);
  const std::size_t stride = spec.stride.value_or(manifest.windowing.eval_stride);
  ctx.config["model"] = to_json(ckpt.config);
  ctx.config["evaluation"] = {{"stride", stride}, {"checkpoint_digest", parameter_digest(ckpt)}};
  ctx.config["manifest"] = manifest_to_json(manifest);
  ctx.config["subjects"] = subjects;
  ctx.publish();

  auto model = restore(ckpt);
  const Dataset data = load_dataset(manifest, subjects);
  const auto eval = evaluate(model, data, stride);
  if (eval.confusion.total() == 0) throw DataError("no windows to evaluate");
  const auto metrics = compute_metrics(eval.confusion);

  std::string preds = "subject,recording,epoch_index,annotated,predicted\n";
  for (const auto& p : eval.predictions) {
    const auto& rec = data.recordings[p.recording];
    preds += fmt::format("{},{},{},{},{}\n", rec.subject, rec.recording, p.epoch_index, stage_name(p.truth),
                         stage_name(p.predicted));
  }
  write(spec.out / "metrics.csv", metrics_csv({metrics}));
  write(spec.out / "confusion.csv", confusion_csv(eval.confusion));
  write(spec.out / "confusion_normalized.csv", normalized_csv(metrics));
  write(spec.out / "metrics.json", to_json(metrics).dump(2) + "\n");
  write(spec.out / "predictions.csv", preds);
  write(spec.out / "confusion.svg", confusion_svg(normalized_rows(metrics), "Normalized confusion matrix"));
  ctx.out << "evaluate: " << eval.predictions.size() << " windows, " << metrics_line(metrics) << "\n";
}

void cmd_crossval(RunContext& ctx) {
  const auto& spec = ctx.spec;
  const auto manifest = load_manifest(spec.manifest);
  const json cfg = load_config_files(spec);
  const ModelConfig model_config = resolve_model(spec, manifest, cfg);
  const TrainConfig config = resolve_training(spec, manifest, cfg);
  const std::size_t k = spec.folds.value_or(5);
  std::vector<std::size_t> only;
  if (spec.fold) only.push_back(*spec.fold);
  ctx.config["model"] = to_json(model_config);
  ctx.config["training"] = to_json(config);
  ctx.config["manifest"] = manifest_to_json(manifest);
  ctx.publish();

  const auto result = cross_validate(manifest, k, model_config, config, spec.out, spec.jobs, only);

  write(spec.out / "confusion.svg",
        confusion_svg(normalized_rows(result.pooled_metrics), "Normalized confusion matrix (pooled)"));
  std::vector<svg::Series> curves;
  for (const auto& f : result.folds) {
    const auto path = spec.out / fmt::format("fold_{}", f.index) / "loss.csv";
    if (fs::exists(path)) curves.push_back(thin(fmt::format("fold {}", f.index), read_loss(path)));
  }
  if (!curves.empty()) write(spec.out / "loss.svg", svg::line(curves, "Training loss", "Step", "Loss"));

  for (const auto& f : result.folds)
    ctx.out << fmt::format("fold {}: ", f.index) << metrics_line(f.metrics) << "\n";
  ctx.out << "pooled:   " << metrics_line(result.pooled_metrics) << "\n";
  ctx.out << "averaged: " << metrics_line(result.averaged_metrics) << "\n";
}

void cmd_gradcam(RunContext& ctx) {
  const auto& spec = ctx.spec;
  const auto ckpt = load_checkpoint(spec.checkpoint);
  const auto manifest = load_manifest(spec.manifest);
  const auto subjects = select_subjects(spec, manifest, Role::Test);
  std::optional<Stage> only;
  if (!spec.stage.empty()) only = parse_stage(spec.stage);
  std::optional<Stage> fixed_target;
  if (spec.target != "predicted" && spec.target != "annotated") fixed_target = parse_stage(spec.target);
  ctx.config["model"] = to_json(ckpt.config);
  ctx.config["gradcam"] = {{"checkpoint_digest", parameter_digest(ckpt)}, {"layer", "last residual block"}};
  ctx.config["manifest"] = manifest_to_json(manifest);
  ctx.config["subjects"] = subjects;
  ctx.publish();

  auto model = restore(ckpt);
  const Dataset data = load_dataset(manifest, subjects);
  const std::size_t w = ckpt.config.window_size;
  std::vector<ContextWindow> pool;
  for (const auto& win : data.windows(w, 1))
    if (!only || win.label == *only) pool.push_back(win);
  if (pool.empty()) throw DataError("no windows match the selection");
  Rng rng = Rng::derive(spec.seed, 0x9c);
  rng.shuffle(pool.begin(), pool.end());
  pool.resize(std::min(pool.size(), spec.count));
  std::sort(pool.begin(), pool.end(), [](const ContextWindow& a, const ContextWindow& b) {
    return std::tie(a.recording, a.first) < std::tie(b.recording, b.first);
  });

  const auto bursts = read_events(manifest.root);
  const double rate = data.recordings.front().sampling_rate;
  const std::size_t center = ckpt.config.center_index();
  std::string summary = "window,subject,recording,epoch_index,annotated,predicted,target,burst_mass\n";
  double mass_sum = 0;
  std::size_t mass_n = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& win = pool[i];
    const auto& rec = data.recordings[win.recording];
    const auto& epoch = rec.epochs[win.first + center];
    auto x = data.batch({win}, w).first;
    std::size_t predicted = 0;
    {
      autograd::NoGradGuard guard;
      predicted = argmax(model.logits(x, false).data());
    }
    std::size_t target = predicted;
    if (fixed_target) target = stage_index(*fixed_target);
    else if (spec.target == "annotated") target = stage_index(win.label);

    const auto sal = gradcam_1d(model, x, target);
    std::string csv = "sample_index,value\n";
    for (std::size_t s = 0; s < sal.values.size(); ++s) csv += fmt::format("{},{:.6f}\n", s, sal.values[s]);
    write(spec.out / fmt::format("saliency_{}.csv", i), csv);

    std::vector<std::pair<std::size_t, std::size_t>> marks;
    if (auto it = bursts.find({rec.recording, epoch.epoch_index}); it != bursts.end()) marks = it->second;
    std::string mass = "";
    if (!marks.empty()) {
      double inside = 0, total = 0;
      for (std::size_t s = 0; s < sal.values.size(); ++s) {
        total += sal.values[s];
        for (const auto& [b, e] : marks)
          if (s >= b && s < e) {
            inside += sal.values[s];
            break;
          }
      }
      const double m = total > 0 ? inside / total : 0.0;
      mass = fmt::format("{:.6f}", m);
      mass_sum += m;
      ++mass_n;
    }
    std::vector<double> signal(epoch.signal.begin(), epoch.signal.end());
    const auto title = fmt::format("GradCAM {} epoch {} (target {})", rec.recording, epoch.epoch_index,
                                   stage_name(stage_from_index(target)));
    write(spec.out / fmt::format("saliency_{}.svg", i), svg::saliency_overlay(signal, sal.values, rate, title, marks));
    summary += fmt::format("{},{},{},{},{},{},{},{}\n", i, rec.subject, rec.recording, epoch.epoch_index,
                           stage_name(win.label), stage_name(stage_from_index(predicted)),
                           stage_name(stage_from_index(target)), mass);
  }
  write(spec.out / "windows.csv", summary);
  ctx.out << fmt::format("gradcam: {} windows", pool.size());
  if (mass_n > 0) ctx.out << fmt::format(", mean saliency mass in bursts {:.4f} over {} windows", mass_sum / mass_n, mass_n);
  ctx.out << "\n";
}

void cmd_tsne(RunContext& ctx) {
  const auto& spec = ctx.spec;
  const auto ckpt = load_checkpoint(spec.checkpoint);
  const auto manifest = load_manifest(spec.manifest);
  const auto subjects = select_subjects(spec, manifest, Role::Test);
  const json cfg = load_config_files(spec);
  TsneConfig config = tsne_from_json(section(cfg, "tsne"));
  config.seed = spec.seed;
  const std::size_t stride = spec.stride.value_or(manifest.windowing.eval_stride);
  ctx.config["tsne"] = tsne_to_json(config);
  ctx.config["features"] = {{"stride", stride},
                            {"max_points", spec.max_points},
                            {"checkpoint_digest", parameter_digest(ckpt)}};
  ctx.config["manifest"] = manifest_to_json(manifest);
  ctx.config["subjects"] = subjects;
  ctx.publish();

  auto model = restore(ckpt);
  const Dataset data = load_dataset(manifest, subjects);
  auto windows = data.windows(ckpt.config.window_size, stride);
  if (windows.empty()) throw DataError("no windows to embed");
  if (windows.size() > spec.max_points) {
    Rng rng = Rng::derive(spec.seed, 0x3e);
    rng.shuffle(windows.begin(), windows.end());
    windows.resize(spec.max_points);
    std::sort(windows.begin(), windows.end(), [](const ContextWindow& a, const ContextWindow& b) {
      return std::tie(a.recording, a.first) < std::tie(b.recording, b.first);
    });
  }
  const auto features = extract_features(model, data, windows);
  const auto emb = tsne(features, config);

  std::string csv = "x,y,label\n";
  for (std::size_t i = 0; i < emb.points.size(); ++i)
    csv += fmt::format("{:.6f},{:.6f},{}\n", emb.points[i][0], emb.points[i][1], stage_name(emb.labels[i]));
  std::string log = "iteration,kl\n";
  for (const auto& r : emb.log) log += fmt::format("{},{:.9g}\n", r.iteration, r.kl);
  write(spec.out / "embedding.csv", csv);
  write(spec.out / "tsne_log.csv", log);
  write(spec.out / "tsne.svg", svg::scatter(emb.points, emb.labels, "t-SNE of epoch features"));
  ctx.out << fmt::format("tsne: {} points, KL {:.4f}, 1-NN label agreement {:.4f}\n", emb.points.size(), emb.kl,
                         nearest_neighbor_accuracy(emb.points, emb.labels));
}

void cmd_report(RunContext& ctx) {
  const auto& spec = ctx.spec;
  const fs::path in = spec.input;
  if (!fs::is_directory(in)) throw DataError(in.string() + " is not a directory");
  ctx.config["report"] = {{"input", in.string()}};
  ctx.publish();

  std::vector<std::string> produced;
  auto emit = [&](const std::string& name, const std::string& doc) {
    write(spec.out / name, doc);
    produced.push_back(name);
  };

  if (fs::exists(in / "confusion_normalized.csv"))
    emit("confusion.svg", confusion_svg(read_normalized(in / "confusion_normalized.csv"),
                                        "Normalized confusion matrix"));
  std::vector<svg::Series> curves;
  if (fs::exists(in / "loss.csv")) curves.push_back(thin("train", read_loss(in / "loss.csv")));
  for (const auto& dir : fold_dirs(in)) {
    const auto name = dir.filename().string();
    if (fs::exists(dir / "loss.csv")) curves.push_back(thin(name, read_loss(dir / "loss.csv")));
    if (fs::exists(dir / "confusion_normalized.csv"))
      emit(name + "_confusion.svg",
           confusion_svg(read_normalized(dir / "confusion_normalized.csv"), "Normalized confusion matrix, " + name));
  }
  if (!curves.empty()) emit("loss.svg", svg::line(curves, "Training loss", "Step", "Loss"));

  if (fs::exists(in / "predictions.csv")) {
    const auto path = in / "predictions.csv";
    std::vector<std::string> order;
    std::map<std::string, std::pair<std::vector<Stage>, std::vector<Stage>>> per_recording;
    for (const auto& r : read_csv(path, 5)) {
      if (!per_recording.count(r[1])) order.push_back(r[1]);
      auto& [annotated, predicted] = per_recording[r[1]];
      try {
        annotated.push_back(map_label(r[3]));
        predicted.push_back(map_label(r[4]));
      } catch (const DataError& e) {
        throw DataError(fmt::format("{}: {}", path.string(), e.what()));
      }
    }
    for (const auto& rec : order) {
      const auto& [annotated, predicted] = per_recording[rec];
      emit("hypnogram_" + safe_name(rec) + ".svg", svg::hypnogram(annotated, predicted, "Hypnogram " + rec));
    }
  }

  if (fs::exists(in / "embedding.csv")) {
    const auto path = in / "embedding.csv";
    std::vector<std::array<double, 2>> points;
    std::vector<Stage> labels;
    for (const auto& r : read_csv(path, 3)) {
      points.push_back({number(r[0], path), number(r[1], path)});
      labels.push_back(map_label(r[2]));
    }
    emit("tsne.svg", svg::scatter(points, labels, "t-SNE of epoch features"));
  }

  if (produced.empty())
    throw DataError(in.string() + " holds no confusion_normalized.csv, loss.csv, predictions.csv or embedding.csv");
  for (const auto& p : produced) ctx.out << "report: wrote " << (spec.out / p).string() << "\n";
}

}  // namespace eogstage::cli
