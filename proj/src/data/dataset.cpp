#include "eogstage/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "eogstage/common/io.hpp"
#include "eogstage/common/rng.hpp"

namespace eogstage {

namespace fs = std::filesystem;

RecordingEpochs segment_epochs(const EdfRecording& edf, const Hypnogram& hypnogram,
                               const std::string& channel, const std::string& subject,
                               const std::string& recording) {
  const std::size_t si = edf.find_signal(channel);
  const auto& sig = edf.signals[si];
  const double rate = edf.sampling_rate(si);
  const double spe_exact = rate * kEpochSeconds;
  const auto spe = static_cast<std::size_t>(std::llround(spe_exact));
  if (spe == 0 || std::abs(spe_exact - static_cast<double>(spe)) > 1e-6)
    throw DataError(fmt::format("{}/{}: {} Hz does not give a whole number of samples per 30 s",
                                subject, recording, rate));

  RecordingEpochs out;
  out.subject = subject;
  out.recording = recording;
  out.sampling_rate = rate;
  out.samples_per_epoch = spe;

  const std::size_t n = std::min(sig.digital.size() / spe, hypnogram.size());
  double sum = 0, sumsq = 0;
  std::size_t count = 0;
  for (std::size_t e = 0; e < n; ++e) {
    const Stage stage = hypnogram.entries[e].stage;
    if (stage == Stage::Excluded) {
      ++out.excluded;
      continue;
    }
    EpochRecord r{subject, recording, e, std::vector<float>(spe), stage};
    for (std::size_t i = 0; i < spe; ++i) {
      double v = sig.to_physical(sig.digital[e * spe + i]);
      sum += v;
      sumsq += v * v;
      r.signal[i] = static_cast<float>(v);
    }
    count += spe;
    out.epochs.push_back(std::move(r));
  }
  if (out.epochs.empty())
    throw DataError(fmt::format("{}/{}: no usable epochs ({} scored, {} excluded)", subject,
                                recording, n, out.excluded));
  const double mean = sum / count;
  const double var = std::max(0.0, sumsq / count - mean * mean);
  const double sd = std::sqrt(var);
  if (!(sd > 1e-12))
    throw DataError(fmt::format("{}/{}: channel '{}' is flat", subject, recording, channel));
  // Second pass in double from the digital values so the statistics above
  // are applied to unrounded samples.
  for (auto& r : out.epochs)
    for (std::size_t i = 0; i < spe; ++i)
      r.signal[i] = static_cast<float>((sig.to_physical(sig.digital[r.epoch_index * spe + i]) - mean) / sd);
  spdlog::debug("{}/{}: {} epochs kept, {} excluded, {} unscored", subject, recording,
                out.epochs.size(), out.excluded,
                std::max(sig.digital.size() / spe, hypnogram.size()) - n);
  return out;
}

std::size_t window_count(std::size_t epochs, std::size_t window_size, std::size_t stride) {
  if (window_size == 0 || stride == 0 || epochs < window_size) return 0;
  return (epochs - window_size) / stride + 1;
}

std::vector<ContextWindow> build_windows(const RecordingEpochs& rec, std::size_t window_size,
                                         std::size_t stride, std::size_t recording_index) {
  if (window_size == 0 || window_size % 2 == 0)
    throw ConfigError(fmt::format("window size must be odd, got {}", window_size));
  if (stride == 0) throw ConfigError("window stride must be positive");
  std::vector<ContextWindow> out;
  const auto& ep = rec.epochs;
  std::size_t run = 0;
  while (run < ep.size()) {
    std::size_t end = run + 1;
    while (end < ep.size() && ep[end].epoch_index == ep[end - 1].epoch_index + 1) ++end;
    for (std::size_t s = run; s + window_size <= end; s += stride)
      out.push_back({recording_index, s, ep[s].epoch_index, ep[s + (window_size - 1) / 2].stage});
    run = end;
  }
  return out;
}

std::vector<std::string> DatasetManifest::subjects() const {
  std::set<std::string> s;
  for (const auto& r : recordings) s.insert(r.subject);
  return {s.begin(), s.end()};
}

DatasetManifest manifest_from_json(const nlohmann::json& j, const fs::path& root) {
  DatasetManifest m;
  m.root = root;
  try {
    if (j.contains("sampling_rate")) m.sampling_rate = j.at("sampling_rate").get<double>();
    if (j.contains("windowing")) {
      const auto& w = j.at("windowing");
      m.windowing.window_size = w.value("window_size", m.windowing.window_size);
      m.windowing.train_stride = w.value("train_stride", m.windowing.train_stride);
      m.windowing.eval_stride = w.value("eval_stride", m.windowing.eval_stride);
    }
    for (const auto& r : j.at("recordings")) {
      ManifestEntry e;
      e.subject = r.at("subject").get<std::string>();
      e.recording = r.value("recording", e.subject);
      e.edf = root / r.at("edf").get<std::string>();
      e.hypnogram = root / r.at("hypnogram").get<std::string>();
      e.channel = r.at("channel").get<std::string>();
      m.recordings.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("manifest: {}", e.what()));
  }
  if (m.recordings.empty()) throw ConfigError("manifest lists no recordings");
  if (!(m.sampling_rate > 0)) throw ConfigError("manifest sampling_rate must be positive");
  const auto& w = m.windowing;
  if (w.window_size == 0 || w.window_size % 2 == 0)
    throw ConfigError(fmt::format("manifest window_size must be odd, got {}", w.window_size));
  if (w.train_stride == 0 || w.eval_stride == 0) throw ConfigError("manifest strides must be >= 1");
  return m;
}

DatasetManifest load_manifest(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  auto m = manifest_from_json(j, path.parent_path());
  for (const auto& r : m.recordings)
    for (const auto& f : {r.edf, r.hypnogram})
      if (!fs::exists(f))
        throw DataError(fmt::format("{}: recording {}/{} references missing file {}",
                                    path.string(), r.subject, r.recording, f.string()));
  return m;
}

nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& r : m.recordings)
    recs.push_back({{"subject", r.subject},
                    {"recording", r.recording},
                    {"edf", fs::relative(r.edf, m.root).generic_string()},
                    {"hypnogram", fs::relative(r.hypnogram, m.root).generic_string()},
                    {"channel", r.channel}});
  return {{"sampling_rate", m.sampling_rate},
          {"windowing",
           {{"window_size", m.windowing.window_size},
            {"train_stride", m.windowing.train_stride},
            {"eval_stride", m.windowing.eval_stride}}},
          {"recordings", recs}};
}

std::vector<ContextWindow> Dataset::windows(std::size_t window_size, std::size_t stride) const {
  std::vector<ContextWindow> out;
  for (std::size_t i = 0; i < recordings.size(); ++i) {
    auto w = build_windows(recordings[i], window_size, stride, i);
    out.insert(out.end(), w.begin(), w.end());
  }
  return out;
}

std::size_t Dataset::samples_per_epoch() const {
  if (recordings.empty()) throw DataError("dataset is empty");
  return recordings.front().samples_per_epoch;
}

std::pair<Tensor<float>, std::vector<std::size_t>> Dataset::batch(
    const std::vector<ContextWindow>& windows, std::size_t window_size) const {
  const std::size_t s = samples_per_epoch();
  Tensor<float> x({windows.size(), window_size, 1, s});
  std::vector<std::size_t> labels;
  labels.reserve(windows.size());
  auto d = x.data();
  std::size_t off = 0;
  for (const auto& w : windows) {
    const auto& rec = recordings.at(w.recording);
    for (std::size_t k = 0; k < window_size; ++k) {
      const auto& sig = rec.epochs.at(w.first + k).signal;
      std::copy(sig.begin(), sig.end(), d.begin() + static_cast<std::ptrdiff_t>(off));
      off += s;
    }
    labels.push_back(stage_index(w.label));
  }
  return {std::move(x), std::move(labels)};
}

Dataset load_dataset(const DatasetManifest& manifest, const std::vector<std::string>& subjects) {
  std::set<std::string> wanted(subjects.begin(), subjects.end());
  Dataset ds;
  for (const auto& r : manifest.recordings) {
    if (!wanted.empty() && !wanted.contains(r.subject)) continue;
    auto edf = read_edf(r.edf);
    auto hyp = read_hypnogram(r.hypnogram);
    auto rec = segment_epochs(edf, hyp, r.channel, r.subject, r.recording);
    if (std::abs(rec.sampling_rate - manifest.sampling_rate) > 1e-9)
      throw DataError(fmt::format("{}: channel '{}' is sampled at {} Hz, manifest says {} Hz",
                                  r.edf.string(), r.channel, rec.sampling_rate,
                                  manifest.sampling_rate));
    if (!ds.recordings.empty() && rec.samples_per_epoch != ds.recordings.front().samples_per_epoch)
      throw DataError("recordings disagree on samples per epoch");
    ds.recordings.push_back(std::move(rec));
  }
  if (ds.recordings.empty()) throw DataError("no recordings selected from the manifest");
  return ds;
}

std::vector<Fold> kfold_split(const std::vector<std::string>& subjects, std::size_t k,
                              std::uint64_t seed) {
  std::vector<std::string> order(subjects);
  std::sort(order.begin(), order.end());
  order.erase(std::unique(order.begin(), order.end()), order.end());
  if (k < 2 || k > order.size())
    throw ConfigError(fmt::format("cannot make {} folds from {} subjects", k, order.size()));
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());
  std::vector<Fold> folds(k);
  for (std::size_t i = 0; i < order.size(); ++i)
    for (std::size_t f = 0; f < k; ++f) (f == i % k ? folds[f].test : folds[f].train).push_back(order[i]);
  for (auto& f : folds) {
    std::sort(f.test.begin(), f.test.end());
    std::sort(f.train.begin(), f.train.end());
  }
  return folds;
}

}  // namespace eogstage
