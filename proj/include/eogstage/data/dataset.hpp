#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "eogstage/data/edf.hpp"
#include "eogstage/data/hypnogram.hpp"
#include "eogstage/tensor/tensor.hpp"

#include "json.hpp"

namespace eogstage {

struct EpochRecord {
  std::string subject;
  std::string recording;
  std::size_t epoch_index = 0;
  std::vector<float> signal;
  Stage stage = Stage::W;
};

// Usable epochs of one recording, in time order, z-normalised.
struct RecordingEpochs {
  std::string subject;
  std::string recording;
  double sampling_rate = 0;
  std::size_t samples_per_epoch = 0;
  std::size_t excluded = 0;  // epochs dropped for Excluded labels
  std::vector<EpochRecord> epochs;
};

// Cuts `channel` into 30-s epochs, keeps min(signal epochs, hypnogram epochs),
// drops Excluded epochs and z-normalises with the mean and standard deviation
// of the retained samples. DataError when nothing usable is left.
RecordingEpochs segment_epochs(const EdfRecording& edf, const Hypnogram& hypnogram,
                               const std::string& channel, const std::string& subject,
                               const std::string& recording);

// W contiguous epochs of one recording; `first` indexes RecordingEpochs::epochs.
struct ContextWindow {
  std::size_t recording = 0;
  std::size_t first = 0;
  std::size_t start_epoch = 0;  // epoch_index of the first epoch
  Stage label = Stage::W;       // stage of the center epoch
};

// Windows inside each run of consecutive epoch indices; a run of E epochs
// yields floor((E - W) / stride) + 1 windows when E >= W. The stride restarts
// at the beginning of every run.
std::vector<ContextWindow> build_windows(const RecordingEpochs& rec, std::size_t window_size,
                                         std::size_t stride, std::size_t recording_index = 0);

std::size_t window_count(std::size_t epochs, std::size_t window_size, std::size_t stride);

struct WindowingConfig {
  std::size_t window_size = 9;
  std::size_t train_stride = 4;
  std::size_t eval_stride = 1;
};

struct ManifestEntry {
  std::string subject;
  std::string recording;
  std::filesystem::path edf;        // absolute after loading
  std::filesystem::path hypnogram;  // absolute after loading
  std::string channel;
};

struct DatasetManifest {
  std::filesystem::path root;
  double sampling_rate = 100;
  WindowingConfig windowing;
  std::vector<ManifestEntry> recordings;

  // Sorted, unique.
  std::vector<std::string> subjects() const;
};

// Paths in the file are relative to the manifest's directory; every
// referenced file must exist.
DatasetManifest load_manifest(const std::filesystem::path& path);
DatasetManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& root);
nlohmann::json manifest_to_json(const DatasetManifest& m);

struct Dataset {
  std::vector<RecordingEpochs> recordings;

  std::vector<ContextWindow> windows(std::size_t window_size, std::size_t stride) const;
  std::size_t samples_per_epoch() const;
  // Stacks windows into [B, W, 1, S] and their class indices.
  std::pair<Tensor<float>, std::vector<std::size_t>> batch(
      const std::vector<ContextWindow>& windows, std::size_t window_size) const;
};

// Loads the recordings of `subjects` (all when empty). Recordings are loaded
// in manifest order; the sampling rate must match the manifest.
Dataset load_dataset(const DatasetManifest& manifest, const std::vector<std::string>& subjects = {});

struct Fold {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

// Subject-level k-fold split: subjects are shuffled with `seed` and dealt
// round-robin into k test sets. ConfigError unless 2 <= k <= subjects.
std::vector<Fold> kfold_split(const std::vector<std::string>& subjects, std::size_t k,
                              std::uint64_t seed);

}  // namespace eogstage
