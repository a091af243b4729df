#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "eogstage/common/rng.hpp"
#include "eogstage/data/dataset.hpp"
#include "eogstage/data/hypnogram.hpp"

#include "json.hpp"

namespace eogstage {

// Stage signatures (amplitudes in microvolts):
//   W    8-12 Hz oscillation plus large blink deflections
//   N1   low-amplitude mix of 4-7 Hz components
//   N2   12-14 Hz spindle bursts on a quiet background
//   N3   high-amplitude 0.5-2 Hz waves
//   REM  quiet 4-7 Hz background plus sawtooth bursts at 2-3 Hz
// Event counts and durations scale with the epoch length so that short
// epochs (used by the small test model) keep every signature.
struct SynthEpoch {
  std::vector<double> signal;
  // [begin, end) sample ranges of the REM sawtooth bursts.
  std::vector<std::pair<std::size_t, std::size_t>> bursts;
};

// `rem_bursts` fixes the number of REM bursts; 0 draws it at random.
SynthEpoch synthesize_epoch(Stage stage, std::size_t samples, double sampling_rate, Rng& rng,
                            double noise_std = 3.0, std::size_t rem_bursts = 0);

// In-memory recording with one synthesized epoch per stage (Excluded is not
// allowed), z-normalised over all samples the way segment_epochs does. When
// `bursts` is given it receives the REM burst ranges of every epoch.
RecordingEpochs synth_recording(const std::vector<Stage>& stages, std::size_t samples_per_epoch,
                                double sampling_rate, Rng& rng, double noise_std = 3.0,
                                std::vector<std::vector<std::pair<std::size_t, std::size_t>>>* bursts = nullptr,
                                std::size_t rem_bursts = 0);

// Designed frequency band of each stage's dominant spectral peak, in Hz.
std::pair<double, double> designed_band(Stage stage);

struct SynthConfig {
  std::size_t subjects = 10;
  std::size_t recordings_per_subject = 1;
  std::size_t epochs_per_recording = 100;
  double sampling_rate = 100;
  // Probability of keeping the previous stage; otherwise draw from priors.
  double stay_probability = 0.7;
  std::array<double, kNumStages> class_priors{0.2, 0.2, 0.2, 0.2, 0.2};
  double excluded_rate = 0.005;
  double noise_std = 3.0;
  std::string channel = "EOG horizontal";
  WindowingConfig windowing;
};

nlohmann::json to_json(const SynthConfig& c);
SynthConfig synth_config_from_json(const nlohmann::json& j);

// Markov chain over stages: stay with `stay_probability`, else draw from the
// priors; each epoch is independently Excluded with `excluded_rate`.
std::vector<Stage> synth_hypnogram(const SynthConfig& config, Rng& rng);

// Writes <id>.edf (EOG channel plus a low-rate chin EMG channel), <id>.csv
// hypnograms with Sleep-EDF style labels, events.csv listing every REM burst
// (recording,epoch_index,begin_sample,end_sample) and manifest.json into
// `out_dir`. Output bytes depend only on (config, seed). Returns the manifest path.
std::filesystem::path synth_dataset(const SynthConfig& config, std::uint64_t seed,
                                    const std::filesystem::path& out_dir);

}  // namespace eogstage
