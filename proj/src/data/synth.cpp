#include "eogstage/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "eogstage/common/error.hpp"
#include "eogstage/common/io.hpp"
#include "eogstage/data/edf.hpp"

namespace eogstage {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void add_sine(std::vector<double>& x, double rate, double freq, double amp, double phase) {
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] += amp * std::sin(kTwoPi * freq * static_cast<double>(i) / rate + phase);
}

// Number of events for an epoch of `dur` seconds: 1..max(1, floor(dur / per)).
std::size_t event_count(Rng& rng, double dur, double per) {
  auto hi = std::max<std::size_t>(1, static_cast<std::size_t>(dur / per));
  return 1 + rng.below(hi);
}

// Random [begin, end) of `len` samples inside [0, n).
std::pair<std::size_t, std::size_t> place(Rng& rng, std::size_t n, std::size_t len) {
  len = std::clamp<std::size_t>(len, 1, n);
  std::size_t begin = rng.below(n - len + 1);
  return {begin, begin + len};
}

void background(std::vector<double>& x, double rate, Rng& rng, std::size_t components,
                double amp_lo, double amp_hi) {
  for (std::size_t c = 0; c < components; ++c)
    add_sine(x, rate, rng.uniform(4.0, 7.0), rng.uniform(amp_lo, amp_hi), rng.uniform(0, kTwoPi));
}

}  // namespace

RecordingEpochs synth_recording(const std::vector<Stage>& stages, std::size_t samples_per_epoch,
                                double sampling_rate, Rng& rng, double noise_std,
                                std::vector<std::vector<std::pair<std::size_t, std::size_t>>>* bursts,
                                std::size_t rem_bursts) {
  if (stages.empty()) throw DataError("synth_recording: no stages");
  RecordingEpochs rec;
  rec.subject = "synthetic";
  rec.recording = "synthetic";
  rec.sampling_rate = sampling_rate;
  rec.samples_per_epoch = samples_per_epoch;
  std::vector<std::vector<double>> raw;
  double sum = 0, sumsq = 0;
  for (std::size_t e = 0; e < stages.size(); ++e) {
    if (stages[e] == Stage::Excluded) throw DataError("synth_recording: Excluded stage");
    auto ep = synthesize_epoch(stages[e], samples_per_epoch, sampling_rate, rng, noise_std, rem_bursts);
    for (double v : ep.signal) {
      sum += v;
      sumsq += v * v;
    }
    raw.push_back(std::move(ep.signal));
    if (bursts) bursts->push_back(std::move(ep.bursts));
  }
  const double n = static_cast<double>(stages.size() * samples_per_epoch);
  const double mean = sum / n;
  const double sd = std::sqrt(std::max(0.0, sumsq / n - mean * mean));
  for (std::size_t e = 0; e < stages.size(); ++e) {
    EpochRecord r{rec.subject, rec.recording, e, std::vector<float>(samples_per_epoch), stages[e]};
    for (std::size_t i = 0; i < samples_per_epoch; ++i)
      r.signal[i] = static_cast<float>((raw[e][i] - mean) / sd);
    rec.epochs.push_back(std::move(r));
  }
  return rec;
}

std::pair<double, double> designed_band(Stage stage) {
  switch (stage) {
    case Stage::W: return {8.0, 12.0};
    case Stage::N1: return {4.0, 7.0};
    case Stage::N2: return {12.0, 14.0};
    case Stage::N3: return {0.5, 2.0};
    case Stage::REM: return {2.0, 3.0};
    default: return {0.0, 0.0};
  }
}

SynthEpoch synthesize_epoch(Stage stage, std::size_t samples, double rate, Rng& rng,
                            double noise_std, std::size_t rem_bursts) {
  SynthEpoch out;
  auto& x = out.signal;
  x.assign(samples, 0.0);
  const double dur = static_cast<double>(samples) / rate;
  auto secs = [&](double s) { return static_cast<std::size_t>(std::lround(s * rate)); };

  switch (stage) {
    case Stage::W: {
      const double f = rng.uniform(8.5, 11.5), amp = rng.uniform(20, 30), ph = rng.uniform(0, kTwoPi);
      const double mod = rng.uniform(0, kTwoPi);
      for (std::size_t i = 0; i < samples; ++i) {
        const double t = static_cast<double>(i) / rate;
        x[i] += amp * (1.0 + 0.3 * std::sin(kTwoPi * 0.1 * t + mod)) * std::sin(kTwoPi * f * t + ph);
      }
      // Blinks: brief Gaussian-shaped deflections.
      const std::size_t blinks = event_count(rng, dur, 10.0);
      for (std::size_t b = 0; b < blinks; ++b) {
        const double width = std::min(0.3, 0.15 * dur);
        auto [lo, hi] = place(rng, samples, secs(width));
        const double amp_b = rng.uniform(80, 120), center = 0.5 * (lo + hi), sigma = 0.2 * (hi - lo) + 0.5;
        for (std::size_t i = lo; i < hi; ++i) {
          const double z = (static_cast<double>(i) - center) / sigma;
          x[i] += amp_b * std::exp(-0.5 * z * z);
        }
      }
      break;
    }
    case Stage::N1:
      background(x, rate, rng, 3, 6, 10);
      break;
    case Stage::N2: {
      background(x, rate, rng, 1, 1.5, 2.5);
      const std::size_t spindles = 1 + event_count(rng, dur, 10.0);
      for (std::size_t s = 0; s < spindles; ++s) {
        const double len = rng.uniform(std::min(1.0, 0.25 * dur), std::min(2.0, 0.5 * dur));
        auto [lo, hi] = place(rng, samples, secs(len));
        const double f = rng.uniform(12.0, 14.0), amp = rng.uniform(25, 35), ph = rng.uniform(0, kTwoPi);
        for (std::size_t i = lo; i < hi; ++i) {
          const double u = (static_cast<double>(i - lo) + 0.5) / static_cast<double>(hi - lo);
          const double env = 0.5 - 0.5 * std::cos(kTwoPi * u);
          x[i] += amp * env * std::sin(kTwoPi * f * static_cast<double>(i) / rate + ph);
        }
      }
      break;
    }
    case Stage::N3:
      for (int c = 0; c < 2; ++c)
        add_sine(x, rate, rng.uniform(0.5, 2.0), rng.uniform(40, 60), rng.uniform(0, kTwoPi));
      break;
    case Stage::REM: {
      background(x, rate, rng, 3, 1.5, 3);
      // Rapid eye movements: slow rise, sharp return.
      const std::size_t bursts = rem_bursts > 0 ? rem_bursts : event_count(rng, dur, 10.0);
      for (std::size_t b = 0; b < bursts; ++b) {
        const double len = rng.uniform(std::min(1.5, 0.2 * dur), std::min(3.0, 0.35 * dur));
        auto [lo, hi] = place(rng, samples, secs(len));
        const double f = rng.uniform(2.0, 3.0), amp = rng.uniform(60, 80), ph = rng.uniform();
        for (std::size_t i = lo; i < hi; ++i) {
          const double cyc = f * static_cast<double>(i - lo) / rate + ph;
          x[i] += amp * (2.0 * (cyc - std::floor(cyc)) - 1.0);
        }
        out.bursts.emplace_back(lo, hi);
      }
      std::sort(out.bursts.begin(), out.bursts.end());
      break;
    }
    case Stage::Excluded:
      // Movement artefact: a large mean-reverting random walk.
      for (std::size_t i = 0; i < samples; ++i) x[i] = (i ? 0.98 * x[i - 1] : 0.0) + rng.normal(0.0, 8.0);
      break;
  }
  for (auto& v : x) v += rng.normal(0.0, noise_std);
  return out;
}

nlohmann::json to_json(const SynthConfig& c) {
  return {{"subjects", c.subjects},
          {"recordings_per_subject", c.recordings_per_subject},
          {"epochs_per_recording", c.epochs_per_recording},
          {"sampling_rate", c.sampling_rate},
          {"stay_probability", c.stay_probability},
          {"class_priors", c.class_priors},
          {"excluded_rate", c.excluded_rate},
          {"noise_std", c.noise_std},
          {"channel", c.channel},
          {"windowing",
           {{"window_size", c.windowing.window_size},
            {"train_stride", c.windowing.train_stride},
            {"eval_stride", c.windowing.eval_stride}}}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "subjects") c.subjects = value.get<std::size_t>();
      else if (key == "recordings_per_subject") c.recordings_per_subject = value.get<std::size_t>();
      else if (key == "epochs_per_recording") c.epochs_per_recording = value.get<std::size_t>();
      else if (key == "sampling_rate") c.sampling_rate = value.get<double>();
      else if (key == "stay_probability") c.stay_probability = value.get<double>();
      else if (key == "class_priors") c.class_priors = value.get<std::array<double, kNumStages>>();
      else if (key == "excluded_rate") c.excluded_rate = value.get<double>();
      else if (key == "noise_std") c.noise_std = value.get<double>();
      else if (key == "channel") c.channel = value.get<std::string>();
      else if (key == "windowing") {
        c.windowing.window_size = value.value("window_size", c.windowing.window_size);
        c.windowing.train_stride = value.value("train_stride", c.windowing.train_stride);
        c.windowing.eval_stride = value.value("eval_stride", c.windowing.eval_stride);
      } else {
        throw ConfigError(fmt::format("unknown key '{}' in synth config", key));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("synth config: {}", e.what()));
  }
  if (c.subjects == 0 || c.recordings_per_subject == 0 || c.epochs_per_recording == 0)
    throw ConfigError("synth config: subjects, recordings and epochs must be positive");
  const double spe = c.sampling_rate * kEpochSeconds;
  if (!(c.sampling_rate > 0) || std::abs(spe - std::round(spe)) > 1e-9)
    throw ConfigError("synth config: sampling_rate * 30 must be a whole number of samples");
  if (!(c.stay_probability >= 0 && c.stay_probability <= 1))
    throw ConfigError("synth config: stay_probability must be in [0, 1]");
  if (!(c.excluded_rate >= 0 && c.excluded_rate < 1))
    throw ConfigError("synth config: excluded_rate must be in [0, 1)");
  double total = 0;
  for (double p : c.class_priors) {
    if (!(p >= 0)) throw ConfigError("synth config: class priors must be non-negative");
    total += p;
  }
  if (!(total > 0)) throw ConfigError("synth config: class priors sum to zero");
  return c;
}

std::vector<Stage> synth_hypnogram(const SynthConfig& c, Rng& rng) {
  double total = 0;
  for (double p : c.class_priors) total += p;
  auto draw = [&] {
    double u = rng.uniform() * total;
    for (std::size_t k = 0; k < kNumStages; ++k) {
      if (u < c.class_priors[k]) return static_cast<Stage>(k);
      u -= c.class_priors[k];
    }
    return Stage::REM;
  };
  std::vector<Stage> stages;
  Stage current = draw();
  for (std::size_t e = 0; e < c.epochs_per_recording; ++e) {
    if (e > 0 && rng.uniform() >= c.stay_probability) current = draw();
    stages.push_back(rng.uniform() < c.excluded_rate ? Stage::Excluded : current);
  }
  return stages;
}

std::filesystem::path synth_dataset(const SynthConfig& c, std::uint64_t seed,
                                    const std::filesystem::path& out_dir) {
  const auto spe = static_cast<std::size_t>(std::llround(c.sampling_rate * kEpochSeconds));
  DatasetManifest manifest;
  manifest.root = out_dir;
  manifest.sampling_rate = c.sampling_rate;
  manifest.windowing = c.windowing;
  std::string events = "recording,epoch_index,begin_sample,end_sample\n";

  std::uint64_t stream = 0;
  for (std::size_t s = 0; s < c.subjects; ++s)
    for (std::size_t r = 0; r < c.recordings_per_subject; ++r, ++stream) {
      const std::string subject = fmt::format("s{:02}", s + 1);
      const std::string id = fmt::format("{}_r{}", subject, r + 1);
      Rng rng = Rng::derive(seed, stream);
      const auto stages = synth_hypnogram(c, rng);

      EdfRecording edf;
      edf.patient_id = fmt::format("{} X X X", subject);
      edf.recording_id = fmt::format("synthetic seed {} {}", seed, id);
      edf.num_records = stages.size();
      edf.record_duration = kEpochSeconds;
      EdfSignal eog;
      eog.label = c.channel;
      eog.transducer = "synthetic";
      eog.physical_dimension = "uV";
      eog.physical_min = -500;
      eog.physical_max = 500;
      eog.digital_min = -32768;
      eog.digital_max = 32767;
      eog.samples_per_record = spe;
      EdfSignal emg = eog;
      emg.label = "EMG submental";
      emg.samples_per_record = 30;

      Hypnogram hyp;
      for (std::size_t e = 0; e < stages.size(); ++e) {
        auto ep = synthesize_epoch(stages[e], spe, c.sampling_rate, rng, c.noise_std);
        for (double v : ep.signal) eog.digital.push_back(eog.to_digital(v));
        for (std::size_t i = 0; i < emg.samples_per_record; ++i)
          emg.digital.push_back(emg.to_digital(rng.normal(0.0, stages[e] == Stage::W ? 20.0 : 5.0)));
        for (const auto& [b, en] : ep.bursts) events += fmt::format("{},{},{},{}\n", id, e, b, en);

        std::string label;
        switch (stages[e]) {
          case Stage::W: label = "Sleep stage W"; break;
          case Stage::N1: label = "Sleep stage 1"; break;
          case Stage::N2: label = "Sleep stage 2"; break;
          case Stage::N3: label = rng.uniform() < 0.5 ? "Sleep stage 3" : "Sleep stage 4"; break;
          case Stage::REM: label = "Sleep stage R"; break;
          case Stage::Excluded: label = rng.uniform() < 0.5 ? "Movement time" : "Sleep stage ?"; break;
        }
        hyp.entries.push_back({e, stages[e], label});
      }
      edf.signals = {std::move(eog), std::move(emg)};
      io::write_atomic(out_dir / (id + ".edf"), write_edf(edf));
      io::write_atomic(out_dir / (id + ".csv"), write_hypnogram_csv(hyp));
      manifest.recordings.push_back(
          {subject, id, out_dir / (id + ".edf"), out_dir / (id + ".csv"), c.channel});
    }
  io::write_atomic(out_dir / "events.csv", events);
  const auto path = out_dir / "manifest.json";
  io::write_atomic(path, manifest_to_json(manifest).dump(2) + "\n");
  return path;
}

}  // namespace eogstage
