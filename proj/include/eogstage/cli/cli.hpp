#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace eogstage::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

const char* version();

// Everything a subcommand needs; echoed into run.meta together with the
// resolved configuration so a run can be repeated from that file.
struct RunSpec {
  std::string subcommand;
  std::filesystem::path manifest;
  std::filesystem::path checkpoint;
  std::filesystem::path input;  // report: run directory to render
  std::vector<std::filesystem::path> configs;
  std::filesystem::path out;
  std::uint64_t seed = 0;
  bool force = false;

  std::string preset = "default";        // model preset: default, desk, tiny
  std::vector<std::string> subjects;     // empty: all
  std::optional<std::size_t> folds;      // k of the subject split
  std::optional<std::size_t> fold;       // fold selector
  std::size_t jobs = 1;
  std::optional<std::size_t> stride;     // evaluation stride override

  // synth
  std::optional<std::size_t> num_subjects;
  std::optional<std::size_t> epochs_per_recording;
  std::optional<double> sampling_rate;

  // gradcam
  std::size_t count = 8;
  std::string stage;                 // center-label filter, empty: any
  std::string target = "predicted";  // predicted, annotated or a stage name

  // tsne
  std::size_t max_points = 1000;
};

nlohmann::json to_json(const RunSpec& spec);

// argv-style arguments without the program name. Diagnostics go to `err`,
// summaries and help text to `out`. Returns one of the kExit codes.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace eogstage::cli
