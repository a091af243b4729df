#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "eogstage/data/edf.hpp"

namespace eogstage {

// Class indices 0..4 follow this order; Excluded never reaches the model.
enum class Stage { W = 0, N1 = 1, N2 = 2, N3 = 3, REM = 4, Excluded = 5 };

inline constexpr std::size_t kNumStages = 5;
inline constexpr double kEpochSeconds = 30.0;

std::string_view stage_name(Stage s);
inline std::size_t stage_index(Stage s) { return static_cast<std::size_t>(s); }
Stage stage_from_index(std::size_t i);

// R&K / AASM vocabulary, case-insensitive, with or without the "Sleep stage "
// prefix: W/Wake, 1/N1, 2/N2, 3/N3, 4/N4 (merged into N3), R/REM,
// M/Movement/Movement time, ?/Unknown (Excluded). Anything else is a DataError.
Stage map_label(std::string_view raw);

struct HypnogramEntry {
  std::size_t epoch_index = 0;
  Stage stage = Stage::Excluded;
  std::string original;
};

struct Hypnogram {
  std::string source;
  std::vector<HypnogramEntry> entries;  // epoch_index == position
  std::size_t size() const { return entries.size(); }
};

// `epoch_index,label` rows, optional header line, indices must run 0,1,2,...
Hypnogram parse_hypnogram_csv(std::string_view text, const std::string& source);
// Expands annotations by duration / 30 s. Durations that are not a multiple
// of 30 s, and gaps or overlaps between annotations, are DataErrors.
Hypnogram hypnogram_from_annotations(const std::vector<EdfAnnotation>& annotations,
                                     const std::string& source);
Hypnogram read_hypnogram(const std::filesystem::path& path);
std::string write_hypnogram_csv(const Hypnogram& h);

}  // namespace eogstage
