#include "eogstage/data/hypnogram.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "eogstage/common/io.hpp"

namespace eogstage {

namespace {

std::string lower_trimmed(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n\"");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n\"");
  std::string out(s.substr(b, e - b + 1));
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::W: return "W";
    case Stage::N1: return "N1";
    case Stage::N2: return "N2";
    case Stage::N3: return "N3";
    case Stage::REM: return "REM";
    case Stage::Excluded: return "EXCLUDED";
  }
  return "?";
}

Stage stage_from_index(std::size_t i) {
  if (i >= kNumStages) throw DataError(fmt::format("class index {} out of range 0..4", i));
  return static_cast<Stage>(i);
}

Stage map_label(std::string_view raw) {
  std::string s = lower_trimmed(raw);
  static constexpr std::string_view prefix = "sleep stage ";
  if (s.starts_with(prefix)) s = s.substr(prefix.size());
  if (s == "w" || s == "wake") return Stage::W;
  if (s == "1" || s == "n1") return Stage::N1;
  if (s == "2" || s == "n2") return Stage::N2;
  if (s == "3" || s == "n3" || s == "4" || s == "n4") return Stage::N3;
  if (s == "r" || s == "rem") return Stage::REM;
  if (s == "m" || s == "movement" || s == "movement time" || s == "?" || s == "unknown")
    return Stage::Excluded;
  throw DataError(fmt::format("unknown sleep stage label '{}'", raw));
}

Hypnogram parse_hypnogram_csv(std::string_view text, const std::string& source) {
  Hypnogram h;
  h.source = source;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    auto comma = line.find(',');
    if (comma == std::string_view::npos)
      throw DataError(fmt::format("{}:{}: expected 'epoch_index,label'", source, line_no));
    auto idx_text = lower_trimmed(line.substr(0, comma));
    auto label = line.substr(comma + 1);
    if (line_no == 1 && idx_text == "epoch_index") continue;
    std::size_t idx = 0;
    auto [p, ec] = std::from_chars(idx_text.data(), idx_text.data() + idx_text.size(), idx);
    if (idx_text.empty() || ec != std::errc() || p != idx_text.data() + idx_text.size())
      throw DataError(fmt::format("{}:{}: bad epoch index '{}'", source, line_no, idx_text));
    if (idx != h.entries.size())
      throw DataError(fmt::format("{}:{}: epoch index {} out of sequence (expected {})", source,
                                  line_no, idx, h.entries.size()));
    Stage stage;
    try {
      stage = map_label(label);
    } catch (const DataError& e) {
      throw DataError(fmt::format("{}:{}: {}", source, line_no, e.what()));
    }
    auto b = label.find_first_not_of(" \t\"");
    auto e = label.find_last_not_of(" \t\"");
    h.entries.push_back({idx, stage, b == std::string_view::npos
                                         ? std::string()
                                         : std::string(label.substr(b, e - b + 1))});
  }
  return h;
}

Hypnogram hypnogram_from_annotations(const std::vector<EdfAnnotation>& annotations,
                                     const std::string& source) {
  auto sorted = annotations;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.onset < b.onset; });
  Hypnogram h;
  h.source = source;
  for (const auto& a : sorted) {
    const Stage stage = map_label(a.label);
    const double epochs = a.duration / kEpochSeconds;
    const double whole = std::round(epochs);
    if (whole < 1 || std::abs(epochs - whole) > 1e-6)
      throw DataError(fmt::format("{}: annotation '{}' at {} s lasts {} s, not a multiple of 30 s",
                                  source, a.label, a.onset, a.duration));
    const double expected = static_cast<double>(h.entries.size()) * kEpochSeconds;
    if (std::abs(a.onset - expected) > 1e-6)
      throw DataError(fmt::format("{}: annotation '{}' starts at {} s, expected {} s", source,
                                  a.label, a.onset, expected));
    for (long i = 0; i < static_cast<long>(whole); ++i)
      h.entries.push_back({h.entries.size(), stage, a.label});
  }
  return h;
}

Hypnogram read_hypnogram(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (ext == ".edf") {
    auto rec = read_edf(path);
    return hypnogram_from_annotations(parse_edf_annotations(rec), path.string());
  }
  return parse_hypnogram_csv(io::read_text(path), path.string());
}

std::string write_hypnogram_csv(const Hypnogram& h) {
  std::string out = "epoch_index,label\n";
  for (const auto& e : h.entries)
    out += fmt::format("{},{}\n", e.epoch_index,
                       e.original.empty() ? std::string(stage_name(e.stage)) : e.original);
  return out;
}

}  // namespace eogstage
