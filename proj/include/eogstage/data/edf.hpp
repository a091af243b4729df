#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "eogstage/common/error.hpp"

namespace eogstage {

class EdfError : public DataError {
 public:
  enum class Kind { TooShort, BadField, BadRange, Truncated, MissingSignal };
  EdfError(Kind kind, std::size_t offset, const std::string& what);
  Kind kind() const noexcept { return kind_; }
  // Byte offset into the file where the problem was detected.
  std::size_t offset() const noexcept { return offset_; }

 private:
  Kind kind_;
  std::size_t offset_;
};

struct EdfSignal {
  std::string label;
  std::string transducer;
  std::string physical_dimension;
  double physical_min = 0;
  double physical_max = 0;
  int digital_min = 0;
  int digital_max = 0;
  std::string prefiltering;
  std::size_t samples_per_record = 0;
  std::vector<std::int16_t> digital;  // records * samples_per_record values

  double to_physical(std::int16_t d) const {
    return physical_min + (static_cast<double>(d) - digital_min) * (physical_max - physical_min) /
                              (static_cast<double>(digital_max) - digital_min);
  }
  std::vector<double> physical() const;
  // Nearest digital value for a physical one, clamped to [digital_min, digital_max].
  std::int16_t to_digital(double physical) const;
};

struct EdfRecording {
  std::string version = "0";
  std::string patient_id;
  std::string recording_id;
  std::string start_date = "01.01.85";  // dd.mm.yy
  std::string start_time = "00.00.00";  // hh.mm.ss
  std::string reserved;                 // "EDF+C"/"EDF+D" for EDF+ files
  std::size_t num_records = 0;
  double record_duration = 0;  // seconds
  std::vector<EdfSignal> signals;

  std::size_t header_bytes() const { return 256 * (signals.size() + 1); }
  // Samples per second of signal i.
  double sampling_rate(std::size_t i) const;
  // Index of the signal whose trimmed label equals `label`; EdfError MissingSignal otherwise.
  std::size_t find_signal(const std::string& label) const;
};

EdfRecording parse_edf(std::span<const std::uint8_t> bytes);
EdfRecording read_edf(const std::filesystem::path& path);
// Serialises the digital samples. Numeric header fields that do not fit in
// their 8 characters are written with reduced precision.
std::vector<std::uint8_t> write_edf(const EdfRecording& rec);

struct EdfAnnotation {
  double onset = 0;     // seconds from recording start
  double duration = 0;  // seconds; 0 when the TAL has none
  std::string label;
};

// Decodes the time-stamped annotation lists of every "EDF Annotations"
// signal. Time-keeping TALs (empty label) are skipped.
std::vector<EdfAnnotation> parse_edf_annotations(const EdfRecording& rec);

}  // namespace eogstage
