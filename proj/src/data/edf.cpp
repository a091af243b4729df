#include "eogstage/data/edf.hpp"

#include <charconv>
#include <cmath>

#include <fmt/format.h>

#include "eogstage/common/io.hpp"

namespace eogstage {

EdfError::EdfError(Kind kind, std::size_t offset, const std::string& what)
    : DataError(fmt::format("EDF byte {}: {}", offset, what)), kind_(kind), offset_(offset) {}

namespace {

using Kind = EdfError::Kind;

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(' ');
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(' ');
  return std::string(s.substr(b, e - b + 1));
}

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> b) : b_(b) {}

  std::string text(std::size_t width) {
    auto s = std::string_view(reinterpret_cast<const char*>(b_.data()) + pos_, width);
    last_ = pos_;
    pos_ += width;
    return trim(s);
  }

  double number(std::size_t width, const char* field) {
    auto s = text(width);
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    // EDF writers commonly emit "+1.0"; from_chars does not accept the sign.
    if (!s.empty() && s[0] == '+') {
      auto r = std::from_chars(s.data() + 1, s.data() + s.size(), v);
      p = r.ptr;
      ec = r.ec;
    }
    if (s.empty() || ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
      throw EdfError(Kind::BadField, last_, fmt::format("{} is not a number: '{}'", field, s));
    return v;
  }

  long integer(std::size_t width, const char* field) {
    auto s = text(width);
    long v = 0;
    const char* begin = s.data();
    if (!s.empty() && s[0] == '+') ++begin;
    auto [p, ec] = std::from_chars(begin, s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || p != s.data() + s.size())
      throw EdfError(Kind::BadField, last_, fmt::format("{} is not an integer: '{}'", field, s));
    return v;
  }

  std::size_t last() const { return last_; }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
  std::size_t last_ = 0;
};

// Fits a number into an EDF header field, dropping precision if needed.
std::string fit_number(double v, std::size_t width) {
  for (int precision = 12; precision >= 1; --precision) {
    auto s = fmt::format("{:.{}g}", v, precision);
    if (s.size() <= width) return s;
  }
  throw DataError(fmt::format("value {} does not fit in a {}-character EDF field", v, width));
}

void put(std::vector<std::uint8_t>& out, std::string_view s, std::size_t width) {
  if (s.size() > width)
    throw DataError(fmt::format("EDF header field '{}' exceeds {} characters", s, width));
  for (std::size_t i = 0; i < width; ++i)
    out.push_back(static_cast<std::uint8_t>(i < s.size() ? s[i] : ' '));
}

}  // namespace

std::vector<double> EdfSignal::physical() const {
  std::vector<double> out(digital.size());
  for (std::size_t i = 0; i < digital.size(); ++i) out[i] = to_physical(digital[i]);
  return out;
}

std::int16_t EdfSignal::to_digital(double physical) const {
  double d = digital_min + (physical - physical_min) * (static_cast<double>(digital_max) - digital_min) /
                               (physical_max - physical_min);
  d = std::clamp(std::round(d), static_cast<double>(digital_min), static_cast<double>(digital_max));
  return static_cast<std::int16_t>(d);
}

double EdfRecording::sampling_rate(std::size_t i) const {
  return static_cast<double>(signals.at(i).samples_per_record) / record_duration;
}

std::size_t EdfRecording::find_signal(const std::string& label) const {
  for (std::size_t i = 0; i < signals.size(); ++i)
    if (signals[i].label == label) return i;
  std::string have;
  for (const auto& s : signals) have += (have.empty() ? "'" : ", '") + s.label + "'";
  throw EdfError(Kind::MissingSignal, 0,
                 fmt::format("no signal labelled '{}' (signals: {})", label, have));
}

EdfRecording parse_edf(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 256)
    throw EdfError(Kind::TooShort, bytes.size(),
                   fmt::format("file has {} bytes, the fixed header needs 256", bytes.size()));
  HeaderReader h(bytes);
  EdfRecording rec;
  rec.version = h.text(8);
  rec.patient_id = h.text(80);
  rec.recording_id = h.text(80);
  rec.start_date = h.text(8);
  rec.start_time = h.text(8);
  const long header_bytes = h.integer(8, "header size");
  const std::size_t header_offset = h.last();
  rec.reserved = h.text(44);
  const long num_records = h.integer(8, "number of data records");
  const std::size_t records_offset = h.last();
  rec.record_duration = h.number(8, "data record duration");
  if (!(rec.record_duration > 0))
    throw EdfError(Kind::BadRange, h.last(), "data record duration must be positive");
  const long ns = h.integer(4, "number of signals");
  if (ns < 1) throw EdfError(Kind::BadRange, h.last(), "number of signals must be positive");
  if (header_bytes != 256 * (ns + 1))
    throw EdfError(Kind::BadField, header_offset,
                   fmt::format("header size {} does not match 256 * ({} signals + 1)",
                               header_bytes, ns));
  if (bytes.size() < static_cast<std::size_t>(header_bytes))
    throw EdfError(Kind::TooShort, bytes.size(),
                   fmt::format("file ends inside the {}-byte header", header_bytes));

  const std::size_t n = static_cast<std::size_t>(ns);
  rec.signals.resize(n);
  // Signal header fields are stored field-major: all labels, then all transducers, ...
  for (auto& s : rec.signals) s.label = h.text(16);
  for (auto& s : rec.signals) s.transducer = h.text(80);
  for (auto& s : rec.signals) s.physical_dimension = h.text(8);
  for (auto& s : rec.signals) s.physical_min = h.number(8, "physical minimum");
  for (auto& s : rec.signals) s.physical_max = h.number(8, "physical maximum");
  std::vector<std::size_t> dig_offsets;
  for (auto& s : rec.signals) {
    s.digital_min = static_cast<int>(h.integer(8, "digital minimum"));
    dig_offsets.push_back(h.last());
  }
  for (auto& s : rec.signals) s.digital_max = static_cast<int>(h.integer(8, "digital maximum"));
  for (auto& s : rec.signals) s.prefiltering = h.text(80);
  std::size_t record_samples = 0;
  for (auto& s : rec.signals) {
    long spr = h.integer(8, "samples per record");
    if (spr < 1) throw EdfError(Kind::BadRange, h.last(), "samples per record must be positive");
    s.samples_per_record = static_cast<std::size_t>(spr);
    record_samples += s.samples_per_record;
  }
  for (std::size_t i = 0; i < n; ++i) h.text(32);

  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = rec.signals[i];
    if (s.digital_min >= s.digital_max)
      throw EdfError(Kind::BadRange, dig_offsets[i],
                     fmt::format("signal '{}': digital minimum {} >= digital maximum {}", s.label,
                                 s.digital_min, s.digital_max));
    if (s.digital_min < -32768 || s.digital_max > 32767)
      throw EdfError(Kind::BadRange, dig_offsets[i],
                     fmt::format("signal '{}': digital range exceeds 16 bits", s.label));
    if (s.physical_min == s.physical_max)
      throw EdfError(Kind::BadRange, dig_offsets[i],
                     fmt::format("signal '{}': physical minimum equals maximum", s.label));
  }

  const std::size_t record_bytes = 2 * record_samples;
  const std::size_t data_bytes = bytes.size() - static_cast<std::size_t>(header_bytes);
  if (num_records == -1) {
    // Allowed while a recording is in progress; infer from the file size.
    rec.num_records = data_bytes / record_bytes;
  } else if (num_records < 0) {
    throw EdfError(Kind::BadRange, records_offset, "negative number of data records");
  } else {
    rec.num_records = static_cast<std::size_t>(num_records);
  }
  if (data_bytes < rec.num_records * record_bytes)
    throw EdfError(Kind::Truncated, bytes.size(),
                   fmt::format("{} data records of {} bytes need {} bytes, file has {}",
                               rec.num_records, record_bytes, rec.num_records * record_bytes,
                               data_bytes));

  for (auto& s : rec.signals) s.digital.resize(rec.num_records * s.samples_per_record);
  const std::uint8_t* p = bytes.data() + header_bytes;
  for (std::size_t r = 0; r < rec.num_records; ++r)
    for (auto& s : rec.signals)
      for (std::size_t j = 0; j < s.samples_per_record; ++j, p += 2)
        s.digital[r * s.samples_per_record + j] =
            static_cast<std::int16_t>(static_cast<std::uint16_t>(p[0] | (p[1] << 8)));
  return rec;
}

EdfRecording read_edf(const std::filesystem::path& path) {
  auto bytes = io::read_bytes(path);
  try {
    return parse_edf(bytes);
  } catch (const EdfError& e) {
    throw EdfError(e.kind(), e.offset(), fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::vector<std::uint8_t> write_edf(const EdfRecording& rec) {
  std::vector<std::uint8_t> out;
  const std::size_t n = rec.signals.size();
  out.reserve(rec.header_bytes());
  put(out, rec.version, 8);
  put(out, rec.patient_id, 80);
  put(out, rec.recording_id, 80);
  put(out, rec.start_date, 8);
  put(out, rec.start_time, 8);
  put(out, std::to_string(rec.header_bytes()), 8);
  put(out, rec.reserved, 44);
  put(out, std::to_string(rec.num_records), 8);
  put(out, fit_number(rec.record_duration, 8), 8);
  put(out, std::to_string(n), 4);
  for (const auto& s : rec.signals) put(out, s.label, 16);
  for (const auto& s : rec.signals) put(out, s.transducer, 80);
  for (const auto& s : rec.signals) put(out, s.physical_dimension, 8);
  for (const auto& s : rec.signals) put(out, fit_number(s.physical_min, 8), 8);
  for (const auto& s : rec.signals) put(out, fit_number(s.physical_max, 8), 8);
  for (const auto& s : rec.signals) put(out, std::to_string(s.digital_min), 8);
  for (const auto& s : rec.signals) put(out, std::to_string(s.digital_max), 8);
  for (const auto& s : rec.signals) put(out, s.prefiltering, 80);
  for (const auto& s : rec.signals) put(out, std::to_string(s.samples_per_record), 8);
  for (std::size_t i = 0; i < n; ++i) put(out, "", 32);

  for (const auto& s : rec.signals)
    if (s.digital.size() != rec.num_records * s.samples_per_record)
      throw DataError(fmt::format("signal '{}' has {} samples, header implies {}", s.label,
                                  s.digital.size(), rec.num_records * s.samples_per_record));
  for (std::size_t r = 0; r < rec.num_records; ++r)
    for (const auto& s : rec.signals)
      for (std::size_t j = 0; j < s.samples_per_record; ++j) {
        auto v = static_cast<std::uint16_t>(s.digital[r * s.samples_per_record + j]);
        out.push_back(static_cast<std::uint8_t>(v & 0xff));
        out.push_back(static_cast<std::uint8_t>(v >> 8));
      }
  return out;
}

std::vector<EdfAnnotation> parse_edf_annotations(const EdfRecording& rec) {
  std::vector<EdfAnnotation> out;
  for (const auto& s : rec.signals) {
    if (s.label != "EDF Annotations") continue;
    const std::size_t rec_bytes = 2 * s.samples_per_record;
    for (std::size_t r = 0; r < rec.num_records; ++r) {
      std::string raw;
      raw.reserve(rec_bytes);
      for (std::size_t j = 0; j < s.samples_per_record; ++j) {
        auto v = static_cast<std::uint16_t>(s.digital[r * s.samples_per_record + j]);
        raw.push_back(static_cast<char>(v & 0xff));
        raw.push_back(static_cast<char>(v >> 8));
      }
      // Each TAL: +onset[\x15duration]\x14label\x14[label\x14...]\x00
      std::size_t pos = 0;
      while (pos < raw.size()) {
        auto end = raw.find('\0', pos);
        if (end == std::string::npos) end = raw.size();
        std::string_view tal(raw.data() + pos, end - pos);
        pos = end + 1;
        if (tal.empty()) continue;
        auto first = tal.find('\x14');
        if (first == std::string_view::npos)
          throw DataError(fmt::format("EDF+ record {}: annotation list without 0x14 separator", r));
        auto stamp = tal.substr(0, first);
        auto dur_sep = stamp.find('\x15');
        auto parse = [&](std::string_view v) {
          double x = 0;
          const char* b = v.data();
          if (!v.empty() && (v[0] == '+')) ++b;
          auto [p, ec] = std::from_chars(b, v.data() + v.size(), x);
          if (v.empty() || ec != std::errc() || p != v.data() + v.size())
            throw DataError(fmt::format("EDF+ record {}: bad time stamp '{}'", r, v));
          return x;
        };
        double onset = parse(stamp.substr(0, dur_sep));
        double duration = dur_sep == std::string_view::npos ? 0.0 : parse(stamp.substr(dur_sep + 1));
        auto rest = tal.substr(first + 1);
        while (!rest.empty()) {
          auto sep = rest.find('\x14');
          auto label = rest.substr(0, sep);
          if (!label.empty()) out.push_back({onset, duration, std::string(label)});
          if (sep == std::string_view::npos) break;
          rest = rest.substr(sep + 1);
        }
      }
    }
  }
  return out;
}

}  // namespace eogstage
