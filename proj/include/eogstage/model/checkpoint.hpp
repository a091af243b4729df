#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "eogstage/common/error.hpp"
#include "eogstage/model/model.hpp"

namespace eogstage {

// Layout (all integers little-endian):
//   "EOGS"  u16 version=1
//   u32 n   n bytes of UTF-8 JSON {"model": {...}, "training": {...}}
//   u32 count, then per tensor: u16 name length, name, u8 rank, u32 dims[rank],
//   float32 data.
inline constexpr std::uint16_t kCheckpointVersion = 1;

class CheckpointError : public DataError {
 public:
  enum class Kind { BadMagic, UnsupportedVersion, Truncated, TrailingData, BadConfig, ShapeMismatch };
  CheckpointError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct TrainingMeta {
  std::int64_t fold = -1;  // -1: not part of a cross-validation run
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  bool operator==(const TrainingMeta&) const = default;
};

struct Checkpoint {
  ModelConfig config;
  TrainingMeta meta;
  NamedTensors<float> tensors;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

Checkpoint snapshot(const SleepStager<float>& model, const TrainingMeta& meta);
// Builds a model from the config and copies every tensor in by name; names
// and shapes must match the config exactly.
SleepStager<float> restore(const Checkpoint& ckpt);

void save_checkpoint(const SleepStager<float>& model, const TrainingMeta& meta,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// SHA-256 (lowercase hex) over the float32 little-endian data of every tensor
// in file order.
std::string parameter_digest(const Checkpoint& ckpt);

}  // namespace eogstage
