#include "eogstage/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <map>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "eogstage/common/io.hpp"

namespace eogstage {

namespace {

using Kind = CheckpointError::Kind;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    auto b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::span<const std::uint8_t> bytes(std::size_t n, const char* what) {
    if (b_.size() - pos_ < n)
      throw CheckpointError(Kind::Truncated,
                            fmt::format("checkpoint truncated at byte {} while reading {}", pos_, what));
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename U>
  U le(const char* what) {
    auto s = bytes(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(s[i]) << (8 * i));
    return v;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == b_.size(); }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json meta = {{"model", to_json(ckpt.config)},
                         {"training",
                          {{"fold", ckpt.meta.fold},
                           {"step", ckpt.meta.step},
                           {"seed", ckpt.meta.seed}}}};
  const std::string blob = meta.dump();

  Writer w;
  w.bytes("EOGS", 4);
  w.le<std::uint16_t>(kCheckpointVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(blob.size()));
  w.bytes(blob.data(), blob.size());
  w.le<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    w.le<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.le<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) w.le<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (float v : t.data()) w.le<std::uint32_t>(std::bit_cast<std::uint32_t>(v));
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "EOGS", 4) != 0)
    throw CheckpointError(Kind::BadMagic, "not a checkpoint: magic bytes are not \"EOGS\"");
  r.bytes(4, "magic");
  auto version = r.le<std::uint16_t>("version");
  if (version != kCheckpointVersion)
    throw CheckpointError(Kind::UnsupportedVersion,
                          fmt::format("unsupported checkpoint version {} (expected {})", version,
                                      kCheckpointVersion));
  auto blob_len = r.le<std::uint32_t>("config length");
  auto blob = r.bytes(blob_len, "config");

  Checkpoint ckpt;
  try {
    auto j = nlohmann::json::parse(blob.begin(), blob.end());
    ckpt.config = model_config_from_json(j.at("model"));
    const auto& t = j.at("training");
    ckpt.meta.fold = t.at("fold").get<std::int64_t>();
    ckpt.meta.step = t.at("step").get<std::uint64_t>();
    ckpt.meta.seed = t.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(Kind::BadConfig, fmt::format("checkpoint config is invalid: {}", e.what()));
  } catch (const ConfigError& e) {
    throw CheckpointError(Kind::BadConfig, fmt::format("checkpoint config is invalid: {}", e.what()));
  }

  auto count = r.le<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name_len = r.le<std::uint16_t>("tensor name length");
    auto name_bytes = r.bytes(name_len, "tensor name");
    std::string name(name_bytes.begin(), name_bytes.end());
    auto rank = r.le<std::uint8_t>("tensor rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.le<std::uint32_t>("tensor dims");
    // Check the size before allocating so a corrupt dim cannot ask for gigabytes.
    const std::size_t n = shape_numel(shape);
    if ((bytes.size() - r.pos()) / 4 < n)
      throw CheckpointError(Kind::Truncated,
                            fmt::format("checkpoint truncated at byte {} in tensor '{}'", r.pos(), name));
    Tensor<float> t(shape);
    for (auto& v : t.data()) v = std::bit_cast<float>(r.le<std::uint32_t>("tensor data"));
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (!r.done())
    throw CheckpointError(Kind::TrailingData,
                          fmt::format("{} unexpected bytes after the last tensor", bytes.size() - r.pos()));
  return ckpt;
}

Checkpoint snapshot(const SleepStager<float>& model, const TrainingMeta& meta) {
  Checkpoint ckpt{model.config(), meta, {}};
  for (const auto& [name, t] : model.state()) ckpt.tensors.emplace_back(name, t.clone());
  return ckpt;
}

SleepStager<float> restore(const Checkpoint& ckpt) {
  SleepStager<float> model(ckpt.config, 0);
  std::map<std::string, const Tensor<float>*> stored;
  for (const auto& [name, t] : ckpt.tensors) {
    if (!stored.emplace(name, &t).second)
      throw CheckpointError(Kind::ShapeMismatch, fmt::format("duplicate tensor '{}'", name));
  }
  auto state = model.state();
  if (stored.size() != state.size())
    throw CheckpointError(Kind::ShapeMismatch,
                          fmt::format("checkpoint has {} tensors, config implies {}",
                                      stored.size(), state.size()));
  for (auto& [name, dst] : state) {
    auto it = stored.find(name);
    if (it == stored.end())
      throw CheckpointError(Kind::ShapeMismatch, fmt::format("checkpoint lacks tensor '{}'", name));
    const auto& src = *it->second;
    if (src.shape() != dst.shape())
      throw CheckpointError(Kind::ShapeMismatch,
                            fmt::format("tensor '{}' has shape {}, config implies {}", name,
                                        shape_str(src.shape()), shape_str(dst.shape())));
    std::copy(src.data().begin(), src.data().end(), dst.data().begin());
  }
  return model;
}

void save_checkpoint(const SleepStager<float>& model, const TrainingMeta& meta,
                     const std::filesystem::path& path) {
  io::write_atomic(path, encode_checkpoint(snapshot(model, meta)));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_bytes(path));
}

std::string parameter_digest(const Checkpoint& ckpt) {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  for (const auto& [name, t] : ckpt.tensors)
    for (float v : t.data()) {
      auto bits = std::bit_cast<std::uint32_t>(v);
      std::uint8_t le[4] = {static_cast<std::uint8_t>(bits), static_cast<std::uint8_t>(bits >> 8),
                            static_cast<std::uint8_t>(bits >> 16),
                            static_cast<std::uint8_t>(bits >> 24)};
      EVP_DigestUpdate(ctx, le, 4);
    }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
  return hex;
}

}  // namespace eogstage
