#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "uarpo/errors.hpp"
#include "uarpo/policy.hpp"

namespace uarpo {

// Checkpoint layout (little-endian):
//   magic "UARP", u32 version, u32 vocab size, u32 tensor count,
//   per tensor: u32 name length, name bytes, u32 rank, u32 dims..., f32 data.
// The first tensor, "__config__", carries the model geometry as 7 floats:
// image_height, image_width, patch, d_model, n_blocks, ffn_mult, max_len.
inline constexpr uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::ofstream& f, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t get_u32(std::ifstream& f, const std::string& path) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  if (f.gcount() != 4) throw IoError("truncated checkpoint: " + path);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline void put_tensor(std::ofstream& f, const std::string& name, const Shape& shape,
                       const float* data, size_t n) {
  put_u32(f, static_cast<uint32_t>(name.size()));
  f.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(f, static_cast<uint32_t>(shape.size()));
  for (int d : shape) put_u32(f, static_cast<uint32_t>(d));
  f.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
}

}  // namespace detail

inline void save_checkpoint(const PolicyParams& p, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f.write("UARP", 4);
  detail::put_u32(f, kCheckpointVersion);
  detail::put_u32(f, static_cast<uint32_t>(kVocabSize));
  const auto named = p.named_tensors();
  detail::put_u32(f, static_cast<uint32_t>(named.size() + 1));
  const float cfgv[7] = {
      static_cast<float>(p.cfg.image_height), static_cast<float>(p.cfg.image_width),
      static_cast<float>(p.cfg.patch),        static_cast<float>(p.cfg.d_model),
      static_cast<float>(p.cfg.n_blocks),     static_cast<float>(p.cfg.ffn_mult),
      static_cast<float>(p.cfg.max_len)};
  detail::put_tensor(f, "__config__", {7}, cfgv, 7);
  for (const auto& [name, t] : named)
    detail::put_tensor(f, name, t->shape, t->data.data(), t->data.size());
  if (!f) throw IoError("write failed: " + path.string());
}

inline PolicyParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path.string());
  const std::string ps = path.string();
  char magic[4];
  f.read(magic, 4);
  if (f.gcount() != 4) throw IoError("truncated checkpoint: " + ps);
  if (std::memcmp(magic, "UARP", 4) != 0)
    throw IoError("not a policy checkpoint (magic mismatch): " + ps);
  const uint32_t version = detail::get_u32(f, ps);
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + ps);
  const uint32_t vocab = detail::get_u32(f, ps);
  const uint32_t count = detail::get_u32(f, ps);

  struct Raw {
    Shape shape;
    std::vector<float> data;
  };
  std::vector<std::pair<std::string, Raw>> raw;
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = detail::get_u32(f, ps);
    if (name_len > 256) throw IoError("corrupt checkpoint (name length): " + ps);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    if (f.gcount() != static_cast<std::streamsize>(name_len))
      throw IoError("truncated checkpoint: " + ps);
    const uint32_t rank = detail::get_u32(f, ps);
    if (rank > 4) throw IoError("corrupt checkpoint (rank): " + ps);
    Raw r;
    int64_t n = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      const uint32_t dim = detail::get_u32(f, ps);
      if (dim == 0 || dim > (1u << 24)) throw IoError("corrupt checkpoint (dimension): " + ps);
      r.shape.push_back(static_cast<int>(dim));
      n *= dim;
    }
    r.data.resize(static_cast<size_t>(n));
    f.read(reinterpret_cast<char*>(r.data.data()),
           static_cast<std::streamsize>(r.data.size() * sizeof(float)));
    if (f.gcount() != static_cast<std::streamsize>(r.data.size() * sizeof(float)))
      throw IoError("truncated checkpoint: " + ps);
    raw.emplace_back(std::move(name), std::move(r));
  }

  if (raw.empty() || raw[0].first != "__config__" || raw[0].second.data.size() != 7)
    throw IoError("corrupt checkpoint (missing __config__): " + ps);
  const auto& cv = raw[0].second.data;
  PolicyConfig cfg;
  cfg.image_height = static_cast<int>(cv[0]);
  cfg.image_width = static_cast<int>(cv[1]);
  cfg.patch = static_cast<int>(cv[2]);
  cfg.d_model = static_cast<int>(cv[3]);
  cfg.n_blocks = static_cast<int>(cv[4]);
  cfg.ffn_mult = static_cast<int>(cv[5]);
  cfg.max_len = static_cast<int>(cv[6]);
  cfg.validate();

  PolicyParams p = PolicyParams::init(cfg, 0);
  auto named = p.named_tensors();
  if (raw.size() != named.size() + 1)
    throw IoError("checkpoint tensor count " + std::to_string(raw.size() - 1) +
                  " does not match model (" + std::to_string(named.size()) + "): " + ps);
  for (size_t i = 0; i < named.size(); ++i) {
    auto& [want_name, tensor] = named[i];
    auto& [got_name, r] = raw[i + 1];
    if (got_name != want_name)
      throw IoError("checkpoint tensor '" + got_name + "' where '" + want_name + "' expected: " + ps);
    if (r.shape != tensor->shape)
      throw IoError("checkpoint tensor " + want_name + ": shape " + shape_str(r.shape) +
                    " does not match expected " + shape_str(tensor->shape) + ": " + ps);
    tensor->data = std::move(r.data);
  }
  if (vocab != static_cast<uint32_t>(kVocabSize))
    throw IoError("checkpoint tensor tok_emb: vocab size " + std::to_string(vocab) +
                  " does not match build (" + std::to_string(kVocabSize) + "): " + ps);
  return p;
}

}  // namespace uarpo
