#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "afgan/tensor.hpp"

namespace afgan {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

struct Checkpoint {
  std::string config_text;
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  std::uint64_t adam_t_generator = 0;
  std::uint64_t adam_t_discriminator = 0;
  std::vector<NamedTensor> tensors;
  std::string rng_state;

  // Throws FormatError when `name` is absent.
  const Tensor<float>& tensor(const std::string& name) const;
  bool has(const std::string& name) const;
};

// Layout, all integers little-endian:
//   "AFGE" u32 version  str config
//   u64 epoch  u64 step  u64 adam_t_generator  u64 adam_t_discriminator
//   u32 count, then per tensor: str name, u32 rank, u64 dims[rank], f32 data[numel]
//   str rng_state
// where str is a u32 byte length followed by the bytes.
std::string encode_checkpoint(const Checkpoint& ckpt);
// Throws FormatError on bad magic, unknown version, truncation or trailing bytes.
Checkpoint decode_checkpoint(const std::string& bytes);

// Written to a sibling temporary and renamed into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace afgan
