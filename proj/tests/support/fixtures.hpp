#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "afgan/image.hpp"
#include "afgan/rng.hpp"

namespace fixtures {

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    afgan::Rng rng(static_cast<std::uint64_t>(reinterpret_cast<std::uintptr_t>(this)) ^ std::hash<std::string>{}(tag));
    path_ = std::filesystem::temp_directory_path() / ("afgan_" + tag + "_" + std::to_string(rng.next_u64() % 1000000007));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline constexpr double kBlobNoise = 12.0;

// Bright Gaussian blob on a dark background with per-pixel noise. Without the
// noise a small discriminator separates real from generated almost perfectly.
inline afgan::PixelBuffer blob_image(int size, afgan::Rng& rng) {
  afgan::PixelBuffer img(size, size, 3);
  const double lo = 0.25 * size, hi = 0.75 * size;
  const double cx = rng.uniform(lo, hi), cy = rng.uniform(lo, hi);
  const double radius = rng.uniform(3.0 * size / 32, 7.0 * size / 32);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      const double v = 15.0 + 235.0 * std::exp(-d2 / (2.0 * radius * radius)) + kBlobNoise * rng.normal();
      const auto b = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = b;
    }
  return img;
}

inline std::vector<afgan::PixelBuffer> blob_dataset(int count, int size, std::uint64_t seed) {
  afgan::Rng rng(seed);
  std::vector<afgan::PixelBuffer> out;
  for (int i = 0; i < count; ++i) out.push_back(blob_image(size, rng));
  return out;
}

inline void write_blob_dir(const std::filesystem::path& dir, int count, int size, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  int i = 0;
  for (const auto& img : blob_dataset(count, size, seed)) {
    char name[32];
    std::snprintf(name, sizeof name, "blob_%04d.png", i++);
    afgan::save_png(img, dir / name);
  }
}

}  // namespace fixtures
