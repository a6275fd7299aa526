#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "afgan/rng.hpp"
#include "afgan/tensor.hpp"

namespace afgan {

// 8-bit image, row-major with interleaved channels.
struct PixelBuffer {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<std::uint8_t> bytes;

  PixelBuffer() = default;
  PixelBuffer(int h, int w, int c, std::uint8_t fill = 0)
      : height(h), width(w), channels(c), bytes(static_cast<std::size_t>(h) * w * c, fill) {}

  std::uint8_t& at(int y, int x, int c) { return bytes[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  std::uint8_t at(int y, int x, int c) const {
    return bytes[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  bool operator==(const PixelBuffer&) const = default;
};

// Decodes PNG or JPEG (detected by signature) into 3 channels; grayscale is
// replicated and alpha is dropped. Throws IngestError carrying the path.
PixelBuffer load_image(const std::filesystem::path& path);

// Writes an 8-bit PNG (1 or 3 channels). Throws IoError.
void save_png(const PixelBuffer& image, const std::filesystem::path& path);

// Bilinear resampling to size x size with half-pixel centers, rounded to nearest.
PixelBuffer resize(const PixelBuffer& image, int size);

struct AugmentConfig {
  int target_size = 224;
  int resize_size = 256;
  double crop_scale_lo = 0.8;
  double crop_scale_hi = 1.0;
  double flip_probability = 0.5;

  // Keeps the 256 -> 224 downscale/crop ratio for other target sizes.
  static int default_resize_for(int target) { return static_cast<int>((target * 256 + 112) / 224); }

  void validate() const;
};

struct CropBox {
  int top = 0;
  int left = 0;
  int side = 0;
};

// Square crop whose area fraction is uniform in [lo, hi] of the image area,
// clamped to fit, at a uniformly drawn valid position.
CropBox sample_crop(int height, int width, const AugmentConfig& cfg, Rng& rng);

PixelBuffer crop(const PixelBuffer& image, const CropBox& box);

PixelBuffer random_resized_crop(const PixelBuffer& image, const AugmentConfig& cfg, Rng& rng);

PixelBuffer hflip(const PixelBuffer& image);

// Always consumes one draw so the stream position does not depend on p.
PixelBuffer random_horizontal_flip(const PixelBuffer& image, double p, Rng& rng);

// sample / 127.5 - 1, planar (C, H, W).
Tensor<float> normalize(const PixelBuffer& image);

// (t + 1) * 127.5 rounded to nearest and clamped to [0, 255]; input (C, H, W).
PixelBuffer denormalize(const Tensor<float>& chw);

// Tiles equally sized images row-major into a grid with `pad` pixel gutters.
PixelBuffer make_grid(const std::vector<PixelBuffer>& images, int columns, int pad = 2);

}  // namespace afgan
