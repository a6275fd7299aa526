#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "afgan/image.hpp"
#include "afgan/rng.hpp"
#include "afgan/tensor.hpp"

namespace afgan {

enum class Label { positive, negative };

struct ImageRecord {
  std::filesystem::path path;
  std::optional<Label> label;
};

std::optional<Label> parse_label(const std::string& text);

// Every .png/.jpg/.jpeg below `root`, ordered by relative path. With a manifest
// of `relative_path,label` lines, labels are attached to the matching records.
std::vector<ImageRecord> scan_image_dir(const std::filesystem::path& root,
                                        const std::optional<std::filesystem::path>& manifest = std::nullopt);

using WarningSink = std::function<void(const std::string&)>;

// Decoded images downscaled to cfg.resize_size, ready for per-epoch augmentation.
// Undecodable records are reported to `warn` and skipped.
class ImageDataset {
 public:
  ImageDataset(const std::vector<ImageRecord>& records, const AugmentConfig& cfg, const WarningSink& warn = {});
  // Already decoded images; each is resized to cfg.resize_size.
  ImageDataset(const std::vector<PixelBuffer>& images, const AugmentConfig& cfg);

  std::size_t size() const { return images_.size(); }
  const PixelBuffer& image(std::size_t i) const { return images_[i]; }
  const AugmentConfig& config() const { return cfg_; }
  std::size_t skipped() const { return skipped_; }

  // Crop, flip and normalize one image into (3, S, S).
  Tensor<float> augment(std::size_t i, Rng& rng) const;

 private:
  AugmentConfig cfg_;
  std::vector<PixelBuffer> images_;
  std::size_t skipped_ = 0;
};

// One epoch over a dataset: the order is shuffled up front, and each call to
// next() augments the following batch_size images into (B, 3, S, S). The last
// batch may be short. All randomness is drawn from the Rng passed in.
class BatchStream {
 public:
  BatchStream(const ImageDataset& data, std::size_t batch_size, Rng& rng);

  std::optional<Tensor<float>> next();
  std::size_t batch_count() const { return (order_.size() + batch_size_ - 1) / batch_size_; }

 private:
  const ImageDataset& data_;
  std::size_t batch_size_;
  Rng& rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

// In-place Fisher-Yates shuffle driven by `rng`.
void shuffle(std::vector<std::size_t>& items, Rng& rng);

}  // namespace afgan
