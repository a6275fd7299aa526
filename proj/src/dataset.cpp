#include "afgan/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <numeric>

#include "afgan/error.hpp"

namespace afgan {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::optional<Label> parse_label(const std::string& text) {
  const auto t = lower(trim(text));
  if (t == "positive") return Label::positive;
  if (t == "negative") return Label::negative;
  return std::nullopt;
}

std::vector<ImageRecord> scan_image_dir(const std::filesystem::path& root,
                                        const std::optional<std::filesystem::path>& manifest) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw IngestError("image directory not found: " + root.string());

  std::vector<fs::path> rel;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = lower(entry.path().extension().string());
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") rel.push_back(fs::relative(entry.path(), root));
  }
  std::sort(rel.begin(), rel.end());

  std::map<std::string, Label> labels;
  if (manifest) {
    std::ifstream in(*manifest);
    if (!in) throw ConfigError("cannot read label manifest " + manifest->string());
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      line = trim(line);
      if (line.empty() || line[0] == '#') continue;
      const auto comma = line.rfind(',');
      const auto label = comma == std::string::npos ? std::nullopt : parse_label(line.substr(comma + 1));
      if (!label) {
        throw ConfigError("label manifest " + manifest->string() + ":" + std::to_string(lineno) +
                          ": expected `relative_path,positive|negative`, got `" + line + "`");
      }
      labels[fs::path(trim(line.substr(0, comma))).lexically_normal().generic_string()] = *label;
    }
  }

  std::vector<ImageRecord> out;
  out.reserve(rel.size());
  for (const auto& r : rel) {
    ImageRecord rec{root / r, std::nullopt};
    if (auto it = labels.find(r.lexically_normal().generic_string()); it != labels.end()) rec.label = it->second;
    out.push_back(std::move(rec));
  }
  return out;
}

ImageDataset::ImageDataset(const std::vector<ImageRecord>& records, const AugmentConfig& cfg, const WarningSink& warn)
    : cfg_(cfg) {
  cfg_.validate();
  if (records.empty()) throw ConfigError("dataset has no image records");
  images_.reserve(records.size());
  for (const auto& rec : records) {
    try {
      images_.push_back(resize(load_image(rec.path), cfg_.resize_size));
    } catch (const IngestError& e) {
      ++skipped_;
      if (warn) warn(std::string("skipping image: ") + e.what());
    }
  }
  if (images_.empty()) throw IngestError("no decodable images among " + std::to_string(records.size()) + " records");
}

ImageDataset::ImageDataset(const std::vector<PixelBuffer>& images, const AugmentConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  if (images.empty()) throw ConfigError("dataset has no images");
  images_.reserve(images.size());
  for (const auto& im : images) {
    if (im.channels != 3) throw IngestError("dataset images must have 3 channels");
    images_.push_back(resize(im, cfg_.resize_size));
  }
}

Tensor<float> ImageDataset::augment(std::size_t i, Rng& rng) const {
  PixelBuffer img = random_resized_crop(images_.at(i), cfg_, rng);
  img = random_horizontal_flip(img, cfg_.flip_probability, rng);
  return normalize(img);
}

void shuffle(std::vector<std::size_t>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

BatchStream::BatchStream(const ImageDataset& data, std::size_t batch_size, Rng& rng)
    : data_(data), batch_size_(batch_size), rng_(rng), order_(data.size()) {
  if (batch_size_ < 1) throw ConfigError("batch_size must be >= 1");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  shuffle(order_, rng_);
}

std::optional<Tensor<float>> BatchStream::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t count = std::min(batch_size_, order_.size() - cursor_);
  const std::int64_t s = data_.config().target_size;
  const std::int64_t per = 3 * s * s;
  std::vector<float> out(static_cast<std::size_t>(per) * count);
  for (std::size_t b = 0; b < count; ++b) {
    const Tensor<float> t = data_.augment(order_[cursor_ + b], rng_);
    std::copy(t.data().begin(), t.data().end(), out.begin() + static_cast<std::ptrdiff_t>(b * per));
  }
  cursor_ += count;
  return Tensor<float>(Shape{static_cast<std::int64_t>(count), 3, s, s}, std::move(out));
}

}  // namespace afgan
