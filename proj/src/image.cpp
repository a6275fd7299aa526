#include "afgan/image.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>

#include <jpeglib.h>
#include <png.h>

#include "afgan/error.hpp"

namespace afgan {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open image " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

PixelBuffer decode_png(const std::vector<std::uint8_t>& data, const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, data.data(), data.size())) {
    throw IngestError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  PixelBuffer out(static_cast<int>(image.height), static_cast<int>(image.width), 3);
  if (!png_image_finish_read(&image, nullptr, out.bytes.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IngestError("cannot decode PNG " + path.string() + ": " + msg);
  }
  return out;
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

PixelBuffer decode_jpeg(const std::vector<std::uint8_t>& data, const std::filesystem::path& path) {
  jpeg_decompress_struct cinfo{};
  JpegError err{};
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  // Locals written after setjmp must be volatile to survive the longjmp.
  PixelBuffer* volatile out = nullptr;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    delete out;
    throw IngestError("cannot decode JPEG " + path.string() + ": " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, data.data(), static_cast<unsigned long>(data.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out = new PixelBuffer(static_cast<int>(cinfo.output_height), static_cast<int>(cinfo.output_width), 3);
  const std::size_t stride = static_cast<std::size_t>(cinfo.output_width) * 3;
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out->bytes.data() + stride * cinfo.output_scanline;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  std::unique_ptr<PixelBuffer> owned(out);
  return std::move(*owned);
}

}  // namespace

PixelBuffer load_image(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw IngestError("image not found: " + path.string());
  const auto data = read_file(path);
  static constexpr std::uint8_t png_sig[] = {0x89, 'P', 'N', 'G'};
  if (data.size() >= 4 && std::equal(std::begin(png_sig), std::end(png_sig), data.begin())) {
    return decode_png(data, path);
  }
  if (data.size() >= 3 && data[0] == 0xFF && data[1] == 0xD8 && data[2] == 0xFF) return decode_jpeg(data, path);
  throw IngestError("unrecognized image format: " + path.string());
}

void save_png(const PixelBuffer& image, const std::filesystem::path& path) {
  if (image.channels != 1 && image.channels != 3) throw IoError("save_png supports 1 or 3 channels");
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.bytes.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + img.message);
  }
}

PixelBuffer resize(const PixelBuffer& image, int size) {
  if (size < 1) throw ContractError("resize target must be >= 1");
  if (image.height == size && image.width == size) return image;
  PixelBuffer out(size, size, image.channels);
  const double sy = static_cast<double>(image.height) / size;
  const double sx = static_cast<double>(image.width) / size;
  for (int y = 0; y < size; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < size; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < image.channels; ++c) {
        const double top = (1.0 - wx) * image.at(y0, x0, c) + wx * image.at(y0, x1, c);
        const double bottom = (1.0 - wx) * image.at(y1, x0, c) + wx * image.at(y1, x1, c);
        const double v = (1.0 - wy) * top + wy * bottom;
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
      }
    }
  }
  return out;
}

void AugmentConfig::validate() const {
  if (target_size < 1 || resize_size < 1) throw ConfigError("augment: target_size and resize_size must be >= 1");
  if (!(crop_scale_lo > 0.0 && crop_scale_lo <= crop_scale_hi && crop_scale_hi <= 1.0)) {
    throw ConfigError("augment: crop scale range must satisfy 0 < lo <= hi <= 1");
  }
  if (!(flip_probability >= 0.0 && flip_probability <= 1.0)) throw ConfigError("augment: flip_probability not in [0, 1]");
}

CropBox sample_crop(int height, int width, const AugmentConfig& cfg, Rng& rng) {
  const double fraction = rng.uniform(cfg.crop_scale_lo, cfg.crop_scale_hi);
  const double side_f = std::sqrt(fraction * height * width);
  const int side = std::clamp(static_cast<int>(std::lround(side_f)), 1, std::min(height, width));
  CropBox box;
  box.side = side;
  box.top = static_cast<int>(rng.below(static_cast<std::uint64_t>(height - side + 1)));
  box.left = static_cast<int>(rng.below(static_cast<std::uint64_t>(width - side + 1)));
  return box;
}

PixelBuffer crop(const PixelBuffer& image, const CropBox& box) {
  if (box.top < 0 || box.left < 0 || box.side < 1 || box.top + box.side > image.height ||
      box.left + box.side > image.width) {
    throw ContractError("crop box outside image");
  }
  PixelBuffer out(box.side, box.side, image.channels);
  const std::size_t row = static_cast<std::size_t>(box.side) * image.channels;
  for (int y = 0; y < box.side; ++y) {
    const auto* src = &image.bytes[(static_cast<std::size_t>(box.top + y) * image.width + box.left) * image.channels];
    std::copy_n(src, row, &out.bytes[static_cast<std::size_t>(y) * row]);
  }
  return out;
}

PixelBuffer random_resized_crop(const PixelBuffer& image, const AugmentConfig& cfg, Rng& rng) {
  return resize(crop(image, sample_crop(image.height, image.width, cfg, rng)), cfg.target_size);
}

PixelBuffer hflip(const PixelBuffer& image) {
  PixelBuffer out(image.height, image.width, image.channels);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < image.channels; ++c) out.at(y, image.width - 1 - x, c) = image.at(y, x, c);
  return out;
}

PixelBuffer random_horizontal_flip(const PixelBuffer& image, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw ContractError("flip probability must be in [0, 1]");
  return rng.bernoulli(p) ? hflip(image) : image;
}

Tensor<float> normalize(const PixelBuffer& image) {
  const int c = image.channels, h = image.height, w = image.width;
  std::vector<float> out(static_cast<std::size_t>(c) * h * w);
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out[(static_cast<std::size_t>(ch) * h + y) * w + x] = static_cast<float>(image.at(y, x, ch) / 127.5 - 1.0);
  return Tensor<float>(Shape{c, h, w}, std::move(out));
}

PixelBuffer denormalize(const Tensor<float>& chw) {
  if (chw.shape().rank() != 3) throw ShapeError("denormalize expects (C, H, W), got " + chw.shape().str());
  const auto c = static_cast<int>(chw.shape()[0]);
  const auto h = static_cast<int>(chw.shape()[1]);
  const auto w = static_cast<int>(chw.shape()[2]);
  PixelBuffer out(h, w, c);
  auto v = chw.data();
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double t = v[(static_cast<std::size_t>(ch) * h + y) * w + x];
        const double s = std::isfinite(t) ? std::floor((t + 1.0) * 127.5 + 0.5) : 0.0;
        out.at(y, x, ch) = static_cast<std::uint8_t>(std::clamp(s, 0.0, 255.0));
      }
  return out;
}

PixelBuffer make_grid(const std::vector<PixelBuffer>& images, int columns, int pad) {
  if (images.empty()) throw ContractError("make_grid needs at least one image");
  const int h = images[0].height, w = images[0].width, c = images[0].channels;
  columns = std::max(1, std::min(columns, static_cast<int>(images.size())));
  const int rows = (static_cast<int>(images.size()) + columns - 1) / columns;
  PixelBuffer grid(rows * h + (rows + 1) * pad, columns * w + (columns + 1) * pad, c);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& im = images[i];
    if (im.height != h || im.width != w || im.channels != c) throw ContractError("make_grid images differ in size");
    const int oy = pad + static_cast<int>(i) / columns * (h + pad);
    const int ox = pad + static_cast<int>(i) % columns * (w + pad);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int ch = 0; ch < c; ++ch) grid.at(oy + y, ox + x, ch) = im.at(y, x, ch);
  }
  return grid;
}

}  // namespace afgan
