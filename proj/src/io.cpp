#include "resmatch/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

#include "resmatch/errors.hpp"

namespace resmatch {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct RawPng {
  int width = 0;
  int height = 0;
  int channels = 0;
  int depth = 8;
  std::vector<std::uint16_t> samples;  // row-major, interleaved
};

std::vector<png_byte> encode_rows(const RawPng& img) {
  const std::size_t bytes = img.depth == 16 ? 2 : 1;
  std::vector<png_byte> out(img.samples.size() * bytes);
  for (std::size_t i = 0; i < img.samples.size(); ++i) {
    const std::uint16_t v = img.samples[i];
    if (bytes == 2) {
      out[2 * i] = static_cast<png_byte>(v >> 8);  // PNG stores 16-bit samples big-endian
      out[2 * i + 1] = static_cast<png_byte>(v & 0xff);
    } else {
      out[i] = static_cast<png_byte>(v);
    }
  }
  return out;
}

void write_png(const std::filesystem::path& path, const RawPng& img) {
  std::vector<png_byte> buf = encode_rows(img);
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  const std::size_t stride = buf.size() / std::max<std::size_t>(1, rows.size());
  for (std::size_t y = 0; y < rows.size(); ++y) rows[y] = buf.data() + y * stride;
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw InputError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw InputError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw InputError("failed to write PNG " + path.string());
  }
  png_init_io(png, fp.get());
  const int color = img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), img.depth,
               color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

RawPng read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw InputError("cannot open " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw InputError(path.string() + " is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InputError("libpng initialisation failed");
  }
  RawPng img;
  std::vector<png_byte> buf;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InputError("failed to decode PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_read_update_info(png, info);
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.depth = png_get_bit_depth(png, info);
  const int stored_channels = png_get_channels(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buf.resize(rowbytes * static_cast<std::size_t>(img.height));
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y) rows[static_cast<std::size_t>(y)] = buf.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  depth = img.depth;

  // Drop alpha: 2 -> 1 and 4 -> 3 channels.
  img.channels = stored_channels == 2 ? 1 : stored_channels == 4 ? 3 : stored_channels;
  img.samples.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
  const std::size_t bytes = depth == 16 ? 2 : 1;
  std::size_t k = 0;
  for (int y = 0; y < img.height; ++y) {
    const png_byte* row = rows[static_cast<std::size_t>(y)];
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        const png_byte* s = row + (static_cast<std::size_t>(x) * stored_channels + c) * bytes;
        img.samples[k++] = bytes == 2 ? static_cast<std::uint16_t>((s[0] << 8) | s[1]) : s[0];
      }
    }
  }
  return img;
}

}  // namespace

void write_disparity_png(const std::filesystem::path& path, const DisparityMap& map) {
  RawPng img{map.width, map.height, 1, 16, {}};
  img.samples.resize(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (!map.valid[i]) continue;
    const double v = std::round(map.values[i] * 256.0);
    if (v < 0.0 || v > 65535.0) throw InputError("disparity " + std::to_string(map.values[i]) + " does not fit PNG-16");
    // A valid zero disparity would read back as invalid; store the smallest positive code.
    img.samples[i] = static_cast<std::uint16_t>(std::max(1.0, v));
  }
  write_png(path, img);
}

DisparityMap read_disparity_png(const std::filesystem::path& path) {
  const RawPng img = read_png(path);
  if (img.channels != 1 || img.depth != 16) throw InputError(path.string() + " is not a 16-bit grayscale PNG");
  DisparityMap map(img.height, img.width, 0.0, true);
  for (std::size_t i = 0; i < map.size(); ++i) {
    map.values[i] = img.samples[i] / 256.0;
    map.valid[i] = img.samples[i] != 0;
  }
  return map;
}

void write_image_png(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw InputError("PNG images must have 1 or 3 channels");
  RawPng img{image.width, image.height, image.channels, 8, {}};
  img.samples.resize(image.data.size());
  std::size_t k = 0;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < image.channels; ++c) {
        img.samples[k++] = static_cast<std::uint16_t>(std::lround(std::clamp(image.at(c, y, x), 0.0, 1.0) * 255.0));
      }
    }
  }
  write_png(path, img);
}

Image read_image_png(const std::filesystem::path& path) {
  const RawPng img = read_png(path);
  const double scale = img.depth == 16 ? 65535.0 : 255.0;
  Image out(img.channels, img.height, img.width);
  std::size_t k = 0;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) out.at(c, y, x) = img.samples[k++] / scale;
    }
  }
  return out;
}

void write_confidence_png(const std::filesystem::path& path, const ConfidenceMap& map) {
  RawPng img{map.width, map.height, 1, 16, {}};
  img.samples.resize(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) {
    img.samples[i] = static_cast<std::uint16_t>(std::lround(std::clamp(map.values[i], 0.0, 1.0) * 65535.0));
  }
  write_png(path, img);
}

ConfidenceMap read_confidence_png(const std::filesystem::path& path) {
  const RawPng img = read_png(path);
  if (img.channels != 1) throw InputError(path.string() + " is not a grayscale PNG");
  const double scale = img.depth == 16 ? 65535.0 : 255.0;
  ConfidenceMap map(img.height, img.width);
  for (std::size_t i = 0; i < map.size(); ++i) map.values[i] = img.samples[i] / scale;
  return map;
}

void write_label_png(const std::filesystem::path& path, const PixelLabelMap& labels) {
  RawPng img{labels.width, labels.height, 1, 8, {}};
  img.samples.resize(labels.labels.size());
  for (std::size_t i = 0; i < labels.labels.size(); ++i) {
    switch (labels.labels[i]) {
      case PixelLabel::correct: img.samples[i] = 0; break;
      case PixelLabel::mismatch: img.samples[i] = 128; break;
      case PixelLabel::occlusion: img.samples[i] = 255; break;
    }
  }
  write_png(path, img);
}

DisparityMap read_pfm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  is >> magic >> w >> h >> scale;
  if (magic != "Pf") throw InputError(path.string() + ": only single-channel PFM (Pf) is supported");
  if (!is || w <= 0 || h <= 0 || scale == 0.0) throw InputError(path.string() + ": malformed PFM header");
  is.get();  // single whitespace before the payload
  const bool little = scale < 0.0;
  std::vector<std::uint32_t> raw(static_cast<std::size_t>(w) * h);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
  if (!is) throw InputError(path.string() + ": truncated PFM payload");
  const bool host_little = std::endian::native == std::endian::little;
  DisparityMap map(h, w, 0.0, true);
  for (int row = 0; row < h; ++row) {
    for (int x = 0; x < w; ++x) {
      std::uint32_t bits = raw[static_cast<std::size_t>(row) * w + x];
      if (little != host_little) bits = __builtin_bswap32(bits);
      float v;
      std::memcpy(&v, &bits, 4);
      const int y = h - 1 - row;
      map.at(y, x) = std::isfinite(v) ? v : 0.0;
      map.valid[map.index(y, x)] = std::isfinite(v) ? 1 : 0;
    }
  }
  return map;
}

}  // namespace resmatch
