#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace resmatch {

/// Planar multi-channel image, intensities nominally in [0,1].
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Image() = default;
  Image(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  double& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  double at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  bool same_extent(const Image& o) const { return height == o.height && width == o.width; }
};

/// Subpixel disparity field with a per-pixel validity mask.
struct DisparityMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> valid;

  DisparityMap() = default;
  DisparityMap(int h, int w, double fill = 0.0, bool is_valid = true)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill),
        valid(static_cast<std::size_t>(h) * w, is_valid ? 1 : 0) {}

  std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width + x; }
  double& at(int y, int x) { return values[index(y, x)]; }
  double at(int y, int x) const { return values[index(y, x)]; }
  bool is_valid(int y, int x) const { return valid[index(y, x)] != 0; }
  std::size_t size() const { return values.size(); }
};

/// Per-pixel reliability score; higher means more reliable.
struct ConfidenceMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  ConfidenceMap() = default;
  ConfidenceMap(int h, int w, double fill = 0.0)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

  double& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return values.size(); }
};

Image flip_horizontal(const Image& img);
DisparityMap flip_horizontal(const DisparityMap& map);
ConfidenceMap flip_horizontal(const ConfidenceMap& map);

/// Copy with every plane shifted to zero mean and scaled to unit variance.
Image normalize_planes(const Image& img);

/// Copy padded on all sides by `border` pixels, replicating edge values.
Image pad_replicate(const Image& img, int border);

}  // namespace resmatch
