#include "resmatch/image.hpp"

#include <algorithm>
#include <cmath>

namespace resmatch {

Image flip_horizontal(const Image& img) {
  Image out(img.channels, img.height, img.width);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
  return out;
}

DisparityMap flip_horizontal(const DisparityMap& map) {
  DisparityMap out(map.height, map.width);
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      out.values[out.index(y, x)] = map.at(y, map.width - 1 - x);
      out.valid[out.index(y, x)] = map.valid[map.index(y, map.width - 1 - x)];
    }
  }
  return out;
}

ConfidenceMap flip_horizontal(const ConfidenceMap& map) {
  ConfidenceMap out(map.height, map.width);
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x) out.at(y, x) = map.at(y, map.width - 1 - x);
  return out;
}

Image normalize_planes(const Image& img) {
  Image out = img;
  const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
  for (int c = 0; c < img.channels; ++c) {
    double* p = out.data.data() + static_cast<std::size_t>(c) * plane;
    double mean = 0.0;
    for (std::size_t i = 0; i < plane; ++i) mean += p[i];
    mean /= static_cast<double>(plane);
    double var = 0.0;
    for (std::size_t i = 0; i < plane; ++i) var += (p[i] - mean) * (p[i] - mean);
    var /= static_cast<double>(plane);
    const double inv = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
    for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - mean) * inv;
  }
  return out;
}

Image pad_replicate(const Image& img, int border) {
  Image out(img.channels, img.height + 2 * border, img.width + 2 * border);
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < out.height; ++y) {
      const int sy = std::clamp(y - border, 0, img.height - 1);
      for (int x = 0; x < out.width; ++x) {
        out.at(c, y, x) = img.at(c, sy, std::clamp(x - border, 0, img.width - 1));
      }
    }
  }
  return out;
}

}  // namespace resmatch
