#include "resmatch/refine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

#include "resmatch/errors.hpp"

namespace resmatch {
namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool same_extent(int h, int w, int h2, int w2) { return h == h2 && w == w2; }

double lower_median(std::vector<double>& v) {
  const std::size_t k = (v.size() - 1) / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

// Integer steps along the 16 directions k * 22.5 degrees.
struct Direction {
  double dx, dy;
};

const std::array<Direction, 16>& directions() {
  static const std::array<Direction, 16> dirs = [] {
    std::array<Direction, 16> out{};
    for (int k = 0; k < 16; ++k) {
      const double a = k * std::numbers::pi / 8.0;
      out[static_cast<std::size_t>(k)] = {std::cos(a), std::sin(a)};
    }
    return out;
  }();
  return dirs;
}

bool scan_row(const DisparityMap& d, const PixelLabelMap& labels, int y, int x, int step, double& value) {
  for (int xx = x + step; xx >= 0 && xx < d.width; xx += step) {
    if (labels.at(y, xx) == PixelLabel::correct) {
      value = d.at(y, xx);
      return true;
    }
  }
  return false;
}

// Nearest correct pixel along each of the 16 directions, where one exists.
std::vector<double> directional_neighbors(const DisparityMap& d, const PixelLabelMap& labels, int y, int x) {
  const int reach = static_cast<int>(std::ceil(std::hypot(d.width, d.height)));
  std::vector<double> found;
  for (const auto& dir : directions()) {
    for (int t = 1; t <= reach; ++t) {
      const int xx = x + static_cast<int>(std::lround(t * dir.dx));
      const int yy = y + static_cast<int>(std::lround(t * dir.dy));
      if (xx < 0 || xx >= d.width || yy < 0 || yy >= d.height) break;
      if (labels.at(yy, xx) == PixelLabel::correct) {
        found.push_back(d.at(yy, xx));
        break;
      }
    }
  }
  return found;
}

bool directional_median(const DisparityMap& d, const PixelLabelMap& labels, int y, int x, double& value) {
  std::vector<double> found = directional_neighbors(d, labels, y, x);
  if (found.empty()) return false;
  value = lower_median(found);
  return true;
}

// Occluded pixels belong to the farther surface, so without a correct pixel to
// the left the smallest directional neighbour stands in for it.
bool directional_background(const DisparityMap& d, const PixelLabelMap& labels, int y, int x, double& value) {
  const std::vector<double> found = directional_neighbors(d, labels, y, x);
  if (found.empty()) return false;
  value = *std::min_element(found.begin(), found.end());
  return true;
}

}  // namespace

std::array<std::size_t, 3> PixelLabelMap::counts() const {
  std::array<std::size_t, 3> c{};
  for (PixelLabel l : labels) ++c[static_cast<std::size_t>(l)];
  return c;
}

void validate(const RefinementConfig& c) {
  if (c.tau1 < 0.0 || c.tau4 < 0.0) throw ConfigError("refine: tau1 and tau4 must be non-negative");
  if (c.tau2 < 0.0 || c.tau2 > 1.0) throw ConfigError("refine: tau2 must lie in [0,1]");
  if (c.median_window < 1 || c.median_window % 2 == 0) throw ConfigError("refine: median window must be odd");
  if (c.sigma_s <= 0.0 || c.sigma_r <= 0.0 || c.bilateral_radius < 0) {
    throw ConfigError("refine: bilateral parameters must be positive");
  }
}

PixelLabelMap label_pixels(const DisparityMap& dl, const DisparityMap& dr, const ConfidenceMap& cl,
                           const ConfidenceMap& cr, int dmax, const RefinementConfig& cfg) {
  validate(cfg);
  const int h = dl.height, w = dl.width;
  if (!same_extent(h, w, dr.height, dr.width) || !same_extent(h, w, cl.height, cl.width) ||
      !same_extent(h, w, cr.height, cr.width)) {
    throw InputError("label_pixels: disparity and confidence maps differ in extent");
  }
  if (dmax < 1) throw ConfigError("label_pixels: dmax must be positive");
  PixelLabelMap labels(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double d = dl.at(y, x);
      const long di = std::lround(d);
      const long xr = x - di;
      bool correct = false;
      if (xr >= 0 && xr < w) {
        const int xi = static_cast<int>(xr);
        correct = std::abs(d - dr.at(y, xi)) <= cfg.tau1 ||
                  (cl.at(y, x) >= cfg.tau2 && cl.at(y, x) - cr.at(y, xi) >= cfg.tau3);
      }
      if (correct) {
        labels.at(y, x) = PixelLabel::correct;
        continue;
      }
      bool mismatch = false;
      for (int dh = 0; dh < dmax && !mismatch; ++dh) {
        if (dh == di || x - dh < 0) continue;
        mismatch = std::abs(dh - dr.at(y, x - dh)) <= cfg.tau4;
      }
      labels.at(y, x) = mismatch ? PixelLabel::mismatch : PixelLabel::occlusion;
    }
  }
  return labels;
}

DisparityMap interpolate(const DisparityMap& d, const PixelLabelMap& labels) {
  if (!same_extent(d.height, d.width, labels.height, labels.width)) {
    throw InputError("interpolate: label map does not match the disparity map");
  }
  if (labels.counts()[0] == 0) throw InputError("interpolate: no pixel is labeled correct");
  DisparityMap out = d;
  for (int y = 0; y < d.height; ++y) {
    for (int x = 0; x < d.width; ++x) {
      const PixelLabel l = labels.at(y, x);
      if (l == PixelLabel::correct) continue;
      double v = 0.0;
      bool ok = false;
      if (l == PixelLabel::mismatch) {
        ok = directional_median(d, labels, y, x, v);
        if (!ok) ok = scan_row(d, labels, y, x, -1, v) || scan_row(d, labels, y, x, +1, v);
      } else {
        ok = scan_row(d, labels, y, x, -1, v) || directional_background(d, labels, y, x, v);
      }
      if (ok) {
        out.at(y, x) = v;
        out.valid[out.index(y, x)] = 1;
      }
    }
  }
  return out;
}

DisparityMap subpixel(const DisparityMap& d, const CostVolume& volume) {
  if (!same_extent(d.height, d.width, volume.height, volume.width)) {
    throw InputError("subpixel: volume does not match the disparity map");
  }
  DisparityMap out = d;
  for (int y = 0; y < d.height; ++y) {
    for (int x = 0; x < d.width; ++x) {
      const long di = std::lround(d.at(y, x));
      if (di < 1 || di >= volume.dmax - 1) continue;
      const int k = static_cast<int>(di);
      const double cm = volume.at(y, x, k - 1), c0 = volume.at(y, x, k), cp = volume.at(y, x, k + 1);
      const double denom = 2.0 * (cp - 2.0 * c0 + cm);
      if (denom <= 0.0 || c0 > cm || c0 > cp) continue;
      out.at(y, x) = static_cast<double>(k) - (cp - cm) / denom;
    }
  }
  return out;
}

DisparityMap median_filter(const DisparityMap& d, int window) {
  if (window < 1 || window % 2 == 0) throw ConfigError("median_filter: window must be odd and positive");
  const int r = window / 2;
  DisparityMap out = d;
  std::vector<double> buf;
  for (int y = 0; y < d.height; ++y) {
    for (int x = 0; x < d.width; ++x) {
      buf.clear();
      for (int yy = std::max(0, y - r); yy <= std::min(d.height - 1, y + r); ++yy) {
        for (int xx = std::max(0, x - r); xx <= std::min(d.width - 1, x + r); ++xx) buf.push_back(d.at(yy, xx));
      }
      out.at(y, x) = lower_median(buf);
    }
  }
  return out;
}

DisparityMap bilateral_filter(const DisparityMap& d, double sigma_s, double sigma_r, int radius) {
  if (sigma_s <= 0.0 || sigma_r <= 0.0 || radius < 0) throw ConfigError("bilateral_filter: bad parameters");
  DisparityMap out = d;
  const double is = 1.0 / (2.0 * sigma_s * sigma_s), ir = 1.0 / (2.0 * sigma_r * sigma_r);
  for (int y = 0; y < d.height; ++y) {
    for (int x = 0; x < d.width; ++x) {
      const double c = d.at(y, x);
      double num = 0.0, den = 0.0;
      for (int yy = std::max(0, y - radius); yy <= std::min(d.height - 1, y + radius); ++yy) {
        for (int xx = std::max(0, x - radius); xx <= std::min(d.width - 1, x + radius); ++xx) {
          const double v = d.at(yy, xx);
          const double dy = yy - y, dx = xx - x;
          const double wgt = std::exp(-(dx * dx + dy * dy) * is - (v - c) * (v - c) * ir);
          num += wgt * v;
          den += wgt;
        }
      }
      out.at(y, x) = num / den;
    }
  }
  return out;
}

DisparityMap smooth(const DisparityMap& d, const RefinementConfig& cfg) {
  validate(cfg);
  return bilateral_filter(median_filter(d, cfg.median_window), cfg.sigma_s, cfg.sigma_r, cfg.bilateral_radius);
}

RefineResult refine(const DisparityMap& dl, const DisparityMap& dr, const ConfidenceMap& cl, const ConfidenceMap& cr,
                    const CostVolume& left_volume, const RefinementConfig& cfg) {
  RefineResult res;
  auto t0 = std::chrono::steady_clock::now();
  res.labels = label_pixels(dl, dr, cl, cr, left_volume.dmax, cfg);
  res.stats.label_counts = res.labels.counts();
  DisparityMap d = interpolate(dl, res.labels);
  res.stats.interpolation_seconds = seconds_since(t0);
  t0 = std::chrono::steady_clock::now();
  d = subpixel(d, left_volume);
  res.stats.subpixel_seconds = seconds_since(t0);
  t0 = std::chrono::steady_clock::now();
  res.disparity = smooth(d, cfg);
  res.stats.smoothing_seconds = seconds_since(t0);
  return res;
}

}  // namespace resmatch
