#include "resmatch/costproc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "resmatch/errors.hpp"

namespace resmatch {
namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double max_channel_diff(const Image& img, int y0, int x0, int y1, int x1) {
  double m = 0.0;
  for (int c = 0; c < img.channels; ++c) m = std::max(m, std::abs(img.at(c, y0, x0) - img.at(c, y1, x1)));
  return m;
}

void require_extent(const CostVolume& v, const CrossSupport& s, const char* which) {
  if (s.height != v.height || s.width != v.width) {
    throw ConfigError(std::string("cbca: ") + which + " cross support does not match volume extent");
  }
}

CostVolume cbca_once(const CostVolume& in, const CrossSupport& left, const CrossSupport& right) {
  CostVolume out = in;
  const int h = in.height, w = in.width;
  std::vector<double> row_sum(static_cast<std::size_t>(h) * w);
  std::vector<double> row_cnt(static_cast<std::size_t>(h) * w);
  std::vector<double> prefix(static_cast<std::size_t>(w) + 1);
  std::vector<double> prefix_cnt(static_cast<std::size_t>(w) + 1);

  for (int d = 0; d < in.dmax; ++d) {
    // Horizontal segment sums with combined arms.
    for (int y = 0; y < h; ++y) {
      prefix[0] = prefix_cnt[0] = 0.0;
      for (int x = 0; x < w; ++x) {
        const bool ok = in.is_valid(y, x, d);
        prefix[x + 1] = prefix[x] + (ok ? in.at(y, x, d) : 0.0);
        prefix_cnt[x + 1] = prefix_cnt[x] + (ok ? 1.0 : 0.0);
      }
      for (int x = 0; x < w; ++x) {
        const auto& la = left.at(y, x);
        int l = la[kArmLeft], r = la[kArmRight];
        if (x - d >= 0) {
          const auto& ra = right.at(y, x - d);
          l = std::min(l, ra[kArmLeft]);
          r = std::min(r, ra[kArmRight]);
        }
        const int x0 = std::max(0, x - l), x1 = std::min(w - 1, x + r);
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        row_sum[i] = prefix[x1 + 1] - prefix[x0];
        row_cnt[i] = prefix_cnt[x1 + 1] - prefix_cnt[x0];
      }
    }
    // Vertical accumulation of the horizontal segments.
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!in.is_valid(y, x, d)) continue;
        const auto& la = left.at(y, x);
        int u = la[kArmUp], dn = la[kArmDown];
        if (x - d >= 0) {
          const auto& ra = right.at(y, x - d);
          u = std::min(u, ra[kArmUp]);
          dn = std::min(dn, ra[kArmDown]);
        }
        double s = 0.0, n = 0.0;
        for (int yy = std::max(0, y - u); yy <= std::min(h - 1, y + dn); ++yy) {
          const std::size_t i = static_cast<std::size_t>(yy) * w + x;
          s += row_sum[i];
          n += row_cnt[i];
        }
        if (n > 0.0) out.at(y, x, d) = s / n;
      }
    }
  }
  return out;
}

}  // namespace

CrossSupport compute_cross_support(const Image& img, const CbcaParams& params) {
  if (params.max_arm < 1) throw ConfigError("cbca: max_arm must be at least 1");
  CrossSupport cross(img.height, img.width);
  constexpr int kDy[4] = {0, 0, -1, 1};
  constexpr int kDx[4] = {-1, 1, 0, 0};
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      auto& arms = cross.at(y, x);
      for (int a = 0; a < 4; ++a) {
        int len = 0;
        for (int k = 1; k < params.max_arm; ++k) {
          const int yy = y + k * kDy[a], xx = x + k * kDx[a];
          if (yy < 0 || yy >= img.height || xx < 0 || xx >= img.width) break;
          if (max_channel_diff(img, y, x, yy, xx) >= params.tau) break;
          len = k;
        }
        arms[static_cast<std::size_t>(a)] = len;
      }
    }
  }
  return cross;
}

CostVolume cbca(const CostVolume& volume, const CrossSupport& left, const CrossSupport& right, int iterations) {
  if (iterations < 0) throw ConfigError("cbca: iterations must be non-negative");
  require_extent(volume, left, "left");
  require_extent(volume, right, "right");
  CostVolume out = volume;
  for (int i = 0; i < iterations; ++i) out = cbca_once(out, left, right);
  return out;
}

CostVolume cbca(const CostVolume& volume, const Image& left, const Image& right, int iterations,
                const CbcaParams& params) {
  if (iterations < 0) throw ConfigError("cbca: iterations must be non-negative");
  if (iterations == 0) return volume;
  return cbca(volume, compute_cross_support(left, params), compute_cross_support(right, params), iterations);
}

CostVolume sgm(const CostVolume& volume, const SgmParams& params) {
  if (params.p1 < 0.0 || params.p2 < params.p1) throw ConfigError("sgm: requires 0 <= p1 <= p2");
  if (params.directions != 4 && params.directions != 8) throw ConfigError("sgm: directions must be 4 or 8");
  const int h = volume.height, w = volume.width, dm = volume.dmax;
  static constexpr int kDirs[8][2] = {{0, 1}, {0, -1}, {1, 0}, {-1, 0}, {1, 1}, {1, -1}, {-1, 1}, {-1, -1}};

  std::vector<double> total(volume.costs.size(), 0.0);
  std::vector<double> path(volume.costs.size());
  for (int r = 0; r < params.directions; ++r) {
    const int dy = kDirs[r][0], dx = kDirs[r][1];
    const int y_begin = dy >= 0 ? 0 : h - 1, y_end = dy >= 0 ? h : -1, y_step = dy >= 0 ? 1 : -1;
    const int x_begin = dx >= 0 ? 0 : w - 1, x_end = dx >= 0 ? w : -1, x_step = dx >= 0 ? 1 : -1;
    for (int y = y_begin; y != y_end; y += y_step) {
      for (int x = x_begin; x != x_end; x += x_step) {
        const std::size_t base = volume.index(y, x, 0);
        const int py = y - dy, px = x - dx;
        if (py < 0 || py >= h || px < 0 || px >= w) {
          for (int d = 0; d < dm; ++d) path[base + d] = volume.costs[base + d];
          continue;
        }
        const std::size_t pbase = volume.index(py, px, 0);
        double prev_min = path[pbase];
        for (int d = 1; d < dm; ++d) prev_min = std::min(prev_min, path[pbase + d]);
        for (int d = 0; d < dm; ++d) {
          double best = path[pbase + d];
          if (d > 0) best = std::min(best, path[pbase + d - 1] + params.p1);
          if (d + 1 < dm) best = std::min(best, path[pbase + d + 1] + params.p1);
          best = std::min(best, prev_min + params.p2);
          path[base + d] = volume.costs[base + d] + best - prev_min;
        }
      }
    }
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += path[i];
  }
  CostVolume out = volume;
  const double inv = 1.0 / params.directions;
  for (std::size_t i = 0; i < total.size(); ++i) out.costs[i] = total[i] * inv;
  return out;
}

CostVolume sgm(const CostVolume& volume, double p1, double p2) {
  SgmParams params;
  params.p1 = p1;
  params.p2 = p2;
  return sgm(volume, params);
}

CostVolume normalize_tanh(const CostVolume& volume) {
  CostVolume out = volume;
  for (double& c : out.costs) c = std::tanh(c);
  return out;
}

CostVolume postprocess(const CostVolume& volume, const Image& left, const Image& right, Mode mode,
                       const PostprocessParams& params, PostprocessStats* stats) {
  PostprocessStats local;
  CostVolume out = volume;
  if (mode == Mode::accurate) {
    auto t0 = std::chrono::steady_clock::now();
    const CrossSupport lc = compute_cross_support(left, params.cbca);
    const CrossSupport rc = compute_cross_support(right, params.cbca);
    out = cbca(out, lc, rc, params.cbca_before_sgm);
    local.cbca_seconds += seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    out = sgm(out, params.sgm);
    local.sgm_seconds += seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    out = cbca(out, lc, rc, params.cbca_after_sgm);
    local.cbca_seconds += seconds_since(t0);
    local.cbca_iterations = params.cbca_before_sgm + params.cbca_after_sgm;
  } else {
    const auto t0 = std::chrono::steady_clock::now();
    out = sgm(out, params.sgm);
    local.sgm_seconds += seconds_since(t0);
  }
  local.sgm_passes = 1;
  out = normalize_tanh(out);
  if (stats) *stats = local;
  return out;
}

}  // namespace resmatch
