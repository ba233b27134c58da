#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace resmatch {

/// H x W x D matching costs, lower is better. Entries whose correspondence falls
/// outside the other image carry valid = 0 and are skipped by aggregation and argmin.
struct CostVolume {
  int height = 0;
  int width = 0;
  int dmax = 0;
  std::vector<double> costs;
  std::vector<std::uint8_t> valid;

  CostVolume() = default;
  CostVolume(int h, int w, int d, double fill = 0.0)
      : height(h), width(w), dmax(d), costs(static_cast<std::size_t>(h) * w * d, fill),
        valid(static_cast<std::size_t>(h) * w * d, 1) {}

  std::size_t index(int y, int x, int d) const { return (static_cast<std::size_t>(y) * width + x) * dmax + d; }
  double& at(int y, int x, int d) { return costs[index(y, x, d)]; }
  double at(int y, int x, int d) const { return costs[index(y, x, d)]; }
  bool is_valid(int y, int x, int d) const { return valid[index(y, x, d)] != 0; }
  std::span<const double> curve(int y, int x) const { return {costs.data() + index(y, x, 0), std::size_t(dmax)}; }
  std::span<double> curve(int y, int x) { return {costs.data() + index(y, x, 0), std::size_t(dmax)}; }
  bool same_shape(const CostVolume& o) const { return height == o.height && width == o.width && dmax == o.dmax; }
};

/// Mirror along x. A right-reference volume becomes a left-reference volume of
/// the mirrored, swapped image pair and vice versa.
CostVolume flip_horizontal(const CostVolume& volume);

/// Index of the smallest valid cost; ties go to the smaller disparity.
/// Returns 0 when no entry is valid.
int argmin_disparity(const CostVolume& volume, int y, int x);

/// .cvol dump: 8-byte magic "RMCVOL01", int32 H, W, D, then H*W*D float32 costs
/// and H*W*D uint8 validity flags, all little-endian in (y, x, d) order.
void write_cvol(const std::filesystem::path& path, const CostVolume& volume);
CostVolume read_cvol(const std::filesystem::path& path);

}  // namespace resmatch
