#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "resmatch/cost_volume.hpp"
#include "resmatch/image.hpp"

namespace resmatch {

enum class PixelLabel : std::uint8_t { correct = 0, mismatch = 1, occlusion = 2 };

struct PixelLabelMap {
  int height = 0;
  int width = 0;
  std::vector<PixelLabel> labels;

  PixelLabelMap() = default;
  PixelLabelMap(int h, int w, PixelLabel fill = PixelLabel::correct)
      : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill) {}
  PixelLabel& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
  PixelLabel at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  /// Pixel counts indexed by PixelLabel.
  std::array<std::size_t, 3> counts() const;
};

struct RefinementConfig {
  double tau1 = 1.0;  // left-right agreement
  double tau2 = 0.7;  // confidence needed to override a disagreement
  double tau3 = 0.1;  // confidence margin over the right view
  double tau4 = 1.0;  // agreement for the mismatch search
  int median_window = 5;
  double sigma_s = 5.0;
  double sigma_r = 7.5;
  int bilateral_radius = 5;
};

/// Throws ConfigError when a threshold is out of range.
void validate(const RefinementConfig& cfg);

/// Rules in order, with d = D_L(p) and p - d the rounded right position:
///   correct   |d - D_R(p - d)| <= tau1, or C_L(p) >= tau2 and C_L(p) - C_R(p - d) >= tau3
///   mismatch  some integer d' != round(d) in [0, dmax) has |d' - D_R(p - d')| <= tau4
///   occlusion otherwise.
/// The left-right clauses fail when p - d falls outside the image.
PixelLabelMap label_pixels(const DisparityMap& d_left, const DisparityMap& d_right, const ConfidenceMap& c_left,
                           const ConfidenceMap& c_right, int dmax, const RefinementConfig& cfg = {});

/// Correct pixels keep their value. Mismatches take the lower median of the
/// nearest correct pixel along each of 16 directions; occlusions take the first
/// correct pixel to the left, else the smallest of those 16 directional
/// neighbours. Throws InputError when no pixel is correct.
DisparityMap interpolate(const DisparityMap& d, const PixelLabelMap& labels);

/// Parabola through C(d-1), C(d), C(d+1) at d = round(D). Applied only when both
/// neighbours exist, the curvature is positive and C(d) is no larger than either
/// neighbour.
DisparityMap subpixel(const DisparityMap& d, const CostVolume& volume);

/// Window clipped to the image; even counts at borders take the lower median.
DisparityMap median_filter(const DisparityMap& d, int window);
DisparityMap bilateral_filter(const DisparityMap& d, double sigma_s, double sigma_r, int radius);
/// Median then bilateral.
DisparityMap smooth(const DisparityMap& d, const RefinementConfig& cfg = {});

struct RefineStats {
  std::array<std::size_t, 3> label_counts{};
  double interpolation_seconds = 0.0;
  double subpixel_seconds = 0.0;
  double smoothing_seconds = 0.0;
};

struct RefineResult {
  DisparityMap disparity;
  PixelLabelMap labels;
  RefineStats stats;
};

/// Labeling, interpolation, subpixel enhancement and smoothing of a left disparity map.
RefineResult refine(const DisparityMap& d_left, const DisparityMap& d_right, const ConfidenceMap& c_left,
                    const ConfidenceMap& c_right, const CostVolume& left_volume, const RefinementConfig& cfg = {});

}  // namespace resmatch
