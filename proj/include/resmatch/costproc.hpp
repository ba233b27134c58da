#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "resmatch/cost_volume.hpp"
#include "resmatch/image.hpp"
#include "resmatch/mode.hpp"

namespace resmatch {

enum Arm : int { kArmLeft = 0, kArmRight = 1, kArmUp = 2, kArmDown = 3 };

/// Per-pixel cross: four arm lengths, each the number of pixels the arm covers
/// beyond the anchor.
struct CrossSupport {
  int height = 0;
  int width = 0;
  std::vector<std::array<int, 4>> arms;

  CrossSupport() = default;
  CrossSupport(int h, int w, int fill = 0)
      : height(h), width(w), arms(static_cast<std::size_t>(h) * w, {fill, fill, fill, fill}) {}
  std::array<int, 4>& at(int y, int x) { return arms[static_cast<std::size_t>(y) * width + x]; }
  const std::array<int, 4>& at(int y, int x) const { return arms[static_cast<std::size_t>(y) * width + x]; }
};

struct CbcaParams {
  double tau = 0.02;  // max channel difference, intensities in [0,1]
  int max_arm = 5;    // L_max; arms stay strictly shorter
};

struct SgmParams {
  double p1 = 1.0;
  double p2 = 8.0;
  int directions = 4;  // 4: left, right, up, down; 8 adds the diagonals
};

struct PostprocessParams {
  CbcaParams cbca;
  SgmParams sgm;
  int cbca_before_sgm = 2;
  int cbca_after_sgm = 2;
};

struct PostprocessStats {
  int cbca_iterations = 0;
  int sgm_passes = 0;
  double cbca_seconds = 0.0;
  double sgm_seconds = 0.0;
};

/// Arms grow while the neighbour differs from the anchor by less than tau in
/// every channel and the arm is shorter than max_arm.
CrossSupport compute_cross_support(const Image& img, const CbcaParams& params);

/// Cross-based aggregation. The support of (p, d) combines the left cross at p
/// with the right cross at p - d (arm-wise minimum); each cost becomes the mean
/// of valid costs over the horizontal segments hanging off the vertical arm.
CostVolume cbca(const CostVolume& volume, const CrossSupport& left, const CrossSupport& right, int iterations);
CostVolume cbca(const CostVolume& volume, const Image& left, const Image& right, int iterations,
                const CbcaParams& params);

/// Semi-global matching; output is the sum of path costs over directions divided by their count.
CostVolume sgm(const CostVolume& volume, const SgmParams& params);
CostVolume sgm(const CostVolume& volume, double p1, double p2);

CostVolume normalize_tanh(const CostVolume& volume);

/// accurate: CBCA x2, SGM, CBCA x2, tanh. fast: SGM, tanh.
CostVolume postprocess(const CostVolume& volume, const Image& left, const Image& right, Mode mode,
                       const PostprocessParams& params, PostprocessStats* stats = nullptr);

}  // namespace resmatch
