#include "resmatch/metrics.hpp"

#include <cmath>

#include "resmatch/errors.hpp"

namespace resmatch {
namespace {

void require_aligned(const DisparityMap& a, const DisparityMap& b) {
  if (a.height != b.height || a.width != b.width) throw InputError("prediction and ground truth differ in extent");
}

}  // namespace

double error_rate(const DisparityMap& pred, const DisparityMap& gt, double threshold) {
  require_aligned(pred, gt);
  std::size_t total = 0, bad = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!gt.valid[i]) continue;
    ++total;
    if (!pred.valid[i] || std::abs(pred.values[i] - gt.values[i]) > threshold) ++bad;
  }
  if (total == 0) throw InputError("ground truth has no valid pixels");
  return static_cast<double>(bad) / static_cast<double>(total);
}

double mean_abs_error(const DisparityMap& pred, const DisparityMap& gt) {
  require_aligned(pred, gt);
  std::size_t total = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!gt.valid[i] || !pred.valid[i]) continue;
    ++total;
    sum += std::abs(pred.values[i] - gt.values[i]);
  }
  if (total == 0) throw InputError("no pixel is valid in both prediction and ground truth");
  return sum / static_cast<double>(total);
}

DisparityMap winner_takes_all(const CostVolume& volume) {
  DisparityMap out(volume.height, volume.width, 0.0, true);
  for (int y = 0; y < volume.height; ++y) {
    for (int x = 0; x < volume.width; ++x) out.at(y, x) = argmin_disparity(volume, y, x);
  }
  return out;
}

}  // namespace resmatch
