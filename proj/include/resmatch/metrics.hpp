#pragma once

#include "resmatch/cost_volume.hpp"
#include "resmatch/image.hpp"

namespace resmatch {

/// Fraction of valid ground-truth pixels whose prediction is invalid or off by
/// more than `threshold`. Throws InputError without valid ground truth.
double error_rate(const DisparityMap& pred, const DisparityMap& gt, double threshold = 3.0);

/// Mean |d - gt| over pixels valid in both maps. Throws InputError if there are none.
double mean_abs_error(const DisparityMap& pred, const DisparityMap& gt);

/// Winner-takes-all disparity: argmin over valid entries, smallest d on ties.
DisparityMap winner_takes_all(const CostVolume& volume);

}  // namespace resmatch
