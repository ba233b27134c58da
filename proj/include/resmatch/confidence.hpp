#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "resmatch/cost_volume.hpp"
#include "resmatch/image.hpp"

namespace resmatch {

/// Minimum and second local minimum of a cost curve.
struct CurveMinima {
  int d1 = 0;       // argmin, smallest index on ties
  double c1 = 0.0;  // c(d1)
  double c2 = 0.0;  // second smallest local minimum, or the global second-smallest value
  bool second_is_local = false;
};

/// A local minimum is an index whose cost is <= each existing neighbour.
/// Throws InputError on an empty curve.
CurveMinima curve_minima(std::span<const double> curve);

inline constexpr double kConfidenceEps = 1e-9;

double msm(std::span<const double> curve);
/// Max of softmax(scores).
double prob(std::span<const double> scores);
/// -2 c(d1) + c(d1-1) + c(d1+1); at either end the one neighbour is used twice.
double cur(std::span<const double> curve);
/// c2 / (c1 + eps). Meaningful for non-negative curves.
double pkrn(std::span<const double> curve);
/// sum_d p(d) log p(d) with p the softmin of the curve; lies in [-log D, 0].
double nem(std::span<const double> curve);
/// (c2 - c1) / (|c1 - min_k c_R(x - d1, k)| + eps) for a left curve at column x.
/// Returns 0 when x - d1 lies outside the right volume.
double lrd(std::span<const double> left_curve, const CostVolume& right, int y, int x);

enum class Measure { msm, prob, cur, pkrn, nem, lrd, reflective, random };

std::string_view to_string(Measure m);
Measure parse_measure(std::string_view text);
/// The six cost-curve baselines followed by reflective and random.
const std::vector<Measure>& all_measures();

struct MeasureInputs {
  const CostVolume* left = nullptr;         // post-SGM, tanh-normalised left-reference costs
  const CostVolume* right = nullptr;        // same for the right reference (LRD only)
  const std::vector<double>* gdn_scores = nullptr;  // (y, x, d) FC3 scores (PROB only)
  const ConfidenceMap* reflective = nullptr;        // GDN confidence head
  std::uint64_t seed = 1;                           // RANDOM only
};

/// Per-pixel confidence map for one measure, higher meaning more reliable.
/// Curve-based measures see c + 1 so that tanh-range costs are non-negative;
/// only PKRN is affected by the shift.
ConfidenceMap compute_measure(Measure m, const MeasureInputs& in);

struct SparsificationPoint {
  double density = 0.0;
  double accuracy = 0.0;
};

/// Pixels with valid ground truth sorted by descending confidence; equal
/// confidences enter together. A prediction is accurate when valid and
/// |d - gt| <= err_threshold. Throws InputError without valid ground truth.
std::vector<SparsificationPoint> sparsification_curve(const ConfidenceMap& confidence, const DisparityMap& disparity,
                                                      const DisparityMap& gt, double err_threshold);

/// Trapezoidal area under the sparsification curve, starting at density 0 with
/// the accuracy of the first group.
double auc_sparsification(const ConfidenceMap& confidence, const DisparityMap& disparity, const DisparityMap& gt,
                          double err_threshold);

}  // namespace resmatch
