#include "resmatch/confidence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "resmatch/errors.hpp"

namespace resmatch {

CurveMinima curve_minima(std::span<const double> c) {
  if (c.empty()) throw InputError("confidence: empty cost curve");
  const int n = static_cast<int>(c.size());
  CurveMinima m;
  m.d1 = static_cast<int>(std::min_element(c.begin(), c.end()) - c.begin());
  m.c1 = c[static_cast<std::size_t>(m.d1)];
  double best_local = std::numeric_limits<double>::infinity();
  double best_any = std::numeric_limits<double>::infinity();
  for (int d = 0; d < n; ++d) {
    if (d == m.d1) continue;
    const double v = c[static_cast<std::size_t>(d)];
    best_any = std::min(best_any, v);
    const bool left_ok = d == 0 || v <= c[static_cast<std::size_t>(d - 1)];
    const bool right_ok = d == n - 1 || v <= c[static_cast<std::size_t>(d + 1)];
    if (left_ok && right_ok && v < best_local) best_local = v;
  }
  if (std::isfinite(best_local)) {
    m.c2 = best_local;
    m.second_is_local = true;
  } else {
    m.c2 = n > 1 ? best_any : m.c1;
  }
  return m;
}

double msm(std::span<const double> curve) { return -curve_minima(curve).c1; }

double prob(std::span<const double> scores) {
  if (scores.empty()) throw InputError("prob: empty score vector");
  const double m = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double s : scores) z += std::exp(s - m);
  return 1.0 / z;
}

double cur(std::span<const double> curve) {
  const CurveMinima m = curve_minima(curve);
  const int n = static_cast<int>(curve.size());
  if (n == 1) return 0.0;
  const int lo = m.d1 > 0 ? m.d1 - 1 : m.d1 + 1;
  const int hi = m.d1 < n - 1 ? m.d1 + 1 : m.d1 - 1;
  return -2.0 * m.c1 + curve[static_cast<std::size_t>(lo)] + curve[static_cast<std::size_t>(hi)];
}

double pkrn(std::span<const double> curve) {
  const CurveMinima m = curve_minima(curve);
  return m.c2 / (m.c1 + kConfidenceEps);
}

double nem(std::span<const double> curve) {
  if (curve.empty()) throw InputError("nem: empty cost curve");
  const double lo = *std::min_element(curve.begin(), curve.end());
  double z = 0.0;
  for (double c : curve) z += std::exp(-(c - lo));
  const double log_z = std::log(z);
  double s = 0.0;
  for (double c : curve) {
    const double logp = -(c - lo) - log_z;
    s += std::exp(logp) * logp;
  }
  return std::clamp(s, -std::log(static_cast<double>(curve.size())), 0.0);
}

double lrd(std::span<const double> left_curve, const CostVolume& right, int y, int x) {
  const CurveMinima m = curve_minima(left_curve);
  const int xr = x - m.d1;
  if (xr < 0 || xr >= right.width || y < 0 || y >= right.height) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (int d = 0; d < right.dmax; ++d) {
    if (right.is_valid(y, xr, d)) best = std::min(best, right.at(y, xr, d));
  }
  if (!std::isfinite(best)) return 0.0;
  return (m.c2 - m.c1) / (std::abs(m.c1 - best) + kConfidenceEps);
}

std::string_view to_string(Measure m) {
  switch (m) {
    case Measure::msm: return "msm";
    case Measure::prob: return "prob";
    case Measure::cur: return "cur";
    case Measure::pkrn: return "pkrn";
    case Measure::nem: return "nem";
    case Measure::lrd: return "lrd";
    case Measure::reflective: return "reflective";
    case Measure::random: return "random";
  }
  return "?";
}

Measure parse_measure(std::string_view text) {
  for (Measure m : all_measures()) {
    if (to_string(m) == text) return m;
  }
  throw ConfigError("unknown confidence measure '" + std::string(text) + "'");
}

const std::vector<Measure>& all_measures() {
  static const std::vector<Measure> kAll = {Measure::msm, Measure::prob,       Measure::cur,   Measure::pkrn,
                                            Measure::nem, Measure::lrd,        Measure::reflective,
                                            Measure::random};
  return kAll;
}

ConfidenceMap compute_measure(Measure m, const MeasureInputs& in) {
  auto need = [&](const void* p, const char* what) {
    if (!p) throw ConfigError(std::string("confidence measure ") + std::string(to_string(m)) + " needs " + what);
  };
  if (m == Measure::reflective) {
    need(in.reflective, "the reflective confidence map");
    return *in.reflective;
  }
  need(in.left, "the left cost volume");
  const CostVolume& vol = *in.left;
  ConfidenceMap out(vol.height, vol.width);
  if (m == Measure::random) {
    std::mt19937_64 rng(in.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& v : out.values) v = u(rng);
    return out;
  }
  if (m == Measure::prob) {
    need(in.gdn_scores, "GDN scores");
    if (in.gdn_scores->size() != vol.costs.size()) throw ConfigError("prob: GDN scores do not match the volume");
  }
  CostVolume shifted_right;
  if (m == Measure::lrd) {
    need(in.right, "the right cost volume");
    if (!in.right->same_shape(vol)) throw ConfigError("lrd: left and right volumes differ in shape");
    shifted_right = *in.right;
    for (double& c : shifted_right.costs) c += 1.0;
  }
  std::vector<double> curve(static_cast<std::size_t>(vol.dmax));
  for (int y = 0; y < vol.height; ++y) {
    for (int x = 0; x < vol.width; ++x) {
      const auto src = vol.curve(y, x);
      for (std::size_t d = 0; d < curve.size(); ++d) curve[d] = src[d] + 1.0;
      double v = 0.0;
      switch (m) {
        case Measure::msm: v = msm(curve); break;
        case Measure::prob:
          v = prob({in.gdn_scores->data() + vol.index(y, x, 0), static_cast<std::size_t>(vol.dmax)});
          break;
        case Measure::cur: v = cur(curve); break;
        case Measure::pkrn: v = pkrn(curve); break;
        case Measure::nem: v = nem(curve); break;
        case Measure::lrd: v = lrd(curve, shifted_right, y, x); break;
        default: break;
      }
      out.at(y, x) = v;
    }
  }
  return out;
}

std::vector<SparsificationPoint> sparsification_curve(const ConfidenceMap& confidence, const DisparityMap& disparity,
                                                      const DisparityMap& gt, double err_threshold) {
  if (confidence.height != gt.height || confidence.width != gt.width || disparity.height != gt.height ||
      disparity.width != gt.width) {
    throw InputError("sparsification: confidence, disparity and ground truth differ in extent");
  }
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt.valid[i]) idx.push_back(i);
  }
  if (idx.empty()) throw InputError("sparsification: no valid ground-truth pixels");
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return confidence.values[a] > confidence.values[b]; });
  const auto n = static_cast<double>(idx.size());
  std::vector<SparsificationPoint> pts;
  double correct = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const std::size_t i = idx[k];
    if (disparity.valid[i] && std::abs(disparity.values[i] - gt.values[i]) <= err_threshold) correct += 1.0;
    const bool group_end = k + 1 == idx.size() || confidence.values[idx[k + 1]] != confidence.values[i];
    if (group_end) {
      const auto taken = static_cast<double>(k + 1);
      pts.push_back({taken / n, correct / taken});
    }
  }
  return pts;
}

double auc_sparsification(const ConfidenceMap& confidence, const DisparityMap& disparity, const DisparityMap& gt,
                          double err_threshold) {
  const auto pts = sparsification_curve(confidence, disparity, gt, err_threshold);
  double area = 0.0, t0 = 0.0, a0 = pts.front().accuracy;
  for (const auto& p : pts) {
    area += 0.5 * (p.density - t0) * (p.accuracy + a0);
    t0 = p.density;
    a0 = p.accuracy;
  }
  return area;
}

}  // namespace resmatch
