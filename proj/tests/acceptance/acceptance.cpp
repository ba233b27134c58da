// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "../support/gradcheck.hpp"
#include "resmatch/confidence.hpp"
#include "resmatch/config.hpp"
#include "resmatch/costproc.hpp"
#include "resmatch/gdn.hpp"
#include "resmatch/matchnet.hpp"
#include "resmatch/pipeline.hpp"
#include "resmatch/refine.hpp"

using namespace resmatch;
using namespace resmatch::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool ok = true;
  std::ostringstream detail;
  std::string failed;
  void require(bool cond, const std::string& what) {
    if (cond) return;
    failed += (ok ? "" : "; ") + what;
    ok = false;
  }
  std::string text() const { return failed.empty() ? detail.str() : detail.str() + " [failed: " + failed + "]"; }
};

// ---- 1: gradients ----

Verdict gradient_suite() {
  Verdict v;
  const auto t0 = Clock::now();
  double worst = 0.0;
  auto p = [](const nn::TensorPtr& t) { return nn::Param{"p", t}; };
  for (int trial = 0; trial < 20; ++trial) {
    std::mt19937_64 rng(1000 + trial);
    auto x = random_tensor({2, 2, 5, 5}, rng), cw = random_tensor({3, 2, 3, 3}, rng), cb = random_tensor({3}, rng);
    auto cmix = random_tensor({1, 2 * 3 * 5 * 5}, rng);
    worst = std::max(worst, gradient_error([&](nn::Tape* t) { return weighted_total(t, nn::conv2d(t, x, p(cw), p(cb), 1), cmix); },
                                           {x, cw, cb}));
    auto a = random_tensor({3, 4}, rng), fw = random_tensor({5, 4}, rng), fb = random_tensor({5}, rng);
    auto fmix = random_tensor({1, 15}, rng);
    worst = std::max(worst, gradient_error([&](nn::Tape* t) { return weighted_total(t, nn::fully_connected(t, a, p(fw), p(fb)), fmix); },
                                           {a, fw, fb}));
    auto k = kink_free_tensor({4, 6}, rng);
    auto s = random_tensor({3, 7}, rng, -3.0, 3.0);
    auto m24 = random_tensor({1, 24}, rng), m21 = random_tensor({1, 21}, rng);
    worst = std::max(worst, gradient_error([&](nn::Tape* t) { return weighted_total(t, nn::relu(t, k), m24); }, {k}));
    worst = std::max(worst, gradient_error([&](nn::Tape* t) { return weighted_total(t, nn::tanh(t, s), m21); }, {s}));
    worst = std::max(worst, gradient_error([&](nn::Tape* t) { return weighted_total(t, nn::sigmoid(t, s), m21); }, {s}));
    worst = std::max(worst, gradient_error([&](nn::Tape* t) { return weighted_total(t, nn::log_softmax(t, s), m21); }, {s}));
    auto fo = random_tensor({2, 3, 4}, rng), skip = random_tensor({2, 3, 4}, rng);
    auto lambda = random_tensor({1}, rng, 0.2, 1.5);
    worst = std::max(worst, gradient_error([&](nn::Tape* t) { return weighted_total(t, nn::highway_add(t, fo, skip, p(lambda)), m24); },
                                           {fo, skip, lambda}));
  }
  const double elapsed = seconds_since(t0);
  v.require(worst < 1e-4, "relative error " + std::to_string(worst));
  v.require(elapsed < 60.0, "runtime " + std::to_string(elapsed) + " s");
  v.detail << "max relative error " << worst << " over 20 trials, " << elapsed << " s";
  return v;
}

// ---- 2: outer-block unrolling ----

MatchNetConfig small_net(Mode mode, int features) {
  MatchNetConfig c;
  c.mode = mode;
  c.feature_channels = features;
  c.decision_layers = 2;
  c.decision_width = 8;
  return c;
}

Verdict unrolling() {
  Verdict v;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.3, 1.7);
  MatchNet net(small_net(Mode::accurate, 3), 5);
  for (auto& b : net.description.blocks) {
    (*b.lambda0.value)[0] = u(rng);
    (*b.inner1.lambda.value)[0] = u(rng);
    (*b.inner2.lambda.value)[0] = u(rng);
  }
  const OuterBlock& b = net.description.blocks[0];
  const double l0 = (*b.lambda0.value)[0], l1 = (*b.inner1.lambda.value)[0], l2 = (*b.inner2.lambda.value)[0];
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    auto y0 = random_tensor({1, 3, 6, 6}, rng);
    const auto recursive = b.forward(nullptr, y0);
    // y2 = F2(y1) + l2 F1(y0) + (l0 + l1 l2) y0 with y1 = F1(y0) + l1 y0
    const auto f1 = b.inner1.residual(nullptr, y0);
    auto y1 = nn::make_tensor(y0->shape());
    for (std::size_t i = 0; i < y0->size(); ++i) (*y1)[i] = (*f1)[i] + l1 * (*y0)[i];
    const auto f2 = b.inner2.residual(nullptr, y1);
    for (std::size_t i = 0; i < y0->size(); ++i)
      worst = std::max(worst, std::abs((*f2)[i] + l2 * (*f1)[i] + (l0 + l1 * l2) * (*y0)[i] - (*recursive)[i]));
  }
  v.require(worst < 1e-9, "unrolled difference " + std::to_string(worst));

  bool identical = true;
  for (Mode mode : {Mode::fast, Mode::accurate}) {
    MatchNet vanilla(small_net(mode, 3), 6);
    for (auto& blk : vanilla.description.blocks) {
      (*blk.lambda0.value)[0] = 1.0;
      (*blk.inner1.lambda.value)[0] = 1.0;
      (*blk.inner2.lambda.value)[0] = 1.0;
    }
    const auto& d = vanilla.description;
    for (int trial = 0; trial < 10; ++trial) {
      auto x = random_tensor({2, 1, 11, 11}, rng);
      nn::TensorPtr y = x;
      for (std::size_t k = 0; k < d.blocks.size(); ++k) {
        y = nn::relu(nullptr, nn::conv2d(nullptr, y, d.scaling_w[k], d.scaling_b[k], 0));
        const auto y1v = nn::add(nullptr, d.blocks[k].inner1.residual(nullptr, y), y);
        const auto y2v = nn::add(nullptr, d.blocks[k].inner2.residual(nullptr, y1v), y1v);
        y = nn::add(nullptr, y2v, y);
      }
      const auto maps = d.forward_maps(nullptr, x);
      identical = identical && maps->size() == y->size() &&
                  std::equal(maps->data().begin(), maps->data().end(), y->data().begin());
    }
  }
  v.require(identical, "lambda = 1 differs from the vanilla residual net");
  v.detail << "max |recursive - unrolled| " << worst << " on 100 inputs, lambda = 1 bit-exact " << (identical ? "yes" : "no");
  return v;
}

// ---- 3: receptive field ----

std::vector<double> column(const nn::Tensor& t, int y, int x) {
  const std::size_t f = t.dim(0), h = t.dim(1), w = t.dim(2);
  std::vector<double> out(f);
  for (std::size_t c = 0; c < f; ++c) out[c] = t[(c * h + std::size_t(y)) * w + std::size_t(x)];
  return out;
}

Verdict receptive_field() {
  Verdict v;
  for (Mode mode : {Mode::fast, Mode::accurate}) {
    MatchNet net(small_net(mode, 4), 3);
    const int rf = net.description.receptive_field();
    v.require(rf == (mode == Mode::fast ? 9 : 11), std::string(to_string(mode)) + " window " + std::to_string(rf));
    const int size = rf + 10, cy = 5, cx = 5;
    std::mt19937_64 rng(4);
    auto image = random_tensor({1, std::size_t(size), std::size_t(size)}, rng, 0.0, 1.0);
    const auto base = column(net.description.describe(*image), cy, cx);
    auto outside = *image;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        if (!(y >= cy && y < cy + rf && x >= cx && x < cx + rf)) outside[std::size_t(y * size + x)] += 0.37;
    double change = 0.0;
    const auto moved = column(net.description.describe(outside), cy, cx);
    for (std::size_t i = 0; i < base.size(); ++i) change = std::max(change, std::abs(moved[i] - base[i]));
    v.require(change == 0.0, std::string(to_string(mode)) + " outside change " + std::to_string(change));
    auto inside = *image;
    inside[std::size_t((cy + rf / 2) * size + cx + rf / 2)] += 0.37;
    v.require(column(net.description.describe(inside), cy, cx) != base, "centre perturbation has no effect");
    v.detail << (mode == Mode::fast ? "" : ", ") << to_string(mode) << " " << rf << "x" << rf << " outside change " << change;
  }
  return v;
}

// ---- 4: loss constants ----

Verdict loss_constants() {
  Verdict v;
  const RunConfig rc;
  v.require(rc.alpha == 0.8 && rc.margin == 0.2, "hybrid loss defaults");
  v.require(rc.gdn_xent_weight == 0.85 && rc.gdn_reflective_weight == 0.15, "gdn loss weights");
  v.require(rc.gdn_decimate_epoch == 12 && rc.gdn_decimate_factor == 0.1, "decimation defaults");
  const MatcherTrainConfig mt = rc.matcher_train_config();
  v.require(mt.alpha == 0.8 && mt.margin == 0.2, "matcher train config");
  const double xent = -(std::log(0.6) + std::log(1.0 - 0.3));
  v.require(std::abs(hinge_term(0.5, 0.4, 0.2) - 0.1) < 1e-15 && hinge_term(0.9, 0.1, 0.2) == 0.0, "hinge closed form");
  v.require(std::abs(xent_term(0.3, 0.6, true) - xent) < 1e-14, "xent closed form");
  v.require(std::abs(hybrid_loss(0.3, 0.6, 0.5, 0.4, 0.8, 0.2) - (0.8 * xent + 0.2 * 0.1)) < 1e-14, "hybrid closed form");
  const double bins[] = {0.0, 0.0, 0.1, 0.25, 0.65, 0.65, 0.65, 0.25, 0.1, 0.0, 0.0};
  for (int d = 0; d <= 10; ++d) v.require(smooth_target_weight(d, 5.0) == bins[d], "bin weight at d = " + std::to_string(d));
  const double sum = 0.1 + 0.25 + 0.65 * 3 + 0.25 + 0.1;
  v.require(std::abs(weighted_xent_loss(std::vector<double>(8, 0.3), 4.0) - sum * std::log(8.0)) < 1e-12,
            "uniform-score xent");
  const GdnTrainConfig gt = rc.gdn_train_config();
  for (int e = 1; e <= 11; ++e) v.require(gdn_learning_rate(gt, e) == 0.003, "lr before epoch 12");
  for (int e = 12; e <= 15; ++e) v.require(std::abs(gdn_learning_rate(gt, e) - 0.0003) < 1e-15, "lr from epoch 12");
  v.detail << "alpha 0.8, m 0.2, weights 0.85/0.15, bins 0.65/0.25/0.1, lr /10 from epoch 12";
  return v;
}

// ---- 5: reflective labels ----

const GdnConfig kToyGdn{8, 6, 6};

nn::Tensor random_patch(int dmax, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  nn::Tensor t({std::size_t(dmax), std::size_t(kGdnPatch), std::size_t(kGdnPatch)});
  for (double& x : t.data()) x = u(rng);
  return t;
}

DisparityPatch toy_patch(std::mt19937_64& rng) {
  DisparityPatch p{random_patch(8, rng, -0.2, 0.4), 0.0};
  const int k = std::uniform_int_distribution<int>(0, 7)(rng);
  for (int i = 0; i < kGdnPatch * kGdnPatch; ++i) p.costs[std::size_t(k * kGdnPatch * kGdnPatch + i)] = -0.9;
  p.gt = k;
  return p;
}

Verdict reflective_dynamics() {
  Verdict v;
  Gdn net = Gdn::zeros(kToyGdn);
  std::mt19937_64 rng(7);
  const nn::Tensor p = random_patch(8, rng, -1.0, 1.0);
  net.fc3_b.value->data()[3] = 1.0;
  const int before = reflective_label(net.forward(p).scores, 3.0);
  net.fc3_b.value->data()[6] = 2.0;
  const int after = reflective_label(net.forward(p).scores, 3.0);
  v.require(before == 1 && after == 0, "label did not flip");

  std::vector<DisparityPatch> train;
  for (int i = 0; i < 800; ++i) train.push_back(toy_patch(rng));
  Gdn toy(kToyGdn, 11);
  GdnTrainConfig cfg;
  cfg.epochs = 12;
  cfg.batch_size = 32;
  cfg.lr = 0.03;
  cfg.decimate_epoch = 11;
  const GdnTrainLog log = gdn_train(toy, train, cfg);
  v.require(log.epochs.size() == 12, "not every epoch logged");
  const GdnEpochLog& last = log.epochs.back();
  const double gap = std::abs(last.positive_fraction - last.train_accuracy);
  v.require(gap <= 0.05, "positive fraction gap " + std::to_string(gap));
  v.detail << "label 1 -> 0 with gt fixed; positive fraction " << log.epochs.front().positive_fraction << " -> "
           << last.positive_fraction << ", train accuracy " << last.train_accuracy;
  return v;
}

// ---- 6: confidence measures ----

struct RefMinima {
  int d1;
  double c1, c2;
};

RefMinima ref_minima(const std::vector<double>& c) {
  const int n = int(c.size());
  RefMinima r{0, c[0], 0.0};
  for (int d = 1; d < n; ++d)
    if (c[std::size_t(d)] < r.c1) r = {d, c[std::size_t(d)], 0.0};
  std::vector<double> locals, others;
  for (int d = 0; d < n; ++d) {
    if (d == r.d1) continue;
    others.push_back(c[std::size_t(d)]);
    const bool lo = d == 0 || c[std::size_t(d)] <= c[std::size_t(d - 1)];
    const bool hi = d == n - 1 || c[std::size_t(d)] <= c[std::size_t(d + 1)];
    if (lo && hi) locals.push_back(c[std::size_t(d)]);
  }
  r.c2 = locals.empty() ? *std::min_element(others.begin(), others.end()) : *std::min_element(locals.begin(), locals.end());
  return r;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

struct ErrorScene {
  DisparityMap pred, gt;
  std::vector<double> correct;
};

ErrorScene error_scene(int h, int w, std::mt19937_64& rng, double wrong_share) {
  ErrorScene s{DisparityMap(h, w), DisparityMap(h, w), {}};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < s.gt.size(); ++i) {
    s.gt.values[i] = 10.0 * u(rng);
    const bool wrong = u(rng) < wrong_share;
    s.pred.values[i] = s.gt.values[i] + (wrong ? 4.0 + u(rng) : 2.0 * u(rng) - 1.0);
    s.correct.push_back(wrong ? 0.0 : 1.0);
  }
  return s;
}

ConfidenceMap as_map(int h, int w, std::vector<double> values) {
  ConfidenceMap m(h, w);
  m.values = std::move(values);
  return m;
}

Verdict confidence_measures() {
  Verdict v;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> c(8);
    for (double& x : c) x = u(rng);
    const RefMinima r = ref_minima(c);
    const int n = int(c.size());
    const double left = r.d1 > 0 ? c[std::size_t(r.d1 - 1)] : c[std::size_t(r.d1 + 1)];
    const double right = r.d1 < n - 1 ? c[std::size_t(r.d1 + 1)] : c[std::size_t(r.d1 - 1)];
    double zc = 0.0, zs = 0.0, best = 0.0, ent = 0.0;
    for (double x : c) zc += std::exp(-x), zs += std::exp(x);
    for (double x : c) {
      const double q = std::exp(-x) / zc;
      ent += q * std::log(q);
      best = std::max(best, std::exp(x) / zs);
    }
    CostVolume rv(1, 12, 8);
    for (double& x : rv.costs) x = u(rng);
    double rmin = 1e300;
    for (int d = 0; d < 8; ++d) rmin = std::min(rmin, rv.at(0, 9 - r.d1, d));
    worst = std::max({worst, rel(msm(c), -r.c1), rel(prob(c), best), rel(cur(c), -2.0 * r.c1 + left + right),
                      rel(pkrn(c), r.c2 / (r.c1 + 1e-9)), rel(nem(c), ent),
                      rel(lrd(c, rv, 0, 9), (r.c2 - r.c1) / (std::abs(r.c1 - rmin) + 1e-9))});
  }
  v.require(worst <= 1e-12, "measure mismatch " + std::to_string(worst));

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int beaten = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const ErrorScene s = error_scene(8, 8, rng, 0.35);
    const double oracle = auc_sparsification(as_map(8, 8, s.correct), s.pred, s.gt, 3.0);
    for (int k = 0; k < 20; ++k) {
      std::vector<double> other(64);
      for (double& x : other) x = unit(rng);
      beaten += auc_sparsification(as_map(8, 8, other), s.pred, s.gt, 3.0) > oracle + 1e-12;
    }
    std::vector<double> reversed(s.correct.begin(), s.correct.end());
    for (double& x : reversed) x = 1.0 - x;
    beaten += auc_sparsification(as_map(8, 8, reversed), s.pred, s.gt, 3.0) > oracle + 1e-12;
  }
  v.require(beaten == 0, std::to_string(beaten) + " orderings beat the oracle");

  double drift = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const ErrorScene s = error_scene(5, 9, rng, 0.4);
    std::vector<double> conf(45), ex(45), cube(45);
    for (std::size_t i = 0; i < 45; ++i) {
      conf[i] = std::round((4.0 * unit(rng) - 2.0) * 4.0) / 4.0;
      ex[i] = std::exp(conf[i]);
      cube[i] = conf[i] * conf[i] * conf[i];
    }
    const double a = auc_sparsification(as_map(5, 9, conf), s.pred, s.gt, 3.0);
    drift = std::max({drift, std::abs(auc_sparsification(as_map(5, 9, ex), s.pred, s.gt, 3.0) - a),
                      std::abs(auc_sparsification(as_map(5, 9, cube), s.pred, s.gt, 3.0) - a)});
  }
  v.require(drift <= 1e-12, "AUC changes under a monotone transform by " + std::to_string(drift));
  v.detail << "max relative error " << worst << " on 1000 curves, oracle never beaten on 20 maps, transform drift " << drift;
  return v;
}

// ---- 7: refinement rules ----

struct LabelCase {
  int x;
  double dl, dr, cl, cr;
  int alt;
  double alt_dr;
  PixelLabel expected;
};

PixelLabel label_of(const LabelCase& c) {
  constexpr int kWidth = 20;
  DisparityMap dl(1, kWidth, 0.0), dr(1, kWidth, -100.0);
  ConfidenceMap cl(1, kWidth, 0.0), cr(1, kWidth, 0.0);
  dl.at(0, c.x) = c.dl;
  cl.at(0, c.x) = c.cl;
  const long xr = c.x - std::lround(c.dl);
  if (xr >= 0 && xr < kWidth) {
    dr.at(0, int(xr)) = c.dr;
    cr.at(0, int(xr)) = c.cr;
  }
  if (c.alt >= 0) dr.at(0, c.x - c.alt) = c.alt_dr;
  return label_pixels(dl, dr, cl, cr, 16).at(0, c.x);
}

Verdict refinement_rules() {
  Verdict v;
  using L = PixelLabel;
  const LabelCase cases[] = {
      {12, 10.0, 10.0, 0.0, 0.0, -1, 0.0, L::correct},     {12, 10.0, 11.0, 0.0, 0.0, -1, 0.0, L::correct},
      {12, 10.4, 9.5, 0.0, 0.0, -1, 0.0, L::correct},      {12, 10.0, 11.5, 0.5, 0.0, -1, 0.0, L::occlusion},
      {12, 10.0, 15.0, 0.9, 0.7, -1, 0.0, L::correct},     {12, 10.0, 15.0, 0.9, 0.85, -1, 0.0, L::occlusion},
      {12, 10.0, 15.0, 0.65, 0.0, -1, 0.0, L::occlusion},  {12, 10.0, 15.0, 0.7, 0.5, -1, 0.0, L::correct},
      {12, 10.0, 15.0, 0.5, 0.0, 4, 4.0, L::mismatch},     {12, 10.0, 15.0, 0.5, 0.0, 4, 5.0, L::mismatch},
      {12, 10.0, 15.0, 0.5, 0.0, 4, 5.5, L::occlusion},    {12, 10.0, 15.0, 0.9, 0.7, 4, 4.0, L::correct},
      {12, 10.4, 9.2, 0.0, 0.0, -1, 0.0, L::occlusion},    {12, 14.6, 0.0, 0.99, 0.0, -1, 0.0, L::occlusion},
      {12, 14.6, 0.0, 0.99, 0.0, 3, 3.0, L::mismatch},     {19, 10.0, 15.0, 0.5, 0.0, 17, 17.0, L::occlusion},
  };
  int wrong = 0;
  for (const auto& c : cases) wrong += label_of(c) != c.expected;
  v.require(wrong == 0, std::to_string(wrong) + " label cases wrong");

  DisparityMap row(1, 5);
  row.values = {2.0, 2.0, 0.0, 6.0, 6.0};
  PixelLabelMap rl(1, 5);
  rl.at(0, 2) = L::mismatch;
  v.require(interpolate(row, rl).at(0, 2) == 2.0, "mismatch median");
  DisparityMap occ(1, 6);
  occ.values = {1.0, 7.0, 0.0, 0.0, 4.0, 4.0};
  PixelLabelMap ol(1, 6);
  ol.at(0, 2) = ol.at(0, 3) = L::occlusion;
  const DisparityMap o = interpolate(occ, ol);
  v.require(o.at(0, 2) == 7.0 && o.at(0, 3) == 7.0, "occlusion takes the left neighbour");
  DisparityMap border(3, 3);
  border.values = {8.0, 8.0, 8.0, 0.0, 9.0, 9.0, 4.0, 8.0, 8.0};
  PixelLabelMap bl(3, 3);
  bl.at(1, 0) = L::occlusion;
  v.require(interpolate(border, bl).at(1, 0) == 4.0, "border occlusion");
  v.detail << std::size(cases) << " label cases, 3 interpolation examples";
  return v;
}

// ---- 8 and 9: desk-scale chain ----

RunConfig desk_config() {
  RunConfig cfg;
  const std::pair<const char*, const char*> settings[] = {
      {"mode", "fast"},          {"feature_channels", "12"}, {"matcher_samples", "6000"}, {"matcher_epochs", "5"},
      {"gdn_channels", "32"},    {"gdn_samples", "8000"},    {"gdn_epochs", "15"},        {"scene_height", "48"},
      {"scene_width", "96"},     {"train_scenes", "8"},      {"val_scenes", "10"},        {"dmax", "32"},
      {"sgm_p1", "0.5"},         {"sgm_p2", "4"}};
  for (const auto& [k, val] : settings) set_config_value(cfg, k, val);
  validate(cfg);
  return cfg;
}

struct DeskRun {
  double raw = 0, post = 0, gdn = 0, refined = 0, seconds = 0;
  std::map<Measure, double> auc;
};

DeskRun run_desk() {
  const auto t0 = Clock::now();
  const RunConfig cfg = desk_config();
  const auto train = make_scenes(cfg, false, cfg.train_scenes);
  const auto val = make_scenes(cfg, true, cfg.val_scenes);
  const TrainedMatcher tm = train_matcher_on_scenes(cfg, train);
  const TrainedGdn tg = train_gdn_on_scenes(cfg, tm.net, train);
  DeskRun r;
  const double n = double(val.size());
  for (const auto& s : val) {
    const SceneEvaluation e = evaluate_scene(tm.net, tg.net, s, cfg);
    r.raw += e.err_raw / n;
    r.post += e.err_post / n;
    r.gdn += e.err_gdn / n;
    r.refined += e.err_refined / n;
    for (const auto& [m, a] : e.auc) r.auc[m] += a / n;
  }
  r.seconds = seconds_since(t0);
  return r;
}

Verdict error_chain(const DeskRun& r) {
  Verdict v;
  v.require(r.post < r.raw, "postprocess does not improve on raw WTA");
  v.require(r.gdn < r.post, "GDN does not improve on postprocess WTA");
  v.require(r.refined < r.gdn, "refinement does not improve on GDN");
  v.require(r.seconds < 600.0, "wall time " + std::to_string(r.seconds) + " s");
  v.detail << "3-px error raw " << r.raw << ", post " << r.post << ", gdn " << r.gdn << ", refined " << r.refined << " ("
           << r.seconds << " s, 10 scenes, dmax 32)";
  return v;
}

Verdict confidence_auc(const DeskRun& r) {
  Verdict v;
  const double refl = r.auc.at(Measure::reflective);
  for (Measure m : {Measure::msm, Measure::prob, Measure::cur, Measure::pkrn, Measure::nem, Measure::lrd}) {
    v.require(refl >= r.auc.at(m) - 0.02, std::string(to_string(m)) + " " + std::to_string(r.auc.at(m)));
    v.detail << to_string(m) << " " << r.auc.at(m) << ", ";
  }
  v.require(refl > r.auc.at(Measure::random), "random " + std::to_string(r.auc.at(Measure::random)));
  v.detail << "random " << r.auc.at(Measure::random) << ", reflective " << refl;
  return v;
}

// ---- 10: subpixel and SGM ----

Verdict subpixel_and_sgm() {
  Verdict v;
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.05, 2.0);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int d = 1 + trial % 6;
    CostVolume vol(1, 1, 8, 5.0);
    const double cm = u(rng), cp = u(rng), c0 = -u(rng);
    vol.at(0, 0, d - 1) = cm, vol.at(0, 0, d) = c0, vol.at(0, 0, d + 1) = cp;
    DisparityMap dm(1, 1, double(d));
    const double analytic = d + (cm - cp) / (2.0 * (cm - 2.0 * c0 + cp));
    worst = std::max(worst, std::abs(subpixel(dm, vol).at(0, 0) - analytic));
  }
  v.require(worst <= 1e-12, "parabola error " + std::to_string(worst));

  auto row = [](const std::vector<std::vector<double>>& px) {
    CostVolume out(1, int(px.size()), int(px[0].size()));
    for (std::size_t x = 0; x < px.size(); ++x)
      for (std::size_t k = 0; k < px[0].size(); ++k) out.at(0, int(x), int(k)) = px[x][k];
    return out;
  };
  // Left-to-right paths [0,2,5] [4,2,6] [3,6,1] [3,2,4], right-to-left [1,2,6] [5,2,3] [2,6,1] [1,1,4];
  // vertical paths see one pixel and return the costs.
  const CostVolume a = sgm(row({{0, 2, 5}, {4, 1, 3}, {2, 6, 0}, {1, 1, 4}}), 1.0, 3.0);
  const double ea[4][3] = {{0.25, 2.0, 5.25}, {4.25, 1.5, 3.75}, {2.25, 6.0, 0.5}, {1.5, 1.25, 4.0}};
  const CostVolume b = sgm(row({{0, 3}, {2, 0}, {1, 4}, {5, 2}}), 1.0, 2.0);
  const double eb[4][2] = {{0.25, 3.0}, {2.0, 0.5}, {1.5, 4.0}, {5.0, 2.25}};
  bool exact = true;
  for (int x = 0; x < 4; ++x) {
    for (int d = 0; d < 3; ++d) exact = exact && a.at(0, x, d) == ea[x][d];
    for (int d = 0; d < 2; ++d) exact = exact && b.at(0, x, d) == eb[x][d];
  }
  v.require(exact, "SGM table mismatch");
  v.detail << "parabola max error " << worst << " on 1000 triples, 1x4 SGM tables exact " << (exact ? "yes" : "no");
  return v;
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Verdict()>& fn) {
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    failures += !v.ok;
    std::printf("criterion %2d %s  %s: %s\n", id, v.ok ? "PASS" : "FAIL", name, v.text().c_str());
    std::fflush(stdout);
  };
  report(1, "gradient suite", gradient_suite);
  report(2, "outer-block unrolling", unrolling);
  report(3, "receptive-field locality", receptive_field);
  report(4, "loss constants", loss_constants);
  report(5, "reflective-label dynamics", reflective_dynamics);
  report(6, "confidence measures", confidence_measures);
  report(7, "refinement rules", refinement_rules);
  DeskRun desk;
  bool desk_ok = true;
  std::string desk_error;
  try {
    desk = run_desk();
  } catch (const std::exception& e) {
    desk_ok = false;
    desk_error = e.what();
  }
  auto desk_check = [&](Verdict (*fn)(const DeskRun&)) {
    return [&, fn] {
      if (!desk_ok) throw std::runtime_error(desk_error);
      return fn(desk);
    };
  };
  report(8, "error chain", desk_check(error_chain));
  report(9, "confidence AUC", desk_check(confidence_auc));
  report(10, "subpixel and SGM", subpixel_and_sgm);
  std::printf("%d of 10 criteria pass\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}
