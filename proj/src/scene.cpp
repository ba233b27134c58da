#include "resmatch/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "resmatch/errors.hpp"

namespace resmatch {
namespace {

// Sum of bilinearly interpolated random lattices at three scales, in [0,1].
class Texture {
 public:
  Texture(int channels, double x0, double x1, double y0, double y1, std::mt19937_64& rng) : channels_(channels) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int o = 0; o < kOctaves; ++o) {
      Octave& oct = octaves_[o];
      oct.ox = x0 - 2.0 * kScale[o];
      oct.oy = y0 - 2.0 * kScale[o];
      oct.w = static_cast<int>(std::ceil((x1 - x0) / kScale[o])) + 5;
      oct.h = static_cast<int>(std::ceil((y1 - y0) / kScale[o])) + 5;
      oct.v.resize(static_cast<std::size_t>(channels) * oct.w * oct.h);
      for (double& v : oct.v) v = u(rng);
    }
  }

  double operator()(int c, double y, double x) const {
    double s = 0.0;
    for (int o = 0; o < kOctaves; ++o) {
      const Octave& oct = octaves_[o];
      const double gx = std::clamp((x - oct.ox) / kScale[o], 0.0, oct.w - 1.001);
      const double gy = std::clamp((y - oct.oy) / kScale[o], 0.0, oct.h - 1.001);
      const int ix = static_cast<int>(gx), iy = static_cast<int>(gy);
      const double fx = gx - ix, fy = gy - iy;
      auto at = [&](int yy, int xx) { return oct.v[(static_cast<std::size_t>(c) * oct.h + yy) * oct.w + xx]; };
      const double top = (1 - fx) * at(iy, ix) + fx * at(iy, ix + 1);
      const double bot = (1 - fx) * at(iy + 1, ix) + fx * at(iy + 1, ix + 1);
      s += kWeight[o] * ((1 - fy) * top + fy * bot);
    }
    return s;
  }

  int channels() const { return channels_; }

 private:
  static constexpr int kOctaves = 3;
  static constexpr double kScale[kOctaves] = {1.5, 4.0, 11.0};
  static constexpr double kWeight[kOctaves] = {0.5, 0.3, 0.2};
  struct Octave {
    double ox = 0, oy = 0;
    int w = 0, h = 0;
    std::vector<double> v;
  };
  int channels_;
  Octave octaves_[kOctaves];
};

struct Rect {
  double x0, y0, x1, y1;
  bool contains(double x, double y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

struct Occluder {
  Rect rect;
  double disparity;
  Texture texture;
};

struct Layout {
  double a = 0, b = 0, c = 0;  // background disparity a + b x + c y
  std::vector<Occluder> occluders;
  bool has_flat = false, has_reflection = false;
  Rect flat{}, reflection{};
  double flat_level = 0.5;
  double reflection_disparity = 0.0;
  double reflection_mix = 0.5;
};

double background_disparity(const Layout& l, double x, double y) { return l.a + l.b * x + l.c * y; }

Rect random_rect(std::mt19937_64& rng, int h, int w, double min_w, double max_w, double min_h, double max_h) {
  std::uniform_real_distribution<double> uw(min_w, max_w), uh(min_h, max_h);
  const double rw = std::round(uw(rng)), rh = std::round(uh(rng));
  std::uniform_real_distribution<double> ux(0.0, std::max(0.0, w - rw)), uy(0.0, std::max(0.0, h - rh));
  const double x0 = std::round(ux(rng)), y0 = std::round(uy(rng));
  return {x0, y0, x0 + rw, y0 + rh};
}

struct Hit {
  int layer;  // -1 background, else occluder index
  double xl;  // left-view x of the surface point
  double disparity;
};

// Nearest surface seen by the right view at (y, xr).
Hit right_hit(const Layout& l, double y, double xr) {
  Hit best{-1, (xr + l.a + l.c * y) / (1.0 - l.b), 0.0};
  best.disparity = background_disparity(l, best.xl, y);
  for (std::size_t i = 0; i < l.occluders.size(); ++i) {
    const Occluder& o = l.occluders[i];
    const double xl = xr + o.disparity;
    if (o.rect.contains(xl, y) && o.disparity > best.disparity) best = {static_cast<int>(i), xl, o.disparity};
  }
  return best;
}

// Nearest surface seen by the left view at (y, x).
Hit left_hit(const Layout& l, double y, double x) {
  Hit best{-1, x, background_disparity(l, x, y)};
  for (std::size_t i = 0; i < l.occluders.size(); ++i) {
    const Occluder& o = l.occluders[i];
    if (o.rect.contains(x, y) && o.disparity > best.disparity) best = {static_cast<int>(i), x, o.disparity};
  }
  return best;
}

// Appearance of a surface point at left coordinates (y, xl), seen from a view
// whose own column is x_view.
double shade(const Layout& l, const Texture& bg, const Texture& refl, const Hit& hit, int c, double y, double x_view,
             bool right_view) {
  if (hit.layer >= 0) return l.occluders[static_cast<std::size_t>(hit.layer)].texture(c, y, hit.xl);
  double v = bg(c, y, hit.xl);
  if (l.has_flat && l.flat.contains(hit.xl, y)) v = l.flat_level + 0.02 * (v - 0.5);
  if (l.has_reflection && l.reflection.contains(hit.xl, y)) {
    const double u = right_view ? x_view + l.reflection_disparity : x_view;
    v = (1.0 - l.reflection_mix) * v + l.reflection_mix * refl(c, y, u);
  }
  return v;
}

void check_spec(const SceneSpec& s) {
  if (s.dmax < 2) throw ConfigError("generate_scene: dmax must be at least 2");
  if (s.height < 1 || s.width < 1) throw ConfigError("generate_scene: extents must be positive");
  if (s.channels != 1 && s.channels != 3) throw ConfigError("generate_scene: channels must be 1 or 3");
  if (s.noise < 0.0) throw ConfigError("generate_scene: noise must be non-negative");
  if (s.kind == SceneKind::shift && (s.shift < 0 || s.shift > s.dmax - 1)) {
    throw ConfigError("generate_scene: shift must lie in [0, dmax-1]");
  }
  if (s.occluders < 0) throw ConfigError("generate_scene: occluders must be non-negative");
}

}  // namespace

std::string_view to_string(SceneKind kind) {
  switch (kind) {
    case SceneKind::layered: return "layered";
    case SceneKind::shift: return "shift";
    case SceneKind::slanted: return "slanted";
  }
  return "?";
}

SceneKind parse_scene_kind(std::string_view text) {
  if (text == "layered") return SceneKind::layered;
  if (text == "shift") return SceneKind::shift;
  if (text == "slanted") return SceneKind::slanted;
  throw ConfigError("unknown scene kind '" + std::string(text) + "'");
}

SyntheticScene generate_scene(const SceneSpec& spec) {
  check_spec(spec);
  std::mt19937_64 rng(spec.seed);
  const int h = spec.height, w = spec.width, ch = spec.channels;
  const double dm = spec.dmax;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  const double x_lo = -dm - 4.0, x_hi = w + 2.0 * dm + 4.0;
  Layout l;
  switch (spec.kind) {
    case SceneKind::shift:
      l.a = spec.shift;
      break;
    case SceneKind::slanted:
      l.a = uni(0.05, 0.15) * dm;
      l.b = uni(0.25, 0.45) * dm / std::max(1, w);
      break;
    case SceneKind::layered: {
      l.a = uni(0.08, 0.15) * dm;
      l.b = uni(0.1, 0.2) * dm / std::max(1, w);
      l.c = uni(-0.05, 0.05) * dm / std::max(1, h);
      for (int i = 0; i < spec.occluders; ++i) {
        const Rect r = random_rect(rng, h, w, w / 7.0, w / 4.0, h / 4.0, h / 2.0);
        const double d = std::round(uni(0.55, 0.85) * dm * 4.0) / 4.0;
        l.occluders.push_back({r, d, Texture(ch, x_lo, x_hi, -2.0, h + 2.0, rng)});
      }
      if (spec.low_texture) {
        l.has_flat = true;
        l.flat = random_rect(rng, h, w, w / 6.0, w / 4.0, h / 4.0, h / 2.5);
        l.flat_level = uni(0.3, 0.7);
      }
      if (spec.reflective) {
        l.has_reflection = true;
        l.reflection = random_rect(rng, h, w, w / 6.0, w / 4.0, h / 4.0, h / 2.5);
        l.reflection_disparity = std::round(uni(0.35, 0.5) * dm);
        l.reflection_mix = 0.5;
      }
      break;
    }
  }
  const Texture bg(ch, x_lo, x_hi, -2.0, h + 2.0, rng);
  const Texture refl(ch, x_lo, x_hi, -2.0, h + 2.0, rng);

  SyntheticScene s;
  s.left = Image(ch, h, w);
  s.right = Image(ch, h, w);
  s.gt = DisparityMap(h, w, 0.0, true);
  s.occluded.assign(static_cast<std::size_t>(h) * w, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Hit lh = left_hit(l, y, x);
      const Hit rh = right_hit(l, y, x);
      for (int c = 0; c < ch; ++c) {
        s.left.at(c, y, x) = shade(l, bg, refl, lh, c, y, x, false);
        s.right.at(c, y, x) = shade(l, bg, refl, rh, c, y, x, true);
      }
      s.gt.at(y, x) = std::clamp(lh.disparity, 0.0, dm - 1.0);
      // Hidden when the right view sees a nearer surface at x - d.
      const Hit seen = right_hit(l, y, x - lh.disparity);
      if (seen.layer != lh.layer && seen.disparity > lh.disparity + 1e-9) s.occluded[s.gt.index(y, x)] = 1;
    }
  }
  std::normal_distribution<double> noise(0.0, 1.0);
  for (double& v : s.left.data) v = std::clamp(v + spec.noise * noise(rng), 0.0, 1.0);
  for (double& v : s.right.data) v = std::clamp(v + spec.brightness + spec.noise * noise(rng), 0.0, 1.0);
  return s;
}

double sample_bilinear(const Image& img, int c, double y, double x) {
  x = std::clamp(x, 0.0, img.width - 1.0);
  y = std::clamp(y, 0.0, img.height - 1.0);
  const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - x0, fy = y - y0;
  const double top = (1 - fx) * img.at(c, y0, x0) + fx * img.at(c, y0, x1);
  const double bot = (1 - fx) * img.at(c, y1, x0) + fx * img.at(c, y1, x1);
  return (1 - fy) * top + fy * bot;
}

std::vector<PatchPairSample> sample_match_pairs(const SyntheticScene& scene, int n, const MatchSamplingParams& p) {
  if (n < 0) throw ConfigError("sample_match_pairs: n must be non-negative");
  if (p.receptive_field < 1 || p.receptive_field % 2 == 0) {
    throw ConfigError("sample_match_pairs: receptive field must be odd");
  }
  if (p.neg_offset_min < 0.0 || p.neg_offset_max < p.neg_offset_min) {
    throw ConfigError("sample_match_pairs: bad negative offset range");
  }
  std::vector<PatchPairSample> out;
  if (n == 0) return out;
  const Image left = normalize_planes(scene.left);
  const Image right = normalize_planes(scene.right);
  const int half = p.receptive_field / 2, h = left.height, w = left.width, ch = left.channels;
  const auto r = static_cast<std::size_t>(p.receptive_field);

  // Candidate centres: every left window and the positive window fit.
  std::vector<std::size_t> candidates;
  for (int y = half; y < h - half; ++y) {
    for (int x = half; x < w - half; ++x) {
      const std::size_t i = scene.gt.index(y, x);
      if (!scene.gt.valid[i] || scene.occluded[i]) continue;
      const double xr = x - scene.gt.values[i];
      if (xr - half < 0.0 || xr + half > w - 1.0) continue;
      candidates.push_back(i);
    }
  }
  if (candidates.empty()) throw InputError("sample_match_pairs: no pixel admits a full patch triple");

  std::mt19937_64 rng(p.seed);
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  std::uniform_real_distribution<double> offset(p.neg_offset_min, p.neg_offset_max);
  std::bernoulli_distribution sign(0.5);
  auto right_patch = [&](int y, double xc) {
    nn::Tensor t({static_cast<std::size_t>(ch), r, r});
    std::size_t k = 0;
    for (int c = 0; c < ch; ++c) {
      for (int dy = -half; dy <= half; ++dy) {
        for (int dx = -half; dx <= half; ++dx) t[k++] = sample_bilinear(right, c, y + dy, xc + dx);
      }
    }
    return t;
  };
  int attempts = 0;
  while (static_cast<int>(out.size()) < n) {
    if (++attempts > 100 * n + 1000) throw InputError("sample_match_pairs: could not place negative patches");
    const std::size_t i = candidates[pick(rng)];
    const int y = static_cast<int>(i / static_cast<std::size_t>(w)), x = static_cast<int>(i % static_cast<std::size_t>(w));
    const double xr = x - scene.gt.values[i];
    const double o = offset(rng);
    double xn = sign(rng) ? xr + o : xr - o;
    if (xn - half < 0.0 || xn + half > w - 1.0) xn = 2.0 * xr - xn;  // try the other side
    if (xn - half < 0.0 || xn + half > w - 1.0) continue;
    PatchPairSample s;
    s.left = nn::Tensor({static_cast<std::size_t>(ch), r, r});
    std::size_t k = 0;
    for (int c = 0; c < ch; ++c) {
      for (int dy = -half; dy <= half; ++dy) {
        for (int dx = -half; dx <= half; ++dx) s.left[k++] = left.at(c, y + dy, x + dx);
      }
    }
    s.positive = right_patch(y, xr);
    s.negative = right_patch(y, xn);
    out.push_back(std::move(s));
  }
  return out;
}

nn::Tensor extract_gdn_patch(const CostVolume& volume, int y, int x) {
  const int r = kGdnPatch / 2, dm = volume.dmax;
  nn::Tensor t({static_cast<std::size_t>(dm), kGdnPatch, kGdnPatch});
  std::size_t k = 0;
  for (int d = 0; d < dm; ++d) {
    for (int dy = -r; dy <= r; ++dy) {
      const int yy = std::clamp(y + dy, 0, volume.height - 1);
      for (int dx = -r; dx <= r; ++dx) t[k++] = volume.at(yy, std::clamp(x + dx, 0, volume.width - 1), d);
    }
  }
  return t;
}

std::vector<DisparityPatch> sample_gdn_patches(const CostVolume& volume, const DisparityMap& gt, int n,
                                               std::uint64_t seed) {
  if (n < 0) throw ConfigError("sample_gdn_patches: n must be non-negative");
  if (gt.height != volume.height || gt.width != volume.width) {
    throw InputError("sample_gdn_patches: ground truth does not match the volume");
  }
  std::vector<DisparityPatch> out;
  if (n == 0) return out;
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt.valid[i] && gt.values[i] >= 0.0 && gt.values[i] <= volume.dmax - 1.0) pool.push_back(i);
  }
  if (pool.empty()) throw InputError("sample_gdn_patches: no pixel has usable ground truth");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> chosen;
  while (static_cast<int>(chosen.size()) < n) {
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t take = std::min(pool.size(), static_cast<std::size_t>(n) - chosen.size());
    chosen.insert(chosen.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
  }
  for (std::size_t i : chosen) {
    const int y = static_cast<int>(i / static_cast<std::size_t>(gt.width));
    const int x = static_cast<int>(i % static_cast<std::size_t>(gt.width));
    out.push_back({extract_gdn_patch(volume, y, x), gt.values[i]});
  }
  return out;
}

}  // namespace resmatch
