#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "resmatch/costproc.hpp"
#include "resmatch/errors.hpp"

using namespace resmatch;

namespace {

CostVolume row_volume(const std::vector<std::vector<double>>& per_pixel) {
  const int w = static_cast<int>(per_pixel.size());
  const int d = static_cast<int>(per_pixel[0].size());
  CostVolume v(1, w, d);
  for (int x = 0; x < w; ++x)
    for (int k = 0; k < d; ++k) v.at(0, x, k) = per_pixel[static_cast<std::size_t>(x)][static_cast<std::size_t>(k)];
  return v;
}

CostVolume random_volume(int h, int w, int d, std::mt19937_64& rng, bool mark_invalid = true) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  CostVolume v(h, w, d);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < d; ++k) {
        v.at(y, x, k) = u(rng);
        if (mark_invalid && x - k < 0) v.valid[v.index(y, x, k)] = 0;
      }
  return v;
}

Image blocky_image(int h, int w, std::mt19937_64& rng) {
  // Few distinct grey levels so that arms actually stop at edges.
  std::uniform_int_distribution<int> level(0, 2);
  Image img(1, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(0, y, x) = ((x / 3 + y / 2 + level(rng)) % 3) * 0.2;
  return img;
}

// Arms by direct walking, written independently of the library.
CrossSupport brute_cross(const Image& img, double tau, int max_arm) {
  CrossSupport c(img.height, img.width);
  const int dy[4] = {0, 0, -1, 1}, dx[4] = {-1, 1, 0, 0};
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int a = 0; a < 4; ++a) {
        int len = 0;
        while (len + 1 < max_arm) {
          const int yy = y + (len + 1) * dy[a], xx = x + (len + 1) * dx[a];
          if (yy < 0 || yy >= img.height || xx < 0 || xx >= img.width) break;
          if (std::abs(img.at(0, yy, xx) - img.at(0, y, x)) >= tau) break;
          ++len;
        }
        c.at(y, x)[static_cast<std::size_t>(a)] = len;
      }
  return c;
}

// Mean over the support region enumerated pixel by pixel.
CostVolume brute_cbca(const CostVolume& v, const CrossSupport& lc, const CrossSupport& rc) {
  CostVolume out = v;
  auto arm = [&](int y, int x, int d, int a) {
    int len = lc.at(y, x)[static_cast<std::size_t>(a)];
    if (x - d >= 0) len = std::min(len, rc.at(y, x - d)[static_cast<std::size_t>(a)]);
    return len;
  };
  for (int y = 0; y < v.height; ++y)
    for (int x = 0; x < v.width; ++x)
      for (int d = 0; d < v.dmax; ++d) {
        if (!v.is_valid(y, x, d)) continue;
        double s = 0.0;
        int n = 0;
        for (int yy = y - arm(y, x, d, kArmUp); yy <= y + arm(y, x, d, kArmDown); ++yy) {
          if (yy < 0 || yy >= v.height) continue;
          for (int xx = x - arm(yy, x, d, kArmLeft); xx <= x + arm(yy, x, d, kArmRight); ++xx) {
            if (xx < 0 || xx >= v.width || !v.is_valid(yy, xx, d)) continue;
            s += v.at(yy, xx, d);
            ++n;
          }
        }
        if (n > 0) out.at(y, x, d) = s / n;
      }
  return out;
}

}  // namespace

TEST_CASE("sgm on a 1x4 row matches the hand-unrolled recurrence, D = 2") {
  // Left-to-right paths:  [0,3] [2,1] [2,4] [5,3]
  // Right-to-left paths:  [1,3] [2,1] [2,4] [5,2]
  // Vertical paths have no history and equal the costs.
  const CostVolume v = row_volume({{0, 3}, {2, 0}, {1, 4}, {5, 2}});
  const CostVolume out = sgm(v, 1.0, 2.0);
  const double expected[4][2] = {{0.25, 3.0}, {2.0, 0.5}, {1.5, 4.0}, {5.0, 2.25}};
  for (int x = 0; x < 4; ++x)
    for (int d = 0; d < 2; ++d) CHECK(out.at(0, x, d) == expected[x][d]);
}

TEST_CASE("sgm on a 1x4 row matches the hand-unrolled recurrence, D = 3") {
  // Left-to-right: [0,2,5] [4,2,6] [3,6,1] [3,2,4]
  // Right-to-left: [1,2,6] [5,2,3] [2,6,1] [1,1,4]
  const CostVolume v = row_volume({{0, 2, 5}, {4, 1, 3}, {2, 6, 0}, {1, 1, 4}});
  const CostVolume out = sgm(v, 1.0, 3.0);
  const double expected[4][3] = {{0.25, 2.0, 5.25}, {4.25, 1.5, 3.75}, {2.25, 6.0, 0.5}, {1.5, 1.25, 4.0}};
  for (int x = 0; x < 4; ++x)
    for (int d = 0; d < 3; ++d) CHECK(out.at(0, x, d) == expected[x][d]);
}

TEST_CASE("sgm leaves a single pixel and zero penalties unchanged") {
  std::mt19937_64 rng(1);
  const CostVolume one = random_volume(1, 1, 6, rng, false);
  const CostVolume out_one = sgm(one, 1.0, 8.0);
  for (std::size_t i = 0; i < one.costs.size(); ++i) CHECK(out_one.costs[i] == doctest::Approx(one.costs[i]));

  const CostVolume v = random_volume(6, 7, 5, rng);
  for (int dirs : {4, 8}) {
    const CostVolume out = sgm(v, SgmParams{0.0, 0.0, dirs});
    for (std::size_t i = 0; i < v.costs.size(); ++i) CHECK(out.costs[i] == doctest::Approx(v.costs[i]).epsilon(1e-12));
    CHECK(out.valid == v.valid);
  }
}

TEST_CASE("sgm keeps the argmin of a spatially constant volume") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> curve(7);
    for (double& c : curve) c = u(rng);
    CostVolume v(5, 6, 7);
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 6; ++x)
        for (int d = 0; d < 7; ++d) v.at(y, x, d) = curve[static_cast<std::size_t>(d)];
    const CostVolume out = sgm(v, 0.5, 4.0);
    const int best = static_cast<int>(std::min_element(curve.begin(), curve.end()) - curve.begin());
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 6; ++x) CHECK(argmin_disparity(out, y, x) == best);
  }
}

TEST_CASE("sgm rejects p2 < p1 and bad direction counts") {
  CostVolume v(2, 2, 2);
  CHECK_THROWS_AS(sgm(v, 2.0, 1.0), ConfigError);
  CHECK_THROWS_AS(sgm(v, -1.0, 1.0), ConfigError);
  CHECK_THROWS_AS(sgm(v, SgmParams{1.0, 2.0, 6}), ConfigError);
}

TEST_CASE("cross support arms match direct walking") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Image img = blocky_image(9, 11, rng);
    for (int max_arm : {1, 3, 5}) {
      const CrossSupport lib = compute_cross_support(img, CbcaParams{0.1, max_arm});
      const CrossSupport ref = brute_cross(img, 0.1, max_arm);
      CHECK(lib.arms == ref.arms);
      for (const auto& a : lib.arms)
        for (int len : a) CHECK(len < std::max(max_arm, 1));
    }
  }
  CHECK_THROWS_AS(compute_cross_support(Image(1, 2, 2), CbcaParams{0.1, 0}), ConfigError);
}

TEST_CASE("cbca with unit arms averages an outlier over its 3x3 support") {
  CostVolume v(5, 5, 1, 0.0);
  v.at(2, 2, 0) = 9.0;
  const CrossSupport unit = [] {
    CrossSupport c(5, 5, 1);
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 5; ++x) {
        auto& a = c.at(y, x);
        if (x == 0) a[kArmLeft] = 0;
        if (x == 4) a[kArmRight] = 0;
        if (y == 0) a[kArmUp] = 0;
        if (y == 4) a[kArmDown] = 0;
      }
    return c;
  }();
  const CostVolume out = cbca(v, unit, unit, 1);
  CHECK(out.at(2, 2, 0) == doctest::Approx(1.0));
  CHECK(out.at(1, 1, 0) == doctest::Approx(1.0));
  CHECK(out.at(3, 2, 0) == doctest::Approx(1.0));
  CHECK(out.at(0, 0, 0) == 0.0);
  CHECK(out.at(4, 4, 0) == 0.0);
  const CostVolume ref = brute_cbca(v, unit, unit);
  for (std::size_t i = 0; i < v.costs.size(); ++i) CHECK(out.costs[i] == doctest::Approx(ref.costs[i]).epsilon(1e-12));
}

TEST_CASE("cbca equals the brute-force support mean on random scenes") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const Image left = blocky_image(8, 12, rng);
    const Image right = blocky_image(8, 12, rng);
    const CostVolume v = random_volume(8, 12, 4, rng);
    const CbcaParams params{0.1, 4};
    const CrossSupport lc = brute_cross(left, params.tau, params.max_arm);
    const CrossSupport rc = brute_cross(right, params.tau, params.max_arm);
    CostVolume ref = v;
    for (int it = 0; it < 2; ++it) ref = brute_cbca(ref, lc, rc);
    const CostVolume out = cbca(v, left, right, 2, params);
    for (std::size_t i = 0; i < v.costs.size(); ++i) CHECK(out.costs[i] == doctest::Approx(ref.costs[i]).epsilon(1e-12));
    CHECK(out.valid == v.valid);
  }
}

TEST_CASE("cbca preserves constant volumes and is the identity for zero iterations") {
  std::mt19937_64 rng(5);
  const Image left = blocky_image(6, 8, rng), right = blocky_image(6, 8, rng);
  const CostVolume flat(6, 8, 3, -0.375);
  const CostVolume out = cbca(flat, left, right, 3, CbcaParams{0.1, 5});
  for (double c : out.costs) CHECK(c == doctest::Approx(-0.375).epsilon(1e-14));
  const CostVolume v = random_volume(6, 8, 3, rng);
  CHECK(cbca(v, left, right, 0, CbcaParams{}).costs == v.costs);
  CHECK_THROWS_AS(cbca(v, left, right, -1, CbcaParams{}), ConfigError);
  CHECK_THROWS_AS(cbca(v, CrossSupport(2, 2), CrossSupport(6, 8), 1), ConfigError);
}

TEST_CASE("normalize_tanh is elementwise tanh") {
  CostVolume v(1, 1, 3);
  v.at(0, 0, 0) = 0.0;
  v.at(0, 0, 1) = 40.0;
  v.at(0, 0, 2) = -0.5;
  v.valid[2] = 0;
  const CostVolume out = normalize_tanh(v);
  CHECK(out.at(0, 0, 0) == 0.0);
  CHECK(out.at(0, 0, 1) == doctest::Approx(1.0));
  CHECK(out.at(0, 0, 2) == doctest::Approx(-0.4621).epsilon(1e-4));
  CHECK(out.valid == v.valid);
}

TEST_CASE("postprocess schedule per mode and output range") {
  std::mt19937_64 rng(6);
  const Image left = blocky_image(10, 14, rng), right = blocky_image(10, 14, rng);
  CostVolume v = random_volume(10, 14, 5, rng);
  for (double& c : v.costs) c *= 5.0;
  PostprocessStats fast, accurate;
  const CostVolume f = postprocess(v, left, right, Mode::fast, PostprocessParams{}, &fast);
  const CostVolume a = postprocess(v, left, right, Mode::accurate, PostprocessParams{}, &accurate);
  CHECK(fast.cbca_iterations == 0);
  CHECK(fast.sgm_passes == 1);
  CHECK(accurate.cbca_iterations == 4);
  CHECK(accurate.sgm_passes == 1);
  for (const CostVolume* out : {&f, &a})
    for (double c : out->costs) {
      CHECK(c >= -1.0);
      CHECK(c <= 1.0);
    }
  // fast is exactly SGM followed by tanh
  const CostVolume ref = normalize_tanh(sgm(v, SgmParams{}));
  CHECK(f.costs == ref.costs);
}

TEST_CASE("cvol files round-trip costs as float32 and validity exactly") {
  std::mt19937_64 rng(7);
  const CostVolume v = random_volume(3, 5, 4, rng);
  const auto path = std::filesystem::temp_directory_path() / "resmatch_test.cvol";
  write_cvol(path, v);
  const CostVolume r = read_cvol(path);
  std::filesystem::remove(path);
  REQUIRE(r.same_shape(v));
  CHECK(r.valid == v.valid);
  for (std::size_t i = 0; i < v.costs.size(); ++i) CHECK(r.costs[i] == static_cast<double>(static_cast<float>(v.costs[i])));
  CHECK_THROWS_AS(read_cvol(std::filesystem::temp_directory_path() / "resmatch_missing.cvol"), InputError);
}
