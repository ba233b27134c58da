#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "resmatch/errors.hpp"
#include "resmatch/gdn.hpp"
#include "resmatch/nn/tape.hpp"

using namespace resmatch;

namespace {

const GdnConfig kSmall{8, 6, 6};

nn::Tensor random_patch(int dmax, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  nn::Tensor t({std::size_t(dmax), std::size_t(kGdnPatch), std::size_t(kGdnPatch)});
  for (double& v : t.data()) v = u(rng);
  return t;
}

nn::TensorPtr stack(const std::vector<nn::Tensor>& patches) {
  const auto& s = patches[0].shape();
  auto out = nn::make_tensor({patches.size(), s[0], s[1], s[2]});
  std::size_t k = 0;
  for (const auto& p : patches)
    for (double v : p.data()) (*out)[k++] = v;
  return out;
}

// Noise patch with one channel pushed strongly negative; the disparity is that channel.
DisparityPatch toy_patch(int dmax, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, dmax - 1);
  DisparityPatch p{random_patch(dmax, rng, -0.2, 0.4), 0.0};
  const int k = pick(rng);
  for (int y = 0; y < kGdnPatch; ++y)
    for (int x = 0; x < kGdnPatch; ++x) p.costs[(std::size_t(k) * kGdnPatch + y) * kGdnPatch + x] = -0.9;
  p.gt = k;
  return p;
}

std::vector<double> grads_of(const std::vector<nn::Param>& ps) {
  std::vector<double> g;
  for (const auto& p : ps) g.insert(g.end(), p.value->grad().begin(), p.value->grad().end());
  return g;
}

}  // namespace

TEST_CASE("smooth target weights follow the distance bins") {
  const double expected[] = {0.0, 0.0, 0.1, 0.25, 0.65, 0.65, 0.65, 0.25, 0.1, 0.0, 0.0};
  for (int d = 0; d <= 10; ++d) CHECK(smooth_target_weight(d, 5.0) == expected[d]);
  // real-valued ground truth: |d - 5.5| <= 3 covers 3..8
  for (int d = 0; d <= 10; ++d) CHECK((smooth_target_weight(d, 5.5) > 0.0) == (d >= 3 && d <= 8));
  CHECK(smooth_target_weight(5.0, 5.5) == 0.65);
  CHECK(smooth_target_weight(4.0, 5.5) == 0.25);
  CHECK(smooth_target_weight(3.0, 5.5) == 0.1);
  CHECK(smooth_target_weight(7.0, 5.0) == 0.25);
  CHECK(smooth_target_weight(8.0, 5.0) == 0.1);
}

TEST_CASE("weighted xent with uniform scores is the weight sum times log D") {
  const std::vector<double> scores(8, 0.3);
  const double sum = 0.1 + 0.25 + 0.65 + 0.65 + 0.65 + 0.25 + 0.1;
  CHECK(weighted_xent_loss(scores, 4.0) == doctest::Approx(sum * std::log(8.0)).epsilon(1e-12));
  CHECK_THROWS_AS(weighted_xent_loss(scores, -0.5), InputError);
  CHECK_THROWS_AS(weighted_xent_loss(scores, 7.5), InputError);
  CHECK_NOTHROW(weighted_xent_loss(scores, 7.0));
}

TEST_CASE("weighted xent is minimised by the normalised weights") {
  const int dm = 6;
  const double gt = 2.3;
  std::vector<double> w(dm);
  double total = 0.0;
  for (int d = 0; d < dm; ++d) total += w[std::size_t(d)] = smooth_target_weight(d, gt);
  // Gradient descent on the scores: d loss / d s_i = total * softmax_i - w_i.
  std::vector<double> s(dm, 0.0);
  for (int it = 0; it < 20000; ++it) {
    const double m = *std::max_element(s.begin(), s.end());
    double z = 0.0;
    for (double v : s) z += std::exp(v - m);
    for (int i = 0; i < dm; ++i) s[std::size_t(i)] -= 0.5 * (total * std::exp(s[std::size_t(i)] - m) / z - w[std::size_t(i)]);
  }
  // Bins with zero weight drift toward -inf; the closed form floors them.
  std::vector<double> closed(dm);
  for (int d = 0; d < dm; ++d) closed[std::size_t(d)] = std::log(std::max(w[std::size_t(d)] / total, 1e-300));
  const double numeric = weighted_xent_loss(s, gt);
  const double optimum = weighted_xent_loss(closed, gt);
  CHECK(optimum <= numeric + 1e-9);
  CHECK(numeric == doctest::Approx(optimum).epsilon(1e-3));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> r(dm);
    for (double& v : r) v = 3.0 * n01(rng);
    CHECK(weighted_xent_loss(r, gt) >= optimum - 1e-12);
  }
}

TEST_CASE("reflective label requires less than one pixel of error") {
  std::vector<double> scores(10, 0.0);
  scores[7] = 1.0;
  CHECK(reflective_label(scores, 7.0) == 1);
  CHECK(reflective_label(scores, 8.0) == 0);
  CHECK(reflective_label(scores, 7.6) == 1);
  CHECK(reflective_label(scores, 6.0) == 0);
}

TEST_CASE("learning rate is decimated from epoch 12 and loss weights sum to one") {
  const GdnTrainConfig cfg;
  for (int e = 1; e <= 11; ++e) CHECK(gdn_learning_rate(cfg, e) == 0.003);
  for (int e = 12; e <= 15; ++e) CHECK(gdn_learning_rate(cfg, e) == doctest::Approx(0.0003).epsilon(1e-12));
  CHECK(cfg.xent_weight + cfg.reflective_weight == doctest::Approx(1.0));
  CHECK(cfg.epochs == 15);
  CHECK(cfg.batch_size == 128);
  CHECK(cfg.momentum == 0.9);
}

TEST_CASE("zero network gives uniform scores and confidence one half") {
  const Gdn net = Gdn::zeros(kSmall);
  std::mt19937_64 rng(2);
  const GdnOutput out = net.forward(random_patch(8, rng));
  for (double s : out.scores) CHECK(s == out.scores[0]);
  CHECK(out.confidence == 0.5);
  CHECK(out.disparity() == 0);
}

TEST_CASE("forward is deterministic and rejects a disparity mismatch") {
  const Gdn net(kSmall, 3);
  std::mt19937_64 rng(3);
  const nn::Tensor p = random_patch(8, rng);
  const GdnOutput a = net.forward(p), b = net.forward(p);
  CHECK(a.scores == b.scores);
  CHECK(a.confidence == b.confidence);
  CHECK_THROWS_AS(net.forward(random_patch(6, rng)), ConfigError);
  CHECK_THROWS_AS(net.predict_image(CostVolume(4, 4, 6)), ConfigError);
  CHECK_THROWS_AS(Gdn(GdnConfig{1, 4, 4}, 1), ConfigError);
}

TEST_CASE("batched forward equals per-patch forward") {
  const Gdn net(kSmall, 4);
  std::mt19937_64 rng(4);
  std::vector<nn::Tensor> patches;
  for (int i = 0; i < 5; ++i) patches.push_back(random_patch(8, rng));
  const GdnBatch batch = net.forward(nullptr, stack(patches));
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const GdnOutput one = net.forward(patches[i]);
    for (std::size_t d = 0; d < 8; ++d) CHECK((*batch.scores)[i * 8 + d] == doctest::Approx(one.scores[d]).epsilon(1e-12));
    CHECK(1.0 / (1.0 + std::exp(-(*batch.conf_logit)[i])) == doctest::Approx(one.confidence).epsilon(1e-12));
  }
}

TEST_CASE("image prediction equals forward on edge-replicated windows") {
  const Gdn net(kSmall, 5);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  CostVolume v(7, 10, 8);
  for (double& c : v.costs) c = u(rng);
  const GdnPrediction pred = net.predict_image(v);
  REQUIRE(pred.scores.size() == v.costs.size());
  const int r = kGdnPatch / 2;
  for (int y = 0; y < v.height; ++y)
    for (int x = 0; x < v.width; ++x) {
      nn::Tensor patch({8, std::size_t(kGdnPatch), std::size_t(kGdnPatch)});
      for (int d = 0; d < 8; ++d)
        for (int dy = 0; dy < kGdnPatch; ++dy)
          for (int dx = 0; dx < kGdnPatch; ++dx) {
            const int yy = std::clamp(y + dy - r, 0, v.height - 1), xx = std::clamp(x + dx - r, 0, v.width - 1);
            patch[(std::size_t(d) * kGdnPatch + dy) * kGdnPatch + dx] = v.at(yy, xx, d);
          }
      const GdnOutput one = net.forward(patch);
      for (int d = 0; d < 8; ++d)
        CHECK(pred.scores[v.index(y, x, d)] == doctest::Approx(one.scores[std::size_t(d)]).epsilon(1e-10));
      CHECK(pred.disparity.at(y, x) == one.disparity());
      CHECK(pred.confidence.at(y, x) == doctest::Approx(one.confidence).epsilon(1e-10));
      CHECK(pred.confidence.at(y, x) >= 0.0);
      CHECK(pred.confidence.at(y, x) <= 1.0);
    }
}

TEST_CASE("constant volume gives a constant disparity map") {
  const Gdn net(kSmall, 6);
  CostVolume v(6, 6, 8, 0.0);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x)
      for (int d = 0; d < 8; ++d) v.at(y, x, d) = 0.1 * d - 0.4;
  const GdnPrediction pred = net.predict_image(v);
  for (double d : pred.disparity.values) CHECK(d == pred.disparity.values[0]);
  for (double c : pred.confidence.values) CHECK(c == doctest::Approx(pred.confidence.values[0]).epsilon(1e-12));
}

TEST_CASE("reflective label flips when FC3 changes with the ground truth fixed") {
  Gdn net = Gdn::zeros(kSmall);
  std::mt19937_64 rng(7);
  const nn::Tensor p = random_patch(8, rng);
  net.fc3_b.value->data()[3] = 1.0;
  CHECK(reflective_label(net.forward(p).scores, 3.0) == 1);
  net.fc3_b.value->data()[6] = 2.0;
  CHECK(reflective_label(net.forward(p).scores, 3.0) == 0);
}

TEST_CASE("reflective loss leaves trunk and FC3 gradients bit-identical") {
  std::mt19937_64 rng(8);
  std::vector<nn::Tensor> patches;
  std::vector<double> gt;
  for (int i = 0; i < 6; ++i) {
    patches.push_back(random_patch(8, rng));
    gt.push_back(i % 8 + 0.25);
  }
  const auto batch = stack(patches);
  auto trunk_grads = [&](double reflective_weight, std::vector<double>* head) {
    Gdn net(kSmall, 9);
    GdnTrainConfig cfg;
    cfg.reflective_weight = reflective_weight;
    nn::Tape tape;
    tape.backward(gdn_batch_loss(&tape, net, batch, gt, cfg));
    if (head) *head = grads_of(net.head_params());
    return grads_of(net.trunk_params());
  };
  std::vector<double> head_on, head_off;
  const auto with = trunk_grads(0.15, &head_on);
  const auto without = trunk_grads(0.0, &head_off);
  CHECK(with == without);
  double on = 0.0;
  for (double g : head_on) on += std::abs(g);
  CHECK(on > 0.0);
}

TEST_CASE("toy training: strongly negative channel wins and confidence rises") {
  std::mt19937_64 rng(10);
  std::vector<DisparityPatch> train, held_out;
  for (int i = 0; i < 800; ++i) train.push_back(toy_patch(8, rng));
  for (int i = 0; i < 200; ++i) held_out.push_back(toy_patch(8, rng));
  Gdn net(kSmall, 11);
  GdnTrainConfig cfg;
  cfg.epochs = 12;
  cfg.batch_size = 32;
  cfg.lr = 0.03;
  cfg.decimate_epoch = 11;
  const GdnTrainLog log = gdn_train(net, train, cfg);
  REQUIRE(log.epochs.size() == 12);
  int hits = 0;
  double conf = 0.0;
  for (const auto& p : held_out) {
    const GdnOutput out = net.forward(p.costs);
    hits += out.disparity() == static_cast<int>(p.gt);
    conf += out.confidence;
  }
  CHECK(hits >= 0.95 * held_out.size());
  const auto& last = log.epochs.back();
  CHECK(last.train_accuracy > 0.99);
  // labels are recomputed each pass, so the positive share tracks accuracy
  CHECK(last.positive_fraction == doctest::Approx(last.train_accuracy).epsilon(0.05));
  CHECK(last.mean_confidence > log.epochs.front().mean_confidence);
  CHECK(conf / held_out.size() > 0.8);
  CHECK(log.epochs[10].lr == doctest::Approx(0.003));
}

TEST_CASE("gdn training rejects empty data and checkpoints round-trip") {
  Gdn net(kSmall, 12);
  CHECK_THROWS_AS(gdn_train(net, std::span<const DisparityPatch>{}, GdnTrainConfig{}), InputError);
  std::stringstream ss;
  nn::write_checkpoint(ss, net.to_checkpoint());
  const Gdn back = Gdn::from_checkpoint(nn::read_checkpoint(ss));
  CHECK(back.config().dmax == 8);
  std::mt19937_64 rng(12);
  const nn::Tensor p = random_patch(8, rng);
  CHECK(back.forward(p).scores == net.forward(p).scores);
  CHECK(back.forward(p).confidence == net.forward(p).confidence);
  nn::Checkpoint wrong = net.to_checkpoint();
  wrong.model = "matchnet";
  CHECK_THROWS_AS(Gdn::from_checkpoint(wrong), InputError);
}
