#include "resmatch/gdn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>

#include "resmatch/errors.hpp"
#include "resmatch/nn/init.hpp"
#include "resmatch/nn/optim.hpp"

namespace resmatch {
namespace {

using nn::Param;
using nn::Tape;
using nn::Tensor;
using nn::TensorPtr;

constexpr int kBandRows = 32;

void validate(const GdnConfig& c) {
  if (c.dmax < 2) throw ConfigError("gdn: dmax must be at least 2");
  if (c.channels < 1 || c.conf_width < 1) throw ConfigError("gdn: layer widths must be positive");
}

int argmax(std::span<const double> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

// Mean over rows of -sum_i w_i * logp_i.
TensorPtr weighted_nll(Tape* tape, const TensorPtr& logp, std::vector<double> weights) {
  const std::size_t n = logp->dim(0), d = logp->dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < n * d; ++i) total -= weights[i] * (*logp)[i];
  auto out = nn::make_tensor({1}, total / static_cast<double>(n));
  if (tape) {
    tape->record([logp, out, weights = std::move(weights), n] {
      if (!out->has_grad()) return;
      const double g = out->grad()[0] / static_cast<double>(n);
      auto gl = logp->ensure_grad();
      for (std::size_t i = 0; i < gl.size(); ++i) gl[i] -= g * weights[i];
    });
  }
  return out;
}

// Mean binary cross-entropy on logits: softplus(z) - label * z.
TensorPtr binary_xent(Tape* tape, const TensorPtr& z, std::vector<double> labels) {
  const std::size_t n = z->size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += nn::softplus((*z)[i]) - labels[i] * (*z)[i];
  auto out = nn::make_tensor({1}, total / static_cast<double>(n));
  if (tape) {
    tape->record([z, out, labels = std::move(labels), n] {
      if (!out->has_grad()) return;
      const double g = out->grad()[0] / static_cast<double>(n);
      auto gz = z->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) gz[i] += g * (nn::sigmoid_scalar((*z)[i]) - labels[i]);
    });
  }
  return out;
}

TensorPtr stack(std::span<const DisparityPatch> data, std::span<const std::size_t> order, std::size_t begin,
                std::size_t count, std::vector<double>& gt) {
  const nn::Shape& s = data[order[begin]].costs.shape();
  auto batch = nn::make_tensor({count, s[0], s[1], s[2]});
  double* dst = batch->data().data();
  gt.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const DisparityPatch& p = data[order[begin + i]];
    std::copy(p.costs.data().begin(), p.costs.data().end(), dst);
    dst += p.costs.size();
    gt[i] = p.gt;
  }
  return batch;
}

}  // namespace

int GdnOutput::disparity() const { return scores.empty() ? 0 : argmax(scores); }

Gdn::Gdn(const GdnConfig& config, std::uint64_t seed) : config_(config) {
  validate(config);
  std::mt19937_64 rng(seed);
  std::size_t in = sz(config.dmax);
  const std::size_t c = sz(config.channels);
  for (int i = 0; i < kGdnConvLayers; ++i) {
    const std::string p = "gdn.conv" + std::to_string(i);
    conv_w.push_back(nn::uniform_param(p + ".w", {c, in, 3, 3}, in * 9, rng));
    conv_b.push_back(nn::uniform_param(p + ".b", {c}, in * 9, rng));
    in = c;
  }
  const std::size_t d = sz(config.dmax), h = sz(config.conf_width);
  fc3_w = nn::uniform_param("gdn.fc3.w", {d, c}, c, rng);
  fc3_b = nn::uniform_param("gdn.fc3.b", {d}, c, rng);
  fc4_w = nn::uniform_param("gdn.fc4.w", {h, d}, d, rng);
  fc4_b = nn::uniform_param("gdn.fc4.b", {h}, d, rng);
  fc5_w = nn::uniform_param("gdn.fc5.w", {1, h}, h, rng);
  fc5_b = nn::uniform_param("gdn.fc5.b", {1}, h, rng);
}

Gdn Gdn::zeros(const GdnConfig& config) {
  Gdn net(config, 0);
  for (auto& p : net.params()) std::fill(p.value->data().begin(), p.value->data().end(), 0.0);
  return net;
}

TensorPtr Gdn::head_logits(Tape* tape, const TensorPtr& scores) const {
  const TensorPtr h = nn::relu(tape, nn::fully_connected(tape, scores, fc4_w, fc4_b));
  const TensorPtr z = nn::fully_connected(tape, h, fc5_w, fc5_b);
  return nn::reshape(tape, z, {scores->dim(0)});
}

GdnBatch Gdn::forward(Tape* tape, const TensorPtr& patches) const {
  if (patches->rank() != 4 || patches->dim(2) != sz(kGdnPatch) || patches->dim(3) != sz(kGdnPatch)) {
    throw ConfigError("gdn expects [N,D,9,9] patches, got " + nn::shape_to_string(patches->shape()));
  }
  if (patches->dim(1) != sz(config_.dmax)) {
    throw ConfigError("gdn: patch has " + std::to_string(patches->dim(1)) + " disparities, network expects " +
                      std::to_string(config_.dmax));
  }
  TensorPtr y = patches;
  for (int i = 0; i < kGdnConvLayers; ++i) y = nn::relu(tape, nn::conv2d(tape, y, conv_w[sz(i)], conv_b[sz(i)], 0));
  const std::size_t n = patches->dim(0);
  y = nn::reshape(tape, y, {n, sz(config_.channels)});
  GdnBatch out;
  out.scores = nn::fully_connected(tape, y, fc3_w, fc3_b);
  // Detached copy: the head is trained on the scores without steering them.
  auto detached = nn::make_tensor(out.scores->shape(), std::vector<double>(out.scores->data().begin(),
                                                                           out.scores->data().end()));
  out.conf_logit = head_logits(tape, detached);
  return out;
}

GdnOutput Gdn::forward(const Tensor& patch) const {
  if (patch.rank() != 3) throw ConfigError("gdn expects a [D,9,9] patch");
  auto batch = nn::make_tensor({1, patch.dim(0), patch.dim(1), patch.dim(2)},
                               std::vector<double>(patch.data().begin(), patch.data().end()));
  const GdnBatch b = forward(nullptr, batch);
  GdnOutput out;
  out.scores.assign(b.scores->data().begin(), b.scores->data().end());
  out.confidence = nn::sigmoid_scalar((*b.conf_logit)[0]);
  return out;
}

GdnPrediction Gdn::predict_image(const CostVolume& volume) const {
  if (volume.dmax != config_.dmax) {
    throw ConfigError("gdn: volume has " + std::to_string(volume.dmax) + " disparities, network expects " +
                      std::to_string(config_.dmax));
  }
  const int h = volume.height, w = volume.width, dm = volume.dmax, r = kGdnPatch / 2;
  const int wp = w + 2 * r;
  GdnPrediction pred;
  pred.disparity = DisparityMap(h, w, 0.0, true);
  pred.confidence = ConfidenceMap(h, w, 0.0);
  pred.scores.assign(static_cast<std::size_t>(h) * w * dm, 0.0);
  const std::size_t c = sz(config_.channels);

  for (int y0 = 0; y0 < h; y0 += kBandRows) {
    const int bh = std::min(kBandRows, h - y0);
    const int hp = bh + 2 * r;
    auto input = nn::make_tensor({1, sz(dm), sz(hp), sz(wp)});
    for (int d = 0; d < dm; ++d) {
      for (int yy = 0; yy < hp; ++yy) {
        const int sy = std::clamp(y0 + yy - r, 0, h - 1);
        double* row = input->data().data() + (sz(d) * sz(hp) + sz(yy)) * sz(wp);
        for (int xx = 0; xx < wp; ++xx) row[xx] = volume.at(sy, std::clamp(xx - r, 0, w - 1), d);
      }
    }
    TensorPtr feat = input;
    for (int i = 0; i < kGdnConvLayers; ++i) {
      feat = nn::relu(nullptr, nn::conv2d(nullptr, feat, conv_w[sz(i)], conv_b[sz(i)], 0));
    }
    const std::size_t npx = sz(bh) * sz(w);
    auto rows = nn::make_tensor({npx, c});
    for (std::size_t k = 0; k < c; ++k) {
      for (std::size_t i = 0; i < npx; ++i) (*rows)[i * c + k] = (*feat)[k * npx + i];
    }
    const TensorPtr scores = nn::fully_connected(nullptr, rows, fc3_w, fc3_b);
    const TensorPtr z = head_logits(nullptr, scores);
    for (std::size_t i = 0; i < npx; ++i) {
      const int y = y0 + static_cast<int>(i / sz(w)), x = static_cast<int>(i % sz(w));
      std::span<const double> s(scores->data().data() + i * sz(dm), sz(dm));
      std::copy(s.begin(), s.end(), pred.scores.begin() + static_cast<std::ptrdiff_t>(volume.index(y, x, 0)));
      pred.disparity.at(y, x) = argmax(s);
      pred.confidence.at(y, x) = nn::sigmoid_scalar((*z)[i]);
    }
  }
  return pred;
}

std::vector<Param> Gdn::trunk_params() const {
  std::vector<Param> out;
  for (std::size_t i = 0; i < conv_w.size(); ++i) {
    out.push_back(conv_w[i]);
    out.push_back(conv_b[i]);
  }
  out.push_back(fc3_w);
  out.push_back(fc3_b);
  return out;
}

std::vector<Param> Gdn::head_params() const { return {fc4_w, fc4_b, fc5_w, fc5_b}; }

std::vector<Param> Gdn::params() const {
  std::vector<Param> out = trunk_params();
  for (const auto& p : head_params()) out.push_back(p);
  return out;
}

nn::Checkpoint Gdn::to_checkpoint() const {
  nn::Checkpoint ck;
  ck.model = "gdn";
  ck.meta["dmax"] = std::to_string(config_.dmax);
  ck.meta["channels"] = std::to_string(config_.channels);
  ck.meta["conf_width"] = std::to_string(config_.conf_width);
  using nn::LayerKind;
  for (int i = 0; i < kGdnConvLayers; ++i) {
    ck.layers.push_back({LayerKind::conv2d, "gdn.conv" + std::to_string(i), 3, 0, config_.channels});
    ck.layers.push_back({LayerKind::relu, "", 0, 0, 0});
  }
  ck.layers.push_back({LayerKind::fully_connected, "gdn.fc3", 0, 0, config_.dmax});
  ck.layers.push_back({LayerKind::log_softmax, "", 0, 0, 0});
  ck.layers.push_back({LayerKind::fully_connected, "gdn.fc4", 0, 0, config_.conf_width});
  ck.layers.push_back({LayerKind::relu, "", 0, 0, 0});
  ck.layers.push_back({LayerKind::fully_connected, "gdn.fc5", 0, 0, 1});
  ck.layers.push_back({LayerKind::sigmoid, "", 0, 0, 0});
  for (const auto& p : params()) ck.params.emplace_back(p.name, *p.value);
  return ck;
}

Gdn Gdn::from_checkpoint(const nn::Checkpoint& ck) {
  if (ck.model != "gdn") throw InputError("checkpoint holds model '" + ck.model + "', expected 'gdn'");
  GdnConfig c;
  try {
    c.dmax = std::stoi(ck.meta_value("dmax"));
    c.channels = std::stoi(ck.meta_value("channels"));
    c.conf_width = std::stoi(ck.meta_value("conf_width"));
  } catch (const std::invalid_argument&) {
    throw InputError("checkpoint: malformed gdn metadata");
  }
  Gdn net(c, 0);
  for (const auto& p : net.params()) {
    const Tensor& stored = ck.param(p.name);
    if (stored.shape() != p.value->shape()) throw InputError("checkpoint: parameter " + p.name + " has wrong shape");
    std::copy(stored.data().begin(), stored.data().end(), p.value->data().begin());
  }
  return net;
}

double smooth_target_weight(double d, double gt) {
  const double e = std::abs(d - gt);
  if (e <= 1.0) return 0.65;
  if (e <= 2.0) return 0.25;
  if (e <= 3.0) return 0.1;
  return 0.0;
}

double weighted_xent_loss(std::span<const double> scores, double gt) {
  const auto dm = static_cast<double>(scores.size());
  if (scores.empty()) throw ConfigError("weighted_xent_loss: empty score vector");
  if (!(gt >= 0.0 && gt <= dm - 1.0)) throw InputError("weighted_xent_loss: ground truth outside [0, D-1]");
  const double m = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double s : scores) z += std::exp(s - m);
  const double log_z = m + std::log(z);
  double loss = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    loss -= smooth_target_weight(static_cast<double>(i), gt) * (scores[i] - log_z);
  }
  return loss;
}

int reflective_label(std::span<const double> scores, double gt) {
  return std::abs(static_cast<double>(argmax(scores)) - gt) < 1.0 ? 1 : 0;
}

double gdn_learning_rate(const GdnTrainConfig& cfg, int epoch) {
  return epoch >= cfg.decimate_epoch ? cfg.lr * cfg.decimate_factor : cfg.lr;
}

TensorPtr gdn_batch_loss(Tape* tape, const Gdn& net, const TensorPtr& patches, std::span<const double> gt,
                         const GdnTrainConfig& cfg, double* positive_fraction) {
  const GdnBatch out = net.forward(tape, patches);
  const std::size_t n = patches->dim(0), dm = patches->dim(1);
  if (gt.size() != n) throw ConfigError("gdn loss: one ground-truth value per patch required");
  std::vector<double> weights(n * dm);
  std::vector<double> labels(n);
  double positives = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(gt[i] >= 0.0 && gt[i] <= static_cast<double>(dm) - 1.0)) {
      throw InputError("gdn loss: ground truth outside [0, D-1]");
    }
    for (std::size_t d = 0; d < dm; ++d) weights[i * dm + d] = smooth_target_weight(static_cast<double>(d), gt[i]);
    labels[i] = reflective_label({out.scores->data().data() + i * dm, dm}, gt[i]);
    positives += labels[i];
  }
  if (positive_fraction) *positive_fraction = positives / static_cast<double>(n);
  const TensorPtr xent = weighted_nll(tape, nn::log_softmax(tape, out.scores), std::move(weights));
  const TensorPtr bce = binary_xent(tape, out.conf_logit, std::move(labels));
  return nn::weighted_sum(tape, xent, cfg.xent_weight, bce, cfg.reflective_weight);
}

GdnTrainLog gdn_train(Gdn& net, std::span<const DisparityPatch> data, const GdnTrainConfig& cfg) {
  if (data.empty()) throw InputError("gdn_train: dataset is empty");
  if (cfg.epochs < 0 || cfg.batch_size < 1 || cfg.lr <= 0.0) throw ConfigError("gdn_train: bad schedule");
  const nn::Shape shape{sz(net.config().dmax), sz(kGdnPatch), sz(kGdnPatch)};
  for (const auto& p : data) {
    if (p.costs.shape() != shape) throw InputError("gdn_train: patch shape must be " + nn::shape_to_string(shape));
  }
  nn::SgdMomentum opt(net.params(), cfg.momentum);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> gt;
  GdnTrainLog log;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    GdnEpochLog e;
    e.epoch = epoch;
    e.lr = gdn_learning_rate(cfg, epoch);
    for (std::size_t b = 0; b < data.size(); b += bs) {
      const std::size_t count = std::min(bs, data.size() - b);
      const TensorPtr patches = stack(data, order, b, count, gt);
      Tape tape;
      opt.zero_grad();
      double pos = 0.0;
      const TensorPtr loss = gdn_batch_loss(&tape, net, patches, gt, cfg, &pos);
      if (!std::isfinite((*loss)[0])) throw NumericError("gdn_train: loss became non-finite");
      tape.backward(loss);
      opt.step(e.lr);
      e.loss += (*loss)[0] * static_cast<double>(count);
      e.positive_fraction += pos * static_cast<double>(count);
    }
    e.loss /= static_cast<double>(data.size());
    e.positive_fraction /= static_cast<double>(data.size());

    // Post-epoch pass over the training set.
    std::vector<std::size_t> seq(data.size());
    std::iota(seq.begin(), seq.end(), 0);
    double correct = 0.0, conf = 0.0, xent = 0.0, refl = 0.0;
    for (std::size_t b = 0; b < data.size(); b += bs) {
      const std::size_t count = std::min(bs, data.size() - b);
      const GdnBatch out = net.forward(nullptr, stack(data, seq, b, count, gt));
      const std::size_t dm = sz(net.config().dmax);
      for (std::size_t i = 0; i < count; ++i) {
        std::span<const double> s(out.scores->data().data() + i * dm, dm);
        const int label = reflective_label(s, gt[i]);
        const double z = (*out.conf_logit)[i];
        correct += label;
        conf += nn::sigmoid_scalar(z);
        xent += weighted_xent_loss(s, gt[i]);
        refl += nn::softplus(z) - label * z;
      }
    }
    const auto n = static_cast<double>(data.size());
    e.train_accuracy = correct / n;
    e.mean_confidence = conf / n;
    e.xent = xent / n;
    e.reflective = refl / n;
    log.epochs.push_back(e);
  }
  return log;
}

void GdnTrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw InputError("cannot write training log " + path.string());
  os << "epoch,lr,loss,xent,reflective,positive_fraction,train_accuracy,mean_confidence\n" << std::setprecision(10);
  for (const auto& e : epochs) {
    os << e.epoch << "," << e.lr << "," << e.loss << "," << e.xent << "," << e.reflective << ","
       << e.positive_fraction << "," << e.train_accuracy << "," << e.mean_confidence << "\n";
  }
}

}  // namespace resmatch
