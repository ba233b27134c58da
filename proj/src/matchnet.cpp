#include "resmatch/matchnet.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>

#include "resmatch/errors.hpp"
#include "resmatch/nn/init.hpp"
#include "resmatch/nn/optim.hpp"

namespace resmatch {
namespace {

using nn::Param;
using nn::Shape;
using nn::Tape;
using nn::Tensor;
using nn::TensorPtr;

constexpr std::size_t kDescribeChunk = 256;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void validate(const MatchNetConfig& c) {
  if (c.input_channels < 1) throw ConfigError("matchnet: input_channels must be positive");
  if (c.feature_channels < 1) throw ConfigError("matchnet: feature_channels must be positive");
  if (c.decision_layers < 0) throw ConfigError("matchnet: decision_layers must be non-negative");
  if (c.decision_width < 1) throw ConfigError("matchnet: decision_width must be positive");
}

Param conv_weights(const std::string& name, int out, int in, std::mt19937_64& rng) {
  const auto o = static_cast<std::size_t>(out), i = static_cast<std::size_t>(in);
  return nn::uniform_param(name, {o, i, 3, 3}, i * 9, rng);
}

Param conv_bias(const std::string& name, int out, int in, std::mt19937_64& rng) {
  return nn::uniform_param(name, {static_cast<std::size_t>(out)}, static_cast<std::size_t>(in) * 9, rng);
}

std::string flag(bool b) { return b ? "1" : "0"; }

bool parse_flag(const std::string& s) {
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  throw InputError("checkpoint: bad boolean '" + s + "'");
}

int parse_int(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InputError(std::string("checkpoint: bad integer for ") + what + ": '" + s + "'");
  }
}

// Copies the receptive-field windows with top-left corners at the given
// flattened output positions into a batch [n, C, rf, rf].
TensorPtr gather_windows(const Tensor& image, std::size_t out_w, int rf, std::size_t first, std::size_t count) {
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2), r = static_cast<std::size_t>(rf);
  auto batch = nn::make_tensor({count, c, r, r});
  double* dst = batch->data().data();
  const double* src = image.data().data();
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t oy = (first + i) / out_w, ox = (first + i) % out_w;
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t ky = 0; ky < r; ++ky) {
        const double* row = src + (ch * h + oy + ky) * w + ox;
        std::copy(row, row + r, dst);
        dst += r;
      }
    }
  }
  return batch;
}

void require_descriptor_map(const Tensor& t, const char* which) {
  if (t.rank() != 3) throw ConfigError(std::string("cost volume: ") + which + " descriptors must be [F,H,W]");
}

// Reference-view volume: the pair for (x, d) is (ref(x), other(x - sign * d)).
// With sign = +1 the reference is the left view; with -1 it is the right view
// and the decision input keeps the [left; right] order.
CostVolume volume_from_descriptors(const MatchNet& net, const Tensor& ref, const Tensor& other, int dmax, int sign,
                                   CostVolumeStats* stats) {
  require_descriptor_map(ref, "reference");
  require_descriptor_map(other, "matching");
  if (ref.shape() != other.shape()) throw ConfigError("cost volume: descriptor maps differ in shape");
  if (dmax < 1) throw ConfigError("cost volume: dmax must be at least 1");
  const std::size_t f = ref.dim(0), h = ref.dim(1), w = ref.dim(2);
  const std::size_t plane = h * w;
  const int hi = static_cast<int>(h), wi = static_cast<int>(w);
  CostVolume vol(hi, wi, dmax, 0.0);

  // Pixel-major copies so each descriptor is contiguous.
  std::vector<double> ref_px(f * plane), other_px(f * plane);
  for (std::size_t k = 0; k < f; ++k) {
    for (std::size_t i = 0; i < plane; ++i) {
      ref_px[i * f + k] = ref[k * plane + i];
      other_px[i * f + k] = other[k * plane + i];
    }
  }

  const auto t0 = std::chrono::steady_clock::now();
  const bool accurate = net.config().mode == Mode::accurate;
  const bool printed = net.config().xent_as_printed;
  if (accurate && !net.decision.initialized()) throw StateError("cost volume: decision network is not initialized");
  if (accurate && net.decision.descriptor_size() != static_cast<int>(f)) {
    throw ConfigError("cost volume: descriptor size does not match the decision network");
  }
  for (int d = 0; d < dmax; ++d) {
    std::vector<std::size_t> idx;
    std::vector<std::size_t> other_idx;
    for (int y = 0; y < hi; ++y) {
      for (int x = 0; x < wi; ++x) {
        const int xo = x - sign * d;
        if (xo < 0 || xo >= wi) {
          vol.valid[vol.index(y, x, d)] = 0;
          continue;
        }
        idx.push_back(static_cast<std::size_t>(y) * w + x);
        other_idx.push_back(static_cast<std::size_t>(y) * w + xo);
      }
    }
    if (!accurate) {
      for (std::size_t j = 0; j < idx.size(); ++j) {
        const double* a = ref_px.data() + idx[j] * f;
        const double* b = other_px.data() + other_idx[j] * f;
        vol.costs[idx[j] * dmax + d] = -std::inner_product(a, a + f, b, 0.0);
      }
      continue;
    }
    if (stats) ++stats->decision_passes;
    if (idx.empty()) continue;
    auto pairs = nn::make_tensor({idx.size(), 2 * f});
    double* p = pairs->data().data();
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const double* a = ref_px.data() + idx[j] * f;
      const double* b = other_px.data() + other_idx[j] * f;
      const double* left = sign > 0 ? a : b;
      const double* right = sign > 0 ? b : a;
      std::copy(left, left + f, p);
      std::copy(right, right + f, p + f);
      p += 2 * f;
    }
    const TensorPtr z = net.decision.logits(nullptr, pairs);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      vol.costs[idx[j] * dmax + d] = -match_probability(nn::sigmoid_scalar((*z)[j]), printed);
    }
  }
  if (stats) stats->decision_seconds += seconds_since(t0);

  double fill = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < vol.costs.size(); ++i) {
    if (vol.valid[i]) fill = std::max(fill, vol.costs[i]);
  }
  if (!std::isfinite(fill)) fill = 0.0;
  for (std::size_t i = 0; i < vol.costs.size(); ++i) {
    if (!vol.valid[i]) vol.costs[i] = fill;
  }
  return vol;
}

TensorPtr stack_patches(std::span<const PatchPairSample> data, std::span<const std::size_t> order,
                        std::size_t begin, std::size_t count, const Shape& patch_shape) {
  const std::size_t ps = nn::shape_size(patch_shape);
  auto batch = nn::make_tensor({3 * count, patch_shape[0], patch_shape[1], patch_shape[2]});
  double* dst = batch->data().data();
  for (int part = 0; part < 3; ++part) {
    for (std::size_t i = 0; i < count; ++i) {
      const PatchPairSample& s = data[order[begin + i]];
      const Tensor& t = part == 0 ? s.left : part == 1 ? s.positive : s.negative;
      std::copy(t.data().begin(), t.data().end(), dst);
      dst += ps;
    }
  }
  return batch;
}

TensorPtr batch_loss(Tape* tape, const MatchNet& net, const TensorPtr& stacked, std::size_t count,
                     const MatcherTrainConfig& cfg) {
  const TensorPtr u = net.description.embed(tape, stacked);
  const TensorPtr ul = nn::slice_rows(tape, u, 0, count);
  const TensorPtr up = nn::slice_rows(tape, u, count, count);
  const TensorPtr un = nn::slice_rows(tape, u, 2 * count, count);
  const TensorPtr s_pos = nn::row_dot(tape, ul, up);
  const TensorPtr s_neg = nn::row_dot(tape, ul, un);
  if (net.config().mode == Mode::fast) {
    // The fast pathway trains the descriptor dot product with the hinge alone.
    return hybrid_loss_from_logits(tape, nullptr, nullptr, s_pos, s_neg, 0.0, cfg.margin, true);
  }
  const TensorPtr z_pos = net.decision.logits(tape, nn::concat_cols(tape, ul, up));
  const TensorPtr z_neg = net.decision.logits(tape, nn::concat_cols(tape, ul, un));
  return hybrid_loss_from_logits(tape, z_pos, z_neg, s_pos, s_neg, cfg.alpha, cfg.margin,
                                 net.config().xent_as_printed);
}

Shape check_dataset(const MatchNet& net, std::span<const PatchPairSample> data) {
  if (data.empty()) throw InputError("train_matcher: dataset is empty");
  const auto rf = static_cast<std::size_t>(net.description.receptive_field());
  const Shape shape{static_cast<std::size_t>(net.description.input_channels()), rf, rf};
  for (const auto& s : data) {
    if (s.left.shape() != shape || s.positive.shape() != shape || s.negative.shape() != shape) {
      throw InputError("train_matcher: patch shape does not match " + nn::shape_to_string(shape));
    }
  }
  return shape;
}

void check_train_config(const MatcherTrainConfig& cfg) {
  if (cfg.epochs < 0) throw ConfigError("train_matcher: epochs must be non-negative");
  if (cfg.batch_size < 1) throw ConfigError("train_matcher: batch_size must be positive");
  if (cfg.lr <= 0.0) throw ConfigError("train_matcher: lr must be positive");
  if (cfg.alpha < 0.0 || cfg.alpha > 1.0) throw ConfigError("train_matcher: alpha must lie in [0,1]");
}

}  // namespace

// ---- blocks -------------------------------------------------------------

InnerBlock::InnerBlock(const std::string& prefix, int channels, std::mt19937_64& rng)
    : conv1_w(conv_weights(prefix + ".conv1.w", channels, channels, rng)),
      conv1_b(conv_bias(prefix + ".conv1.b", channels, channels, rng)),
      conv2_w(conv_weights(prefix + ".conv2.w", channels, channels, rng)),
      conv2_b(conv_bias(prefix + ".conv2.b", channels, channels, rng)),
      lambda(nn::constant_param(prefix + ".lambda", {1}, 1.0)) {}

TensorPtr InnerBlock::residual(Tape* tape, const TensorPtr& y) const {
  const TensorPtr h = nn::relu(tape, nn::conv2d(tape, y, conv1_w, conv1_b, 1));
  return nn::relu(tape, nn::conv2d(tape, h, conv2_w, conv2_b, 1));
}

TensorPtr InnerBlock::forward(Tape* tape, const TensorPtr& y) const {
  return nn::highway_add(tape, residual(tape, y), y, lambda);
}

std::vector<Param> InnerBlock::params() const { return {conv1_w, conv1_b, conv2_w, conv2_b, lambda}; }

OuterBlock::OuterBlock(const std::string& prefix, int channels, std::mt19937_64& rng)
    : inner1(prefix + ".inner1", channels, rng),
      inner2(prefix + ".inner2", channels, rng),
      lambda0(nn::constant_param(prefix + ".lambda0", {1}, 1.0)) {}

TensorPtr OuterBlock::forward(Tape* tape, const TensorPtr& y0) const {
  return nn::highway_add(tape, inner2.forward(tape, inner1.forward(tape, y0)), y0, lambda0);
}

std::vector<Param> OuterBlock::params() const {
  std::vector<Param> out = inner1.params();
  const auto second = inner2.params();
  out.insert(out.end(), second.begin(), second.end());
  out.push_back(lambda0);
  return out;
}

// ---- description network ------------------------------------------------

DescriptionNet::DescriptionNet(const MatchNetConfig& config, std::mt19937_64& rng) {
  validate(config);
  int in = config.input_channels;
  const int f = config.feature_channels;
  for (int i = 0; i < config.outer_blocks(); ++i) {
    const std::string p = "desc.scale" + std::to_string(i);
    scaling_w.push_back(conv_weights(p + ".w", f, in, rng));
    scaling_b.push_back(conv_bias(p + ".b", f, in, rng));
    blocks.emplace_back("desc.block" + std::to_string(i), f, rng);
    in = f;
  }
}

int DescriptionNet::input_channels() const {
  return scaling_w.empty() ? 0 : static_cast<int>(scaling_w.front().value->dim(1));
}

int DescriptionNet::feature_channels() const {
  return scaling_w.empty() ? 0 : static_cast<int>(scaling_w.back().value->dim(0));
}

TensorPtr DescriptionNet::forward_maps(Tape* tape, const TensorPtr& input) const {
  TensorPtr y = input;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    y = nn::relu(tape, nn::conv2d(tape, y, scaling_w[i], scaling_b[i], 0));
    y = blocks[i].forward(tape, y);
  }
  return y;
}

TensorPtr DescriptionNet::embed(Tape* tape, const TensorPtr& patches) const {
  const auto rf = static_cast<std::size_t>(receptive_field());
  if (patches->rank() != 4 || patches->dim(2) != rf || patches->dim(3) != rf) {
    throw ConfigError("embed expects [N,C," + std::to_string(rf) + "," + std::to_string(rf) + "] patches, got " +
                      nn::shape_to_string(patches->shape()));
  }
  const TensorPtr maps = forward_maps(tape, patches);
  const std::size_t n = patches->dim(0);
  return nn::l2_normalize_rows(tape, nn::reshape(tape, maps, {n, maps->size() / n}));
}

Tensor DescriptionNet::describe(const Tensor& image) const {
  if (image.rank() != 3) throw ConfigError("describe expects a [C,H,W] image");
  if (static_cast<int>(image.dim(0)) != input_channels()) {
    throw ConfigError("describe: image has " + std::to_string(image.dim(0)) + " channels, network expects " +
                      std::to_string(input_channels()));
  }
  const int rf = receptive_field();
  const auto r = static_cast<std::size_t>(rf);
  if (image.dim(1) < r || image.dim(2) < r) {
    throw InputError("describe: image " + nn::shape_to_string(image.shape()) + " is smaller than the " +
                     std::to_string(rf) + "x" + std::to_string(rf) + " receptive field");
  }
  const std::size_t ho = image.dim(1) - r + 1, wo = image.dim(2) - r + 1, f = feature_channels();
  const std::size_t total = ho * wo;
  Tensor out({f, ho, wo});
  for (std::size_t first = 0; first < total; first += kDescribeChunk) {
    const std::size_t count = std::min(kDescribeChunk, total - first);
    const TensorPtr u = embed(nullptr, gather_windows(image, wo, rf, first, count));
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t k = 0; k < f; ++k) out[k * total + first + i] = (*u)[i * f + k];
    }
  }
  return out;
}

std::vector<Param> DescriptionNet::params() const {
  std::vector<Param> out;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    out.push_back(scaling_w[i]);
    out.push_back(scaling_b[i]);
    const auto bp = blocks[i].params();
    out.insert(out.end(), bp.begin(), bp.end());
  }
  return out;
}

// ---- decision network ---------------------------------------------------

DecisionNet::DecisionNet(int descriptor_size, int hidden_layers, int width, std::mt19937_64& rng)
    : descriptor_size_(descriptor_size), initialized_(true) {
  if (descriptor_size < 1 || hidden_layers < 0 || width < 1) throw ConfigError("decision net: bad shape");
  std::size_t in = 2 * static_cast<std::size_t>(descriptor_size);
  for (int i = 0; i <= hidden_layers; ++i) {
    const std::size_t out = i == hidden_layers ? 1 : static_cast<std::size_t>(width);
    const std::string p = "dec.fc" + std::to_string(i);
    weights.push_back(nn::uniform_param(p + ".w", {out, in}, in, rng));
    biases.push_back(nn::uniform_param(p + ".b", {out}, in, rng));
    in = out;
  }
}

DecisionNet DecisionNet::zeros(int descriptor_size, int hidden_layers, int width) {
  std::mt19937_64 rng(0);
  DecisionNet net(descriptor_size, hidden_layers, width, rng);
  for (auto& w : net.weights) std::fill(w.value->data().begin(), w.value->data().end(), 0.0);
  for (auto& b : net.biases) std::fill(b.value->data().begin(), b.value->data().end(), 0.0);
  return net;
}

TensorPtr DecisionNet::logits(Tape* tape, const TensorPtr& pairs) const {
  if (!initialized_) throw StateError("decision network is not initialized");
  if (pairs->rank() != 2 || pairs->dim(1) != 2 * static_cast<std::size_t>(descriptor_size_)) {
    throw ConfigError("decision network expects [N," + std::to_string(2 * descriptor_size_) + "] pairs, got " +
                      nn::shape_to_string(pairs->shape()));
  }
  TensorPtr h = pairs;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    h = nn::fully_connected(tape, h, weights[i], biases[i]);
    if (i + 1 < weights.size()) h = nn::relu(tape, h);
  }
  return nn::reshape(tape, h, {pairs->dim(0)});
}

std::vector<Param> DecisionNet::params() const {
  std::vector<Param> out;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    out.push_back(weights[i]);
    out.push_back(biases[i]);
  }
  return out;
}

// ---- full model ---------------------------------------------------------

MatchNet::MatchNet(const MatchNetConfig& config, std::uint64_t seed) : config_(config) {
  validate(config);
  std::mt19937_64 rng(seed);
  description = DescriptionNet(config, rng);
  if (config.mode == Mode::accurate) {
    decision = DecisionNet(config.feature_channels, config.decision_layers, config.decision_width, rng);
  }
}

std::vector<Param> MatchNet::params() const {
  std::vector<Param> out = description.params();
  const auto dp = decision.params();
  out.insert(out.end(), dp.begin(), dp.end());
  return out;
}

nn::Checkpoint MatchNet::to_checkpoint() const {
  nn::Checkpoint ck;
  ck.model = "matchnet";
  ck.meta["mode"] = std::string(to_string(config_.mode));
  ck.meta["input_channels"] = std::to_string(config_.input_channels);
  ck.meta["feature_channels"] = std::to_string(config_.feature_channels);
  ck.meta["decision_layers"] = std::to_string(config_.decision_layers);
  ck.meta["decision_width"] = std::to_string(config_.decision_width);
  ck.meta["xent_as_printed"] = flag(config_.xent_as_printed);
  ck.meta["decision_initialized"] = flag(decision.initialized());
  ck.meta["receptive_field"] = std::to_string(config_.receptive_field());

  using nn::LayerKind;
  const int f = config_.feature_channels;
  for (std::size_t i = 0; i < description.blocks.size(); ++i) {
    const std::string b = "desc.block" + std::to_string(i);
    ck.layers.push_back({LayerKind::conv2d, "desc.scale" + std::to_string(i), 3, 0, f});
    ck.layers.push_back({LayerKind::relu, "", 0, 0, 0});
    for (const char* inner : {".inner1", ".inner2"}) {
      ck.layers.push_back({LayerKind::conv2d, b + inner + ".conv1", 3, 1, f});
      ck.layers.push_back({LayerKind::relu, "", 0, 0, 0});
      ck.layers.push_back({LayerKind::conv2d, b + inner + ".conv2", 3, 1, f});
      ck.layers.push_back({LayerKind::relu, "", 0, 0, 0});
      ck.layers.push_back({LayerKind::highway_add, b + inner + ".lambda", 0, 0, 0});
    }
    ck.layers.push_back({LayerKind::highway_add, b + ".lambda0", 0, 0, 0});
  }
  for (std::size_t i = 0; i < decision.weights.size(); ++i) {
    const int width = static_cast<int>(decision.weights[i].value->dim(0));
    ck.layers.push_back({LayerKind::fully_connected, "dec.fc" + std::to_string(i), 0, 0, width});
    ck.layers.push_back({i + 1 < decision.weights.size() ? LayerKind::relu : LayerKind::sigmoid, "", 0, 0, 0});
  }
  for (const auto& p : params()) ck.params.emplace_back(p.name, *p.value);
  return ck;
}

MatchNet MatchNet::from_checkpoint(const nn::Checkpoint& ck) {
  if (ck.model != "matchnet") throw InputError("checkpoint holds model '" + ck.model + "', expected 'matchnet'");
  MatchNetConfig c;
  try {
    c.mode = parse_mode(ck.meta_value("mode"));
  } catch (const ConfigError& e) {
    throw InputError(std::string("checkpoint: ") + e.what());
  }
  c.input_channels = parse_int(ck.meta_value("input_channels"), "input_channels");
  c.feature_channels = parse_int(ck.meta_value("feature_channels"), "feature_channels");
  c.decision_layers = parse_int(ck.meta_value("decision_layers"), "decision_layers");
  c.decision_width = parse_int(ck.meta_value("decision_width"), "decision_width");
  c.xent_as_printed = parse_flag(ck.meta_value("xent_as_printed"));
  MatchNet net(c, 0);
  if (!parse_flag(ck.meta_value("decision_initialized"))) net.decision = DecisionNet();
  for (const auto& p : net.params()) {
    const Tensor& stored = ck.param(p.name);
    if (stored.shape() != p.value->shape()) {
      throw InputError("checkpoint: parameter " + p.name + " has shape " + nn::shape_to_string(stored.shape()) +
                       ", expected " + nn::shape_to_string(p.value->shape()));
    }
    std::copy(stored.data().begin(), stored.data().end(), p.value->data().begin());
  }
  return net;
}

// ---- scores and losses --------------------------------------------------

MatchScore match_score_fast(std::span<const double> u_l, std::span<const double> u_r) {
  if (u_l.size() != u_r.size()) throw ConfigError("match_score_fast: descriptor lengths differ");
  const double s = std::inner_product(u_l.begin(), u_l.end(), u_r.begin(), 0.0);
  return {s, -s};
}

double match_probability(double v, bool xent_as_printed) { return xent_as_printed ? 1.0 - v : v; }

MatchScore match_score_accurate(const DecisionNet& net, std::span<const double> u_l, std::span<const double> u_r,
                                bool xent_as_printed) {
  if (!net.initialized()) throw StateError("match_score_accurate: decision network is not initialized");
  if (u_l.size() != u_r.size()) throw ConfigError("match_score_accurate: descriptor lengths differ");
  auto pair = nn::make_tensor({1, u_l.size() + u_r.size()});
  std::copy(u_l.begin(), u_l.end(), pair->data().begin());
  std::copy(u_r.begin(), u_r.end(), pair->data().begin() + static_cast<std::ptrdiff_t>(u_l.size()));
  const double v = nn::sigmoid_scalar((*net.logits(nullptr, pair))[0]);
  return {v, -match_probability(v, xent_as_printed)};
}

double hinge_term(double s_pos, double s_neg, double margin) { return std::max(0.0, margin + s_neg - s_pos); }

double xent_term(double v_pos, double v_neg, bool xent_as_printed) {
  if (!(v_pos > 0.0 && v_pos < 1.0) || !(v_neg > 0.0 && v_neg < 1.0)) {
    throw NumericError("hybrid loss: decision outputs must lie strictly inside (0,1)");
  }
  if (xent_as_printed) return -(std::log(v_neg) + std::log1p(-v_pos));
  return -(std::log(v_pos) + std::log1p(-v_neg));
}

double hybrid_loss(double v_pos, double v_neg, double s_pos, double s_neg, double alpha, double margin,
                   bool xent_as_printed) {
  return alpha * xent_term(v_pos, v_neg, xent_as_printed) + (1.0 - alpha) * hinge_term(s_pos, s_neg, margin);
}

TensorPtr hybrid_loss_from_logits(Tape* tape, const TensorPtr& z_pos, const TensorPtr& z_neg, const TensorPtr& s_pos,
                                  const TensorPtr& s_neg, double alpha, double margin, bool xent_as_printed) {
  const std::size_t n = s_pos->size();
  if (n == 0 || s_neg->size() != n) throw ConfigError("hybrid loss: similarity batches must be equal and nonempty");
  const bool with_xent = alpha != 0.0;
  if (with_xent && (!z_pos || !z_neg || z_pos->size() != n || z_neg->size() != n)) {
    throw ConfigError("hybrid loss: logit batches must match the similarity batch");
  }
  // -log v = softplus(-z), -log(1 - v) = softplus(z).
  const double sp = xent_as_printed ? 1.0 : -1.0;  // sign applied to z_pos inside its softplus
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (with_xent) total += alpha * (nn::softplus(sp * (*z_pos)[i]) + nn::softplus(-sp * (*z_neg)[i]));
    total += (1.0 - alpha) * hinge_term((*s_pos)[i], (*s_neg)[i], margin);
  }
  auto out = nn::make_tensor({1}, total / static_cast<double>(n));
  if (tape) {
    tape->record([=] {
      if (!out->has_grad()) return;
      const double g = out->grad()[0] / static_cast<double>(n);
      auto gsp = s_pos->ensure_grad();
      auto gsn = s_neg->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        if (margin + (*s_neg)[i] - (*s_pos)[i] > 0.0) {
          gsp[i] -= g * (1.0 - alpha);
          gsn[i] += g * (1.0 - alpha);
        }
      }
      if (!with_xent) return;
      auto gzp = z_pos->ensure_grad();
      auto gzn = z_neg->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        gzp[i] += g * alpha * sp * nn::sigmoid_scalar(sp * (*z_pos)[i]);
        gzn[i] -= g * alpha * sp * nn::sigmoid_scalar(-sp * (*z_neg)[i]);
      }
    });
  }
  return out;
}

// ---- cost volumes -------------------------------------------------------

Tensor image_to_tensor(const Image& image) {
  return Tensor({static_cast<std::size_t>(image.channels), static_cast<std::size_t>(image.height),
                 static_cast<std::size_t>(image.width)},
                image.data);
}

Tensor describe_image(const MatchNet& net, const Image& image) {
  if (image.channels != net.config().input_channels) {
    throw ConfigError("image has " + std::to_string(image.channels) + " channels, matcher expects " +
                      std::to_string(net.config().input_channels));
  }
  const int half = net.config().receptive_field() / 2;
  return net.description.describe(image_to_tensor(pad_replicate(normalize_planes(image), half)));
}

CostVolume cost_volume_from_descriptors(const MatchNet& net, const Tensor& left, const Tensor& right, int dmax,
                                        CostVolumeStats* stats) {
  return volume_from_descriptors(net, left, right, dmax, +1, stats);
}

CostVolume cost_volume_right_reference(const MatchNet& net, const Tensor& left, const Tensor& right, int dmax,
                                       CostVolumeStats* stats) {
  return volume_from_descriptors(net, right, left, dmax, -1, stats);
}

CostVolume build_cost_volume(const MatchNet& net, const Image& left, const Image& right, int dmax,
                             CostVolumeStats* stats) {
  if (dmax < 1) throw ConfigError("build_cost_volume: dmax must be at least 1");
  if (!left.same_extent(right) || left.channels != right.channels) {
    throw InputError("build_cost_volume: left and right images differ in extent or channels");
  }
  const auto t0 = std::chrono::steady_clock::now();
  const Tensor ul = describe_image(net, left);
  const Tensor ur = describe_image(net, right);
  if (stats) {
    stats->describe_passes += 2;
    stats->describe_seconds += seconds_since(t0);
  }
  return cost_volume_from_descriptors(net, ul, ur, dmax, stats);
}

// ---- training -----------------------------------------------------------

double evaluate_matcher_loss(const MatchNet& net, std::span<const PatchPairSample> data,
                             const MatcherTrainConfig& cfg) {
  check_train_config(cfg);
  const Shape shape = check_dataset(net, data);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  double total = 0.0;
  for (std::size_t b = 0; b < data.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
    const std::size_t count = std::min<std::size_t>(cfg.batch_size, data.size() - b);
    const TensorPtr loss = batch_loss(nullptr, net, stack_patches(data, order, b, count, shape), count, cfg);
    total += (*loss)[0] * static_cast<double>(count);
  }
  return total / static_cast<double>(data.size());
}

MatcherTrainLog train_matcher(MatchNet& net, std::span<const PatchPairSample> data, const MatcherTrainConfig& cfg) {
  check_train_config(cfg);
  const Shape shape = check_dataset(net, data);
  MatcherTrainLog log;
  log.epochs.push_back({0, evaluate_matcher_loss(net, data, cfg), lambda_values(net)});

  nn::SgdMomentum opt(net.params(), cfg.momentum);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t b = 0; b < data.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t count = std::min<std::size_t>(cfg.batch_size, data.size() - b);
      Tape tape;
      opt.zero_grad();
      const TensorPtr loss = batch_loss(&tape, net, stack_patches(data, order, b, count, shape), count, cfg);
      if (!std::isfinite((*loss)[0])) throw NumericError("train_matcher: loss became non-finite");
      tape.backward(loss);
      opt.step(cfg.lr);
      total += (*loss)[0] * static_cast<double>(count);
    }
    log.epochs.push_back({epoch, total / static_cast<double>(data.size()), lambda_values(net)});
  }
  return log;
}

void MatcherTrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw InputError("cannot write training log " + path.string());
  os << "epoch,loss";
  const std::size_t nb = epochs.empty() ? 0 : epochs.front().lambdas.size();
  for (std::size_t b = 0; b < nb; ++b) {
    os << ",b" << b << "_lambda0,b" << b << "_lambda1,b" << b << "_lambda2";
  }
  os << "\n" << std::setprecision(10);
  for (const auto& e : epochs) {
    os << e.epoch << "," << e.loss;
    for (const auto& l : e.lambdas) os << "," << l.lambda0 << "," << l.lambda1 << "," << l.lambda2;
    os << "\n";
  }
}

std::vector<LambdaTriple> lambda_values(const MatchNet& net) {
  std::vector<LambdaTriple> out;
  for (const auto& b : net.description.blocks) {
    out.push_back({(*b.lambda0.value)[0], (*b.inner1.lambda.value)[0], (*b.inner2.lambda.value)[0]});
  }
  return out;
}

std::vector<double> lambda_report(const nn::Checkpoint& ck) {
  std::vector<double> out;
  for (int i = 0;; ++i) {
    const std::string b = "desc.block" + std::to_string(i);
    const std::string n0 = b + ".lambda0", n1 = b + ".inner1.lambda", n2 = b + ".inner2.lambda";
    if (!ck.has_param(n0) || !ck.has_param(n1) || !ck.has_param(n2)) break;
    out.push_back(ck.param(n0)[0] + ck.param(n1)[0] * ck.param(n2)[0]);
  }
  if (out.empty()) throw InputError("lambda report: checkpoint holds no outer-block lambda parameters");
  return out;
}

std::vector<std::vector<double>> lambda_report(const MatcherTrainLog& log) {
  std::vector<std::vector<double>> out;
  for (const auto& e : log.epochs) {
    std::vector<double> row;
    for (const auto& l : e.lambdas) row.push_back(l.skip_mass());
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace resmatch
