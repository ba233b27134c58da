#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "resmatch/cost_volume.hpp"
#include "resmatch/image.hpp"
#include "resmatch/mode.hpp"
#include "resmatch/nn/checkpoint.hpp"
#include "resmatch/nn/ops.hpp"

namespace resmatch {

struct MatchNetConfig {
  Mode mode = Mode::accurate;
  int input_channels = 1;
  int feature_channels = 64;
  int decision_layers = 3;  // hidden fully-connected layers before the scalar output
  int decision_width = 128;
  /// Train the decision output with -(log v_neg + log(1 - v_pos)). Under this
  /// orientation v scores non-matching pairs, so the match probability is 1 - v.
  bool xent_as_printed = true;

  int outer_blocks() const { return mode == Mode::fast ? 4 : 5; }
  /// One 3x3 unpadded scaling layer precedes every outer block.
  int receptive_field() const { return 2 * outer_blocks() + 1; }
};

/// Two padded 3x3 convolutions with ReLUs, then a constant highway shortcut:
/// y' = f(y) + lambda * y.
class InnerBlock {
 public:
  InnerBlock() = default;
  InnerBlock(const std::string& prefix, int channels, std::mt19937_64& rng);

  nn::TensorPtr residual(nn::Tape* tape, const nn::TensorPtr& y) const;
  nn::TensorPtr forward(nn::Tape* tape, const nn::TensorPtr& y) const;
  std::vector<nn::Param> params() const;

  nn::Param conv1_w, conv1_b, conv2_w, conv2_b, lambda;
};

/// y1 = inner1(y0); y2 = lambda0 * y0 + inner2(y1).
class OuterBlock {
 public:
  OuterBlock() = default;
  OuterBlock(const std::string& prefix, int channels, std::mt19937_64& rng);

  nn::TensorPtr forward(nn::Tape* tape, const nn::TensorPtr& y0) const;
  std::vector<nn::Param> params() const;

  InnerBlock inner1, inner2;
  nn::Param lambda0;
};

class DescriptionNet {
 public:
  DescriptionNet() = default;
  DescriptionNet(const MatchNetConfig& config, std::mt19937_64& rng);

  /// Feature maps of a [N,C,H,W] batch before descriptor normalisation;
  /// spatial extents shrink by 2 per scaling layer.
  nn::TensorPtr forward_maps(nn::Tape* tape, const nn::TensorPtr& input) const;
  /// Unit-length descriptors [N,F] for a batch of receptive-field sized patches.
  nn::TensorPtr embed(nn::Tape* tape, const nn::TensorPtr& patches) const;
  /// Descriptor map [F, H - rf + 1, W - rf + 1] for an image tensor [C,H,W].
  /// Each descriptor depends only on the receptive-field window around it.
  nn::Tensor describe(const nn::Tensor& image) const;

  int receptive_field() const { return 2 * static_cast<int>(blocks.size()) + 1; }
  int input_channels() const;
  int feature_channels() const;
  std::vector<nn::Param> params() const;

  std::vector<nn::Param> scaling_w, scaling_b;
  std::vector<OuterBlock> blocks;
};

/// Fully-connected comparator on [u_l; u_r]; the sigmoid of the final logit is v.
class DecisionNet {
 public:
  DecisionNet() = default;
  DecisionNet(int descriptor_size, int hidden_layers, int width, std::mt19937_64& rng);
  /// All weights and biases zero; v == 0.5 for every pair.
  static DecisionNet zeros(int descriptor_size, int hidden_layers, int width);

  bool initialized() const { return initialized_; }
  int descriptor_size() const { return descriptor_size_; }
  /// Logits [N] for pairs [N, 2F]. Throws StateError when uninitialized.
  nn::TensorPtr logits(nn::Tape* tape, const nn::TensorPtr& pairs) const;
  std::vector<nn::Param> params() const;

  std::vector<nn::Param> weights, biases;

 private:
  friend class MatchNet;
  int descriptor_size_ = 0;
  bool initialized_ = false;
};

class MatchNet {
 public:
  MatchNet() = default;
  MatchNet(const MatchNetConfig& config, std::uint64_t seed);

  const MatchNetConfig& config() const { return config_; }
  std::vector<nn::Param> params() const;

  nn::Checkpoint to_checkpoint() const;
  static MatchNet from_checkpoint(const nn::Checkpoint& ckpt);

  DescriptionNet description;
  DecisionNet decision;

 private:
  MatchNetConfig config_;
};

struct MatchScore {
  double score = 0.0;  // s for the fast pathway, v for the accurate one
  double cost = 0.0;
};

/// s = u_l . u_r; cost = -s.
MatchScore match_score_fast(std::span<const double> u_l, std::span<const double> u_r);
/// v from the decision network; cost = -match_probability(v).
MatchScore match_score_accurate(const DecisionNet& net, std::span<const double> u_l, std::span<const double> u_r,
                                bool xent_as_printed = false);
double match_probability(double v, bool xent_as_printed);

double hinge_term(double s_pos, double s_neg, double margin);
/// Throws NumericError unless both v lie in (0,1).
double xent_term(double v_pos, double v_neg, bool xent_as_printed = true);
/// alpha * XEnt(v+, v-) + (1 - alpha) * Hinge(s+, s-).
double hybrid_loss(double v_pos, double v_neg, double s_pos, double s_neg, double alpha, double margin,
                   bool xent_as_printed = true);

/// Batch mean of the hybrid loss with the cross-entropy evaluated from decision
/// logits (v = sigmoid(z)), so saturated outputs stay finite.
nn::TensorPtr hybrid_loss_from_logits(nn::Tape* tape, const nn::TensorPtr& z_pos, const nn::TensorPtr& z_neg,
                                      const nn::TensorPtr& s_pos, const nn::TensorPtr& s_neg, double alpha,
                                      double margin, bool xent_as_printed);

struct CostVolumeStats {
  int describe_passes = 0;
  int decision_passes = 0;
  double describe_seconds = 0.0;
  double decision_seconds = 0.0;
};

/// Plane-normalised, edge-padded description of a full image: [F, H, W].
nn::Tensor describe_image(const MatchNet& net, const Image& image);

/// C(p, d) for 0 <= d < dmax from descriptor maps [F,H,W]. Entries with x - d < 0
/// hold the largest valid cost of the volume and are flagged invalid.
CostVolume cost_volume_from_descriptors(const MatchNet& net, const nn::Tensor& left, const nn::Tensor& right,
                                        int dmax, CostVolumeStats* stats = nullptr);

/// Right-reference volume C_R(p, d) pairing right(x) with left(x + d); entries with
/// x + d outside the image are filled and flagged as above.
CostVolume cost_volume_right_reference(const MatchNet& net, const nn::Tensor& left, const nn::Tensor& right,
                                       int dmax, CostVolumeStats* stats = nullptr);

CostVolume build_cost_volume(const MatchNet& net, const Image& left, const Image& right, int dmax,
                             CostVolumeStats* stats = nullptr);

/// Left, matching right and non-matching right patches, each [C, rf, rf].
struct PatchPairSample {
  nn::Tensor left;
  nn::Tensor positive;
  nn::Tensor negative;
};

struct MatcherTrainConfig {
  int epochs = 5;
  int batch_size = 128;
  double lr = 0.003;
  double momentum = 0.9;
  double alpha = 0.8;
  double margin = 0.2;
  std::uint64_t seed = 1;
};

struct LambdaTriple {
  double lambda0 = 1.0;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  /// Share of the outer-block input that bypasses both inner blocks.
  double skip_mass() const { return lambda0 + lambda1 * lambda2; }
};

struct MatcherEpochLog {
  int epoch = 0;  // 0 holds the loss before any update
  double loss = 0.0;
  std::vector<LambdaTriple> lambdas;
};

struct MatcherTrainLog {
  std::vector<MatcherEpochLog> epochs;
  /// epoch,loss,b0_lambda0,b0_lambda1,b0_lambda2,...
  void write_csv(const std::filesystem::path& path) const;
};

double evaluate_matcher_loss(const MatchNet& net, std::span<const PatchPairSample> data, const MatcherTrainConfig& cfg);
MatcherTrainLog train_matcher(MatchNet& net, std::span<const PatchPairSample> data, const MatcherTrainConfig& cfg);

std::vector<LambdaTriple> lambda_values(const MatchNet& net);
/// Skip mass per outer block read from a checkpoint; InputError if it holds no lambdas.
std::vector<double> lambda_report(const nn::Checkpoint& ckpt);
/// Skip mass per logged epoch (rows) and outer block (columns).
std::vector<std::vector<double>> lambda_report(const MatcherTrainLog& log);

nn::Tensor image_to_tensor(const Image& image);

}  // namespace resmatch
