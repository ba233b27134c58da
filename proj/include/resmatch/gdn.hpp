#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "resmatch/cost_volume.hpp"
#include "resmatch/image.hpp"
#include "resmatch/nn/checkpoint.hpp"
#include "resmatch/nn/ops.hpp"

namespace resmatch {

inline constexpr int kGdnPatch = 9;
inline constexpr int kGdnConvLayers = 4;  // 3x3 unpadded, 9x9 -> 1x1

struct GdnConfig {
  int dmax = 32;
  int channels = 64;    // trunk width
  int conf_width = 64;  // FC4
};

/// D x 9 x 9 window of a tanh-normalised cost volume and the disparity of its centre.
struct DisparityPatch {
  nn::Tensor costs;
  double gt = 0.0;
};

struct GdnOutput {
  std::vector<double> scores;  // FC3
  double confidence = 0.5;     // FC5 after the sigmoid
  int disparity() const;       // argmax of the scores, smallest index on ties
};

struct GdnBatch {
  nn::TensorPtr scores;      // [N, D]
  nn::TensorPtr conf_logit;  // [N]
};

struct GdnPrediction {
  DisparityMap disparity;
  ConfidenceMap confidence;
  std::vector<double> scores;  // (y, x, d) order, D per pixel
};

/// Conv trunk (four 3x3 layers with ReLU), FC3 scores over disparities, and a
/// confidence head FC4 -> ReLU -> FC5 -> sigmoid reading the FC3 scores.
class Gdn {
 public:
  Gdn() = default;
  Gdn(const GdnConfig& config, std::uint64_t seed);
  /// Every weight and bias zero: uniform scores and confidence 0.5.
  static Gdn zeros(const GdnConfig& config);

  const GdnConfig& config() const { return config_; }

  /// Patches [N, D, 9, 9]. The confidence head sees a detached copy of the
  /// scores, so its loss leaves the trunk and FC3 gradients untouched.
  GdnBatch forward(nn::Tape* tape, const nn::TensorPtr& patches) const;
  GdnOutput forward(const nn::Tensor& patch) const;

  /// Slides the 9x9 window over the volume padded by 4 pixels of edge replication.
  GdnPrediction predict_image(const CostVolume& volume) const;

  std::vector<nn::Param> params() const;
  std::vector<nn::Param> trunk_params() const;  // convolutions and FC3
  std::vector<nn::Param> head_params() const;   // FC4 and FC5

  nn::Checkpoint to_checkpoint() const;
  static Gdn from_checkpoint(const nn::Checkpoint& ckpt);

  std::vector<nn::Param> conv_w, conv_b;
  nn::Param fc3_w, fc3_b, fc4_w, fc4_b, fc5_w, fc5_b;

 private:
  nn::TensorPtr head_logits(nn::Tape* tape, const nn::TensorPtr& scores) const;
  GdnConfig config_;
};

/// Smooth target: 0.65 for |d - gt| <= 1, 0.25 up to 2, 0.1 up to 3, else 0.
double smooth_target_weight(double d, double gt);
/// -sum_i p(i, gt) * log softmax(scores)_i with unnormalised weights.
/// Throws InputError when gt lies outside [0, D-1].
double weighted_xent_loss(std::span<const double> scores, double gt);
/// 1 iff |argmax(scores) - gt| < 1.
int reflective_label(std::span<const double> scores, double gt);

struct GdnTrainConfig {
  int epochs = 15;
  int batch_size = 128;
  double lr = 0.003;
  double momentum = 0.9;
  int decimate_epoch = 12;  // 1-based; this epoch and later use lr * decimate_factor
  double decimate_factor = 0.1;
  double xent_weight = 0.85;
  double reflective_weight = 0.15;
  std::uint64_t seed = 1;
};

double gdn_learning_rate(const GdnTrainConfig& cfg, int epoch);

struct GdnEpochLog {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double xent = 0.0;
  double reflective = 0.0;
  double positive_fraction = 0.0;  // mean reflective label over the epoch's forward passes
  double train_accuracy = 0.0;     // |argmax - gt| < 1 after the epoch
  double mean_confidence = 0.0;    // after the epoch
};

struct GdnTrainLog {
  std::vector<GdnEpochLog> epochs;
  void write_csv(const std::filesystem::path& path) const;
};

/// Combined loss of one batch: xent_weight * weighted xent + reflective_weight *
/// binary xent against labels recomputed from the current scores.
nn::TensorPtr gdn_batch_loss(nn::Tape* tape, const Gdn& net, const nn::TensorPtr& patches,
                             std::span<const double> gt, const GdnTrainConfig& cfg, double* positive_fraction = nullptr);

GdnTrainLog gdn_train(Gdn& net, std::span<const DisparityPatch> data, const GdnTrainConfig& cfg);

}  // namespace resmatch
