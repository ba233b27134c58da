#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "resmatch/cost_volume.hpp"
#include "resmatch/gdn.hpp"
#include "resmatch/image.hpp"
#include "resmatch/matchnet.hpp"

namespace resmatch {

enum class SceneKind {
  layered,  // slanted background, fronto-parallel occluders, low-texture and reflective patches
  shift,    // gt == shift everywhere
  slanted,  // single plane, gt linear in x
};

std::string_view to_string(SceneKind kind);
SceneKind parse_scene_kind(std::string_view text);

struct SceneSpec {
  SceneKind kind = SceneKind::layered;
  int height = 48;
  int width = 96;
  int channels = 1;
  int dmax = 32;
  double noise = 0.01;       // std-dev of Gaussian noise added to each view
  double brightness = 0.0;   // added to the right view
  int shift = 4;             // SceneKind::shift
  int occluders = 2;         // SceneKind::layered
  bool low_texture = true;   // SceneKind::layered
  bool reflective = true;    // SceneKind::layered
  std::uint64_t seed = 1;
};

struct SyntheticScene {
  Image left;
  Image right;
  DisparityMap gt;                     // left reference, real-valued
  std::vector<std::uint8_t> occluded;  // 1 where the left pixel is hidden by a nearer layer in the right view
};

/// Throws ConfigError for dmax < 2 or a spec whose disparities do not fit.
SyntheticScene generate_scene(const SceneSpec& spec);

/// Bilinear sample of one channel; coordinates are clamped to the image.
double sample_bilinear(const Image& img, int c, double y, double x);

struct MatchSamplingParams {
  int receptive_field = 11;
  double neg_offset_min = 4.0;
  double neg_offset_max = 8.0;
  std::uint64_t seed = 1;
};

/// Patch triples from plane-normalised views. Centres are non-occluded pixels
/// whose left, positive and negative windows all lie inside the images; right
/// windows are sampled bilinearly at x - gt and x - gt +- o.
std::vector<PatchPairSample> sample_match_pairs(const SyntheticScene& scene, int n, const MatchSamplingParams& params);

/// D x 9 x 9 windows (edge replication) around distinct pixels whose gt lies in
/// [0, D-1]; duplicates appear only when n exceeds the number of such pixels.
std::vector<DisparityPatch> sample_gdn_patches(const CostVolume& volume, const DisparityMap& gt, int n,
                                               std::uint64_t seed);

/// The D x 9 x 9 window around (y, x) with edge replication.
nn::Tensor extract_gdn_patch(const CostVolume& volume, int y, int x);

}  // namespace resmatch
