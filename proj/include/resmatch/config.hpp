#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "resmatch/costproc.hpp"
#include "resmatch/gdn.hpp"
#include "resmatch/matchnet.hpp"
#include "resmatch/mode.hpp"
#include "resmatch/refine.hpp"
#include "resmatch/scene.hpp"

namespace resmatch {

/// Every tunable of a run. Defaults that have a published value use it; the
/// scene and network sizes default to desk-scale values.
struct RunConfig {
  Mode mode = Mode::accurate;
  int channels = 1;
  int dmax = 32;
  std::uint64_t seed = 1;

  // matching-cost network
  int feature_channels = 64;
  int decision_layers = 3;
  int decision_width = 128;
  bool xent_as_printed = true;
  int matcher_epochs = 5;
  int matcher_batch = 128;
  double matcher_lr = 0.003;
  double momentum = 0.9;
  double alpha = 0.8;
  double margin = 0.2;
  double neg_offset_min = 4.0;
  double neg_offset_max = 8.0;
  int matcher_samples = 20000;

  // post-processing
  double cbca_tau = 0.02;
  int cbca_max_arm = 5;
  int cbca_before_sgm = 2;
  int cbca_after_sgm = 2;
  double sgm_p1 = 1.0;
  double sgm_p2 = 8.0;
  int sgm_directions = 4;

  // global disparity network
  int gdn_channels = 64;
  int gdn_conf_width = 64;
  int gdn_epochs = 15;
  int gdn_batch = 128;
  double gdn_lr = 0.003;
  int gdn_decimate_epoch = 12;
  double gdn_decimate_factor = 0.1;
  double gdn_xent_weight = 0.85;
  double gdn_reflective_weight = 0.15;
  int gdn_samples = 50000;

  // refinement
  double tau1 = 1.0;
  double tau2 = 0.7;
  double tau3 = 0.1;
  double tau4 = 1.0;
  int median_window = 5;
  double sigma_s = 5.0;
  double sigma_r = 7.5;
  int bilateral_radius = 5;

  // synthetic data
  SceneKind scene_kind = SceneKind::layered;
  int scene_height = 48;
  int scene_width = 96;
  double scene_noise = 0.01;
  double scene_brightness = 0.0;
  int scene_occluders = 2;
  int train_scenes = 8;
  int val_scenes = 10;

  MatchNetConfig matchnet_config() const;
  MatcherTrainConfig matcher_train_config() const;
  MatchSamplingParams match_sampling() const;
  PostprocessParams postprocess_params() const;
  GdnConfig gdn_config() const;
  GdnTrainConfig gdn_train_config() const;
  RefinementConfig refinement_config() const;
  /// Scene `index` of a split; training and validation scenes use disjoint seeds.
  SceneSpec scene_spec(int index, bool validation) const;
};

/// Sets one key from its text value. Unknown keys and unparsable values throw ConfigError.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::vector<std::string> config_keys();

/// `key = value` lines; '#' starts a comment; blank lines are ignored.
RunConfig parse_run_config(std::istream& is, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

/// Resolved configuration in the same format, one key per line.
std::string to_text(const RunConfig& cfg);
void write_run_config(const std::filesystem::path& path, const RunConfig& cfg);

/// Throws ConfigError on inconsistent values.
void validate(const RunConfig& cfg);

}  // namespace resmatch
