#pragma once

#include <map>
#include <string_view>
#include <vector>

#include "resmatch/confidence.hpp"
#include "resmatch/config.hpp"
#include "resmatch/cost_volume.hpp"
#include "resmatch/gdn.hpp"
#include "resmatch/matchnet.hpp"
#include "resmatch/refine.hpp"
#include "resmatch/scene.hpp"

namespace resmatch {

enum class Stage { volume, postprocess, gdn, refine };

std::string_view to_string(Stage s);
Stage parse_stage(std::string_view text);

/// Wall time per prediction component, in seconds.
struct StageTimings {
  double description = 0.0;
  double decision = 0.0;
  double cbca = 0.0;
  double sgm = 0.0;
  double gdn = 0.0;
  double interpolation = 0.0;
  double subpixel = 0.0;
  double smoothing = 0.0;
  int cbca_iterations = 0;
  int decision_passes = 0;
};

struct PipelineOutput {
  Stage reached = Stage::volume;
  CostVolume raw_left, raw_right;    // right-reference volumes exist only with both views
  CostVolume post_left, post_right;  // tanh-normalised
  GdnPrediction gdn_left, gdn_right;
  RefineResult refined;
  bool has_right = false;
  StageTimings timings;
};

/// Runs the chain up to `stop`. Right-reference results are computed when
/// `with_right` is set, and always for the refine stage.
PipelineOutput run_pipeline(const MatchNet& matcher, const Gdn* gdn, const Image& left, const Image& right,
                            const RunConfig& cfg, Stage stop, bool with_right = false);

std::vector<SyntheticScene> make_scenes(const RunConfig& cfg, bool validation, int count);

struct TrainedMatcher {
  MatchNet net;
  MatcherTrainLog log;
};

/// Matcher from patch triples drawn evenly across the scenes.
TrainedMatcher train_matcher_on_scenes(const RunConfig& cfg, const std::vector<SyntheticScene>& scenes);

/// GDN patches from the post-processed left volumes of the scenes.
std::vector<DisparityPatch> build_gdn_dataset(const MatchNet& matcher, const std::vector<SyntheticScene>& scenes,
                                              const RunConfig& cfg);

struct TrainedGdn {
  Gdn net;
  GdnTrainLog log;
};

TrainedGdn train_gdn_on_scenes(const RunConfig& cfg, const MatchNet& matcher,
                               const std::vector<SyntheticScene>& scenes);

struct SceneEvaluation {
  double err_raw = 0.0;      // WTA on the raw volume
  double err_post = 0.0;     // WTA on the post-processed volume
  double err_gdn = 0.0;      // GDN disparity
  double err_refined = 0.0;  // after confidence-gated refinement
  std::map<Measure, double> auc;  // sparsification AUC of each measure against the GDN map
  StageTimings timings;
};

SceneEvaluation evaluate_scene(const MatchNet& matcher, const Gdn& gdn, const SyntheticScene& scene,
                               const RunConfig& cfg, double err_threshold = 3.0, bool with_confidence = true);

}  // namespace resmatch
