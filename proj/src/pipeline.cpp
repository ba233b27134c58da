#include "resmatch/pipeline.hpp"

#include <chrono>
#include <string>

#include "resmatch/costproc.hpp"
#include "resmatch/errors.hpp"
#include "resmatch/metrics.hpp"

namespace resmatch {
namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void add(StageTimings& t, const PostprocessStats& s) {
  t.cbca += s.cbca_seconds;
  t.sgm += s.sgm_seconds;
  t.cbca_iterations += s.cbca_iterations;
}

}  // namespace

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::volume: return "volume";
    case Stage::postprocess: return "postprocess";
    case Stage::gdn: return "gdn";
    case Stage::refine: return "refine";
  }
  return "?";
}

Stage parse_stage(std::string_view text) {
  for (Stage s : {Stage::volume, Stage::postprocess, Stage::gdn, Stage::refine}) {
    if (to_string(s) == text) return s;
  }
  throw ConfigError("unknown stage '" + std::string(text) + "'");
}

PipelineOutput run_pipeline(const MatchNet& matcher, const Gdn* gdn, const Image& left, const Image& right,
                            const RunConfig& cfg, Stage stop, bool with_right) {
  if (!left.same_extent(right) || left.channels != right.channels) {
    throw InputError("left and right images differ in extent or channels");
  }
  if (stop >= Stage::gdn && !gdn) throw StateError("the gdn and refine stages need a GDN model");
  const bool right_side = with_right || stop == Stage::refine;
  PipelineOutput out;
  out.has_right = right_side;

  CostVolumeStats cs;
  auto t0 = std::chrono::steady_clock::now();
  const nn::Tensor ul = describe_image(matcher, left);
  const nn::Tensor ur = describe_image(matcher, right);
  out.timings.description = seconds_since(t0);
  out.raw_left = cost_volume_from_descriptors(matcher, ul, ur, cfg.dmax, &cs);
  if (right_side) out.raw_right = cost_volume_right_reference(matcher, ul, ur, cfg.dmax, &cs);
  out.timings.decision = cs.decision_seconds;
  out.timings.decision_passes = cs.decision_passes;
  if (stop == Stage::volume) return out;

  const PostprocessParams pp = cfg.postprocess_params();
  PostprocessStats ps;
  out.post_left = postprocess(out.raw_left, left, right, cfg.mode, pp, &ps);
  add(out.timings, ps);
  CostVolume post_right_mirrored;
  Image left_m, right_m;
  if (right_side) {
    // The mirrored right-reference volume is a left-reference volume of the
    // mirrored, swapped pair, so the left-reference machinery applies as is.
    left_m = flip_horizontal(left);
    right_m = flip_horizontal(right);
    post_right_mirrored = postprocess(flip_horizontal(out.raw_right), right_m, left_m, cfg.mode, pp, &ps);
    add(out.timings, ps);
    out.post_right = flip_horizontal(post_right_mirrored);
  }
  out.reached = Stage::postprocess;
  if (stop == Stage::postprocess) return out;

  t0 = std::chrono::steady_clock::now();
  out.gdn_left = gdn->predict_image(out.post_left);
  if (right_side) {
    GdnPrediction m = gdn->predict_image(post_right_mirrored);
    out.gdn_right.disparity = flip_horizontal(m.disparity);
    out.gdn_right.confidence = flip_horizontal(m.confidence);
  }
  out.timings.gdn = seconds_since(t0);
  out.reached = Stage::gdn;
  if (stop == Stage::gdn) return out;

  out.refined = refine(out.gdn_left.disparity, out.gdn_right.disparity, out.gdn_left.confidence,
                       out.gdn_right.confidence, out.post_left, cfg.refinement_config());
  out.timings.interpolation = out.refined.stats.interpolation_seconds;
  out.timings.subpixel = out.refined.stats.subpixel_seconds;
  out.timings.smoothing = out.refined.stats.smoothing_seconds;
  out.reached = Stage::refine;
  return out;
}

std::vector<SyntheticScene> make_scenes(const RunConfig& cfg, bool validation, int count) {
  std::vector<SyntheticScene> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(generate_scene(cfg.scene_spec(i, validation)));
  return out;
}

TrainedMatcher train_matcher_on_scenes(const RunConfig& cfg, const std::vector<SyntheticScene>& scenes) {
  if (scenes.empty()) throw InputError("train_matcher: no training scenes");
  const int per_scene = (cfg.matcher_samples + static_cast<int>(scenes.size()) - 1) / static_cast<int>(scenes.size());
  std::vector<PatchPairSample> data;
  MatchSamplingParams sp = cfg.match_sampling();
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    sp.seed = cfg.seed * 7919ULL + i;
    auto part = sample_match_pairs(scenes[i], per_scene, sp);
    std::move(part.begin(), part.end(), std::back_inserter(data));
  }
  data.resize(static_cast<std::size_t>(cfg.matcher_samples));
  TrainedMatcher tm{MatchNet(cfg.matchnet_config(), cfg.seed), {}};
  tm.log = train_matcher(tm.net, data, cfg.matcher_train_config());
  return tm;
}

std::vector<DisparityPatch> build_gdn_dataset(const MatchNet& matcher, const std::vector<SyntheticScene>& scenes,
                                              const RunConfig& cfg) {
  if (scenes.empty()) throw InputError("train_gdn: no training scenes");
  const int per_scene = (cfg.gdn_samples + static_cast<int>(scenes.size()) - 1) / static_cast<int>(scenes.size());
  std::vector<DisparityPatch> data;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const PipelineOutput p = run_pipeline(matcher, nullptr, scenes[i].left, scenes[i].right, cfg, Stage::postprocess);
    auto part = sample_gdn_patches(p.post_left, scenes[i].gt, per_scene, cfg.seed * 104729ULL + i);
    std::move(part.begin(), part.end(), std::back_inserter(data));
  }
  data.resize(static_cast<std::size_t>(cfg.gdn_samples));
  return data;
}

TrainedGdn train_gdn_on_scenes(const RunConfig& cfg, const MatchNet& matcher,
                               const std::vector<SyntheticScene>& scenes) {
  const auto data = build_gdn_dataset(matcher, scenes, cfg);
  TrainedGdn tg{Gdn(cfg.gdn_config(), cfg.seed + 17), {}};
  tg.log = gdn_train(tg.net, data, cfg.gdn_train_config());
  return tg;
}

SceneEvaluation evaluate_scene(const MatchNet& matcher, const Gdn& gdn, const SyntheticScene& scene,
                               const RunConfig& cfg, double err_threshold, bool with_confidence) {
  const PipelineOutput p = run_pipeline(matcher, &gdn, scene.left, scene.right, cfg, Stage::refine);
  SceneEvaluation e;
  e.err_raw = error_rate(winner_takes_all(p.raw_left), scene.gt, err_threshold);
  e.err_post = error_rate(winner_takes_all(p.post_left), scene.gt, err_threshold);
  e.err_gdn = error_rate(p.gdn_left.disparity, scene.gt, err_threshold);
  e.err_refined = error_rate(p.refined.disparity, scene.gt, err_threshold);
  e.timings = p.timings;
  if (with_confidence) {
    MeasureInputs in;
    in.left = &p.post_left;
    in.right = &p.post_right;
    in.gdn_scores = &p.gdn_left.scores;
    in.reflective = &p.gdn_left.confidence;
    in.seed = cfg.seed;
    for (Measure m : all_measures()) {
      e.auc[m] = auc_sparsification(compute_measure(m, in), p.gdn_left.disparity, scene.gt, err_threshold);
    }
  }
  return e;
}

}  // namespace resmatch
