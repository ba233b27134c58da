#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "resmatch/config.hpp"
#include "resmatch/errors.hpp"
#include "resmatch/io.hpp"
#include "resmatch/metrics.hpp"
#include "resmatch/nn/checkpoint.hpp"
#include "resmatch/pipeline.hpp"

namespace resmatch {
namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::string out = ".";
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
  auto* opt = cmd->add_option("--config", c.config, "key = value run configuration");
  if (config_required) opt->required();
  cmd->add_option("--seed", c.seed, "overrides the configured seed");
  cmd->add_option("--set", c.overrides, "key=value override, repeatable");
  cmd->add_option("--out", c.out, "output directory")->capture_default_str();
}

RunConfig resolve(const Common& c, const std::string& command) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) cfg.seed = *c.seed;
  validate(cfg);
  fs::create_directories(c.out);
  write_run_config(fs::path(c.out) / (command + ".config.txt"), cfg);
  return cfg;
}

struct NamedScene {
  std::string id;
  SyntheticScene scene;
};

/// `<id>_left.png`, `<id>_right.png` and `<id>_disp.png` triples, sorted by id.
std::vector<NamedScene> load_scene_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("scene directory " + dir.string() + " does not exist");
  std::vector<std::string> ids;
  const std::string suffix = "_left.png";
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.size() > suffix.size() && name.ends_with(suffix)) ids.push_back(name.substr(0, name.size() - suffix.size()));
  }
  if (ids.empty()) throw InputError("no *_left.png files in " + dir.string());
  std::sort(ids.begin(), ids.end());
  std::vector<NamedScene> out;
  for (const auto& id : ids) {
    NamedScene s{id, {}};
    s.scene.left = read_image_png(dir / (id + "_left.png"));
    s.scene.right = read_image_png(dir / (id + "_right.png"));
    s.scene.gt = read_disparity_png(dir / (id + "_disp.png"));
    s.scene.occluded.assign(s.scene.gt.size(), 0);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<NamedScene> scenes_for(const RunConfig& cfg, const std::string& dir, bool validation) {
  if (!dir.empty()) return load_scene_dir(dir);
  std::vector<NamedScene> out;
  const int n = validation ? cfg.val_scenes : cfg.train_scenes;
  auto scenes = make_scenes(cfg, validation, n);
  for (int i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "%s_%03d", validation ? "val" : "train", i);
    out.push_back({id, std::move(scenes[static_cast<std::size_t>(i)])});
  }
  return out;
}

std::vector<SyntheticScene> plain(std::vector<NamedScene> named) {
  std::vector<SyntheticScene> out;
  for (auto& n : named) out.push_back(std::move(n.scene));
  return out;
}

MatchNet load_matcher(const std::string& path, RunConfig& cfg) {
  MatchNet net = MatchNet::from_checkpoint(nn::load_checkpoint(path));
  cfg.mode = net.config().mode;
  return net;
}

Gdn load_gdn(const std::string& path, const RunConfig& cfg) {
  Gdn net = Gdn::from_checkpoint(nn::load_checkpoint(path));
  if (net.config().dmax != cfg.dmax) {
    throw ConfigError("GDN checkpoint has dmax " + std::to_string(net.config().dmax) + " but the run uses " +
                      std::to_string(cfg.dmax));
  }
  return net;
}

int cmd_generate(const Common& c, int count, bool validation, std::ostream& out) {
  RunConfig cfg = resolve(c, "generate");
  if (count < 1) throw ConfigError("--count must be positive");
  for (int i = 0; i < count; ++i) {
    const SyntheticScene s = generate_scene(cfg.scene_spec(i, validation));
    char id[32];
    std::snprintf(id, sizeof id, "%s_%03d", validation ? "val" : "train", i);
    const fs::path base = fs::path(c.out) / id;
    write_image_png(base.string() + "_left.png", s.left);
    write_image_png(base.string() + "_right.png", s.right);
    write_disparity_png(base.string() + "_disp.png", s.gt);
  }
  out << "wrote " << count << " scenes to " << c.out << "\n";
  return kExitOk;
}

int cmd_train_matcher(const Common& c, const std::string& scene_dir, std::ostream& out) {
  RunConfig cfg = resolve(c, "train-matcher");
  const TrainedMatcher tm = train_matcher_on_scenes(cfg, plain(scenes_for(cfg, scene_dir, false)));
  nn::save_checkpoint(fs::path(c.out) / "matcher.ckpt", tm.net.to_checkpoint());
  tm.log.write_csv(fs::path(c.out) / "matcher_log.csv");
  out << "mode " << to_string(cfg.mode) << ", " << tm.net.description.blocks.size() << " outer blocks, receptive field "
      << tm.net.description.receptive_field() << "\n";
  out << std::setprecision(8) << "final loss " << tm.log.epochs.back().loss << "\n";
  return kExitOk;
}

int cmd_train_gdn(const Common& c, const std::string& matcher_path, const std::string& scene_dir, std::ostream& out) {
  RunConfig cfg = resolve(c, "train-gdn");
  const MatchNet matcher = load_matcher(matcher_path, cfg);
  const TrainedGdn tg = train_gdn_on_scenes(cfg, matcher, plain(scenes_for(cfg, scene_dir, false)));
  nn::save_checkpoint(fs::path(c.out) / "gdn.ckpt", tg.net.to_checkpoint());
  tg.log.write_csv(fs::path(c.out) / "gdn_log.csv");
  const GdnEpochLog& last = tg.log.epochs.back();
  out << std::setprecision(8) << "final loss " << last.loss << ", train accuracy " << last.train_accuracy
      << ", positive labels " << last.positive_fraction << "\n";
  return kExitOk;
}

int cmd_predict(const Common& c, const std::string& left_path, const std::string& right_path,
                const std::string& matcher_path, const std::string& gdn_path, const std::string& stage_name,
                std::ostream& out) {
  RunConfig cfg = resolve(c, "predict");
  const Stage stage = parse_stage(stage_name);
  if (stage >= Stage::gdn && gdn_path.empty()) throw ConfigError("--stage " + stage_name + " needs --gdn");
  const MatchNet matcher = load_matcher(matcher_path, cfg);
  std::optional<Gdn> gdn;
  if (!gdn_path.empty()) gdn = load_gdn(gdn_path, cfg);
  const Image left = read_image_png(left_path);
  const Image right = read_image_png(right_path);
  const PipelineOutput p = run_pipeline(matcher, gdn ? &*gdn : nullptr, left, right, cfg, stage);
  const fs::path dir(c.out);
  switch (stage) {
    case Stage::volume:
      write_cvol(dir / "volume.cvol", p.raw_left);
      write_disparity_png(dir / "disparity.png", winner_takes_all(p.raw_left));
      break;
    case Stage::postprocess:
      write_cvol(dir / "post.cvol", p.post_left);
      write_disparity_png(dir / "disparity.png", winner_takes_all(p.post_left));
      break;
    case Stage::gdn:
      write_disparity_png(dir / "disparity.png", p.gdn_left.disparity);
      write_confidence_png(dir / "confidence.png", p.gdn_left.confidence);
      break;
    case Stage::refine: {
      write_disparity_png(dir / "disparity.png", p.refined.disparity);
      write_confidence_png(dir / "confidence.png", p.gdn_left.confidence);
      write_label_png(dir / "labels.png", p.refined.labels);
      const auto counts = p.refined.labels.counts();
      out << "labels correct " << counts[0] << ", mismatch " << counts[1] << ", occlusion " << counts[2] << "\n";
      break;
    }
  }
  out << "stage " << to_string(stage) << " written to " << c.out << "\n";
  return kExitOk;
}

int cmd_eval(const Common& c, const std::string& pred, const std::string& gt, double threshold, std::ostream& out) {
  resolve(c, "eval");
  if (threshold <= 0.0) throw ConfigError("--threshold must be positive");
  std::vector<std::pair<fs::path, fs::path>> pairs;
  if (fs::is_directory(gt)) {
    // A scene directory also holds the views; only its *_disp.png files are ground truth.
    std::vector<fs::path> files;
    bool scene_dir = false;
    for (const auto& e : fs::directory_iterator(gt)) {
      if (e.path().extension() != ".png") continue;
      files.push_back(e.path());
      scene_dir |= e.path().filename().string().ends_with("_disp.png");
    }
    for (const auto& g : files) {
      if (scene_dir && !g.filename().string().ends_with("_disp.png")) continue;
      const fs::path p = fs::path(pred) / g.filename();
      if (!fs::exists(p)) throw InputError("no prediction for " + g.filename().string() + " in " + pred);
      pairs.emplace_back(p, g);
    }
    std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
  } else {
    pairs.emplace_back(pred, gt);
  }
  if (pairs.empty()) throw InputError("no ground-truth PNG files in " + gt);
  std::ofstream csv(fs::path(c.out) / "eval.csv");
  csv << "image_id,error\n" << std::setprecision(10);
  double sum = 0.0;
  for (const auto& [p, g] : pairs) {
    const double e = error_rate(read_disparity_png(p), read_disparity_png(g), threshold);
    csv << g.stem().string() << ',' << e << '\n';
    sum += e;
  }
  const double mean = sum / static_cast<double>(pairs.size());
  csv << "mean," << mean << '\n';
  out << std::setprecision(6) << threshold << "-px error over " << pairs.size() << " images: " << mean << "\n";
  return kExitOk;
}

int cmd_confidence_eval(const Common& c, const std::string& matcher_path, const std::string& gdn_path,
                        const std::string& scene_dir, double threshold, std::ostream& out) {
  RunConfig cfg = resolve(c, "confidence-eval");
  const MatchNet matcher = load_matcher(matcher_path, cfg);
  const Gdn gdn = load_gdn(gdn_path, cfg);
  const auto scenes = scenes_for(cfg, scene_dir, true);
  std::ofstream csv(fs::path(c.out) / "auc.csv");
  csv << "image_id,measure,auc\n" << std::setprecision(10);
  std::map<Measure, double> mean;
  for (const auto& s : scenes) {
    const SceneEvaluation e = evaluate_scene(matcher, gdn, s.scene, cfg, threshold);
    for (const auto& [m, v] : e.auc) {
      csv << s.id << ',' << to_string(m) << ',' << v << '\n';
      mean[m] += v / static_cast<double>(scenes.size());
    }
  }
  out << "measure      mean AUC\n" << std::fixed << std::setprecision(4);
  for (const auto& [m, v] : mean) {
    csv << "mean," << to_string(m) << ',' << v << '\n';
    out << std::left << std::setw(12) << to_string(m) << ' ' << v << "\n";
  }
  return kExitOk;
}

int cmd_bench(const Common& c, const std::string& matcher_path, const std::string& gdn_path,
              const std::string& left_path, const std::string& right_path, int repeat, std::ostream& out) {
  RunConfig cfg = resolve(c, "bench");
  if (repeat < 1) throw ConfigError("--repeat must be positive");
  const MatchNet matcher = load_matcher(matcher_path, cfg);
  const Gdn gdn = load_gdn(gdn_path, cfg);
  Image left, right;
  if (!left_path.empty() || !right_path.empty()) {
    left = read_image_png(left_path);
    right = read_image_png(right_path);
  } else {
    const SyntheticScene s = generate_scene(cfg.scene_spec(0, true));
    left = s.left;
    right = s.right;
  }
  StageTimings t;
  for (int r = 0; r < repeat; ++r) {
    const StageTimings one = run_pipeline(matcher, &gdn, left, right, cfg, Stage::refine).timings;
    t.description += one.description / repeat;
    t.decision += one.decision / repeat;
    t.cbca += one.cbca / repeat;
    t.sgm += one.sgm / repeat;
    t.gdn += one.gdn / repeat;
    t.interpolation += one.interpolation / repeat;
    t.subpixel += one.subpixel / repeat;
    t.smoothing += one.smoothing / repeat;
  }
  const std::vector<std::pair<const char*, double>> rows = {
      {"description", t.description}, {"decision", t.decision},           {"CBCA", t.cbca},
      {"SGM", t.sgm},                 {"GDN", t.gdn},                     {"interpolation", t.interpolation},
      {"subpixel", t.subpixel},       {"smoothing", t.smoothing}};
  std::ofstream csv(fs::path(c.out) / "bench.csv");
  csv << "stage,seconds\n" << std::setprecision(9);
  out << "mode " << to_string(cfg.mode) << ", " << left.height << "x" << left.width << ", dmax " << cfg.dmax << "\n";
  out << std::fixed << std::setprecision(6);
  for (const auto& [name, sec] : rows) {
    csv << name << ',' << sec << '\n';
    out << std::left << std::setw(14) << name << ' ' << sec << " s\n";
  }
  return kExitOk;
}

int cmd_lambda_report(const Common& c, const std::string& matcher_path, std::ostream& out) {
  resolve(c, "lambda-report");
  const nn::Checkpoint ckpt = nn::load_checkpoint(matcher_path);
  const MatchNet net = MatchNet::from_checkpoint(ckpt);
  const auto lambdas = lambda_values(net);
  std::ofstream csv(fs::path(c.out) / "lambda.csv");
  csv << "block,lambda0,lambda1,lambda2,skip_mass\n" << std::setprecision(10);
  out << "block  lambda0   lambda1   lambda2   skip mass\n" << std::fixed << std::setprecision(4);
  for (std::size_t b = 0; b < lambdas.size(); ++b) {
    const LambdaTriple& l = lambdas[b];
    csv << b << ',' << l.lambda0 << ',' << l.lambda1 << ',' << l.lambda2 << ',' << l.skip_mass() << '\n';
    out << std::setw(5) << b << "  " << std::setw(8) << l.lambda0 << "  " << std::setw(8) << l.lambda1 << "  "
        << std::setw(8) << l.lambda2 << "  " << std::setw(8) << l.skip_mass() << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stereo matching with residual matching-cost networks, a global disparity network and refinement",
               "resmatch"};
  app.require_subcommand(1);

  Common c;
  std::string scenes, matcher, gdn, left, right, pred, gt, stage = "refine", split = "val";
  int count = 10, repeat = 1;
  double threshold = 3.0;

  auto* gen = app.add_subcommand("generate", "write synthetic stereo scenes");
  add_common(gen, c, false);
  gen->add_option("--count", count, "number of scenes")->capture_default_str();
  gen->add_option("--split", split, "train or val")->check(CLI::IsMember({"train", "val"}))->capture_default_str();

  auto* tm = app.add_subcommand("train-matcher", "train the matching-cost network");
  add_common(tm, c, true);
  tm->add_option("--scenes", scenes, "directory of *_left/_right/_disp.png triples; synthetic scenes otherwise");

  auto* tg = app.add_subcommand("train-gdn", "train the global disparity network");
  add_common(tg, c, true);
  tg->add_option("--matcher", matcher, "matcher checkpoint")->required();
  tg->add_option("--scenes", scenes, "directory of *_left/_right/_disp.png triples; synthetic scenes otherwise");

  auto* pr = app.add_subcommand("predict", "run the pipeline on a rectified pair");
  add_common(pr, c, false);
  pr->add_option("--left", left, "left image")->required();
  pr->add_option("--right", right, "right image")->required();
  pr->add_option("--matcher", matcher, "matcher checkpoint")->required();
  pr->add_option("--gdn", gdn, "GDN checkpoint, needed for the gdn and refine stages");
  pr->add_option("--stage", stage, "volume, postprocess, gdn or refine")->capture_default_str();

  auto* ev = app.add_subcommand("eval", "n-pixel error of predicted disparities");
  add_common(ev, c, false);
  ev->add_option("--pred", pred, "prediction PNG or directory")->required();
  ev->add_option("--gt", gt, "ground-truth PNG or directory with matching file names")->required();
  ev->add_option("--threshold", threshold, "error threshold in pixels")->capture_default_str();

  auto* ce = app.add_subcommand("confidence-eval", "sparsification AUC of every confidence measure");
  add_common(ce, c, false);
  ce->add_option("--matcher", matcher, "matcher checkpoint")->required();
  ce->add_option("--gdn", gdn, "GDN checkpoint")->required();
  ce->add_option("--scenes", scenes, "directory of *_left/_right/_disp.png triples; validation scenes otherwise");
  ce->add_option("--threshold", threshold, "error threshold in pixels")->capture_default_str();

  auto* be = app.add_subcommand("bench", "wall time per prediction component");
  add_common(be, c, false);
  be->add_option("--matcher", matcher, "matcher checkpoint")->required();
  be->add_option("--gdn", gdn, "GDN checkpoint")->required();
  be->add_option("--left", left, "left image; first validation scene otherwise");
  be->add_option("--right", right, "right image");
  be->add_option("--repeat", repeat, "runs to average")->capture_default_str();

  auto* lr = app.add_subcommand("lambda-report", "highway weights of a matcher checkpoint");
  add_common(lr, c, false);
  lr->add_option("--matcher", matcher, "matcher checkpoint")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_generate(c, count, split == "val", out);
    if (*tm) return cmd_train_matcher(c, scenes, out);
    if (*tg) return cmd_train_gdn(c, matcher, scenes, out);
    if (*pr) return cmd_predict(c, left, right, matcher, gdn, stage, out);
    if (*ev) return cmd_eval(c, pred, gt, threshold, out);
    if (*ce) return cmd_confidence_eval(c, matcher, gdn, scenes, threshold, out);
    if (*be) return cmd_bench(c, matcher, gdn, left, right, repeat, out);
    if (*lr) return cmd_lambda_report(c, matcher, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const StateError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const InputError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace resmatch
