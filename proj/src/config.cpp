#include "resmatch/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include "resmatch/errors.hpp"

namespace resmatch {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': cannot parse '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

struct Entry {
  const char* key;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Entry number(const char* key, T RunConfig::*m) {
  return {key, [m](RunConfig& c, const std::string& k, const std::string& v) { c.*m = parse_number<T>(k, v); },
          [m](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return fmt(c.*m);
            else return std::to_string(c.*m);
          }};
}

Entry boolean(const char* key, bool RunConfig::*m) {
  return {key, [m](RunConfig& c, const std::string& k, const std::string& v) { c.*m = parse_bool(k, v); },
          [m](const RunConfig& c) { return std::string(c.*m ? "true" : "false"); }};
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> kEntries = {
      {"mode", [](RunConfig& c, const std::string&, const std::string& v) { c.mode = parse_mode(v); },
       [](const RunConfig& c) { return std::string(to_string(c.mode)); }},
      number("channels", &RunConfig::channels),
      number("dmax", &RunConfig::dmax),
      number("seed", &RunConfig::seed),
      number("feature_channels", &RunConfig::feature_channels),
      number("decision_layers", &RunConfig::decision_layers),
      number("decision_width", &RunConfig::decision_width),
      boolean("xent_as_printed", &RunConfig::xent_as_printed),
      number("matcher_epochs", &RunConfig::matcher_epochs),
      number("matcher_batch", &RunConfig::matcher_batch),
      number("matcher_lr", &RunConfig::matcher_lr),
      number("momentum", &RunConfig::momentum),
      number("alpha", &RunConfig::alpha),
      number("margin", &RunConfig::margin),
      number("neg_offset_min", &RunConfig::neg_offset_min),
      number("neg_offset_max", &RunConfig::neg_offset_max),
      number("matcher_samples", &RunConfig::matcher_samples),
      number("cbca_tau", &RunConfig::cbca_tau),
      number("cbca_max_arm", &RunConfig::cbca_max_arm),
      number("cbca_before_sgm", &RunConfig::cbca_before_sgm),
      number("cbca_after_sgm", &RunConfig::cbca_after_sgm),
      number("sgm_p1", &RunConfig::sgm_p1),
      number("sgm_p2", &RunConfig::sgm_p2),
      number("sgm_directions", &RunConfig::sgm_directions),
      number("gdn_channels", &RunConfig::gdn_channels),
      number("gdn_conf_width", &RunConfig::gdn_conf_width),
      number("gdn_epochs", &RunConfig::gdn_epochs),
      number("gdn_batch", &RunConfig::gdn_batch),
      number("gdn_lr", &RunConfig::gdn_lr),
      number("gdn_decimate_epoch", &RunConfig::gdn_decimate_epoch),
      number("gdn_decimate_factor", &RunConfig::gdn_decimate_factor),
      number("gdn_xent_weight", &RunConfig::gdn_xent_weight),
      number("gdn_reflective_weight", &RunConfig::gdn_reflective_weight),
      number("gdn_samples", &RunConfig::gdn_samples),
      number("tau1", &RunConfig::tau1),
      number("tau2", &RunConfig::tau2),
      number("tau3", &RunConfig::tau3),
      number("tau4", &RunConfig::tau4),
      number("median_window", &RunConfig::median_window),
      number("sigma_s", &RunConfig::sigma_s),
      number("sigma_r", &RunConfig::sigma_r),
      number("bilateral_radius", &RunConfig::bilateral_radius),
      {"scene_kind", [](RunConfig& c, const std::string&, const std::string& v) { c.scene_kind = parse_scene_kind(v); },
       [](const RunConfig& c) { return std::string(to_string(c.scene_kind)); }},
      number("scene_height", &RunConfig::scene_height),
      number("scene_width", &RunConfig::scene_width),
      number("scene_noise", &RunConfig::scene_noise),
      number("scene_brightness", &RunConfig::scene_brightness),
      number("scene_occluders", &RunConfig::scene_occluders),
      number("train_scenes", &RunConfig::train_scenes),
      number("val_scenes", &RunConfig::val_scenes),
  };
  return kEntries;
}

}  // namespace

MatchNetConfig RunConfig::matchnet_config() const {
  MatchNetConfig c;
  c.mode = mode;
  c.input_channels = channels;
  c.feature_channels = feature_channels;
  c.decision_layers = decision_layers;
  c.decision_width = decision_width;
  c.xent_as_printed = xent_as_printed;
  return c;
}

MatcherTrainConfig RunConfig::matcher_train_config() const {
  MatcherTrainConfig c;
  c.epochs = matcher_epochs;
  c.batch_size = matcher_batch;
  c.lr = matcher_lr;
  c.momentum = momentum;
  c.alpha = alpha;
  c.margin = margin;
  c.seed = seed;
  return c;
}

MatchSamplingParams RunConfig::match_sampling() const {
  MatchSamplingParams p;
  p.receptive_field = matchnet_config().receptive_field();
  p.neg_offset_min = neg_offset_min;
  p.neg_offset_max = neg_offset_max;
  p.seed = seed;
  return p;
}

PostprocessParams RunConfig::postprocess_params() const {
  PostprocessParams p;
  p.cbca.tau = cbca_tau;
  p.cbca.max_arm = cbca_max_arm;
  p.sgm.p1 = sgm_p1;
  p.sgm.p2 = sgm_p2;
  p.sgm.directions = sgm_directions;
  p.cbca_before_sgm = cbca_before_sgm;
  p.cbca_after_sgm = cbca_after_sgm;
  return p;
}

GdnConfig RunConfig::gdn_config() const { return {dmax, gdn_channels, gdn_conf_width}; }

GdnTrainConfig RunConfig::gdn_train_config() const {
  GdnTrainConfig c;
  c.epochs = gdn_epochs;
  c.batch_size = gdn_batch;
  c.lr = gdn_lr;
  c.momentum = momentum;
  c.decimate_epoch = gdn_decimate_epoch;
  c.decimate_factor = gdn_decimate_factor;
  c.xent_weight = gdn_xent_weight;
  c.reflective_weight = gdn_reflective_weight;
  c.seed = seed;
  return c;
}

RefinementConfig RunConfig::refinement_config() const {
  RefinementConfig c;
  c.tau1 = tau1;
  c.tau2 = tau2;
  c.tau3 = tau3;
  c.tau4 = tau4;
  c.median_window = median_window;
  c.sigma_s = sigma_s;
  c.sigma_r = sigma_r;
  c.bilateral_radius = bilateral_radius;
  return c;
}

SceneSpec RunConfig::scene_spec(int index, bool validation) const {
  SceneSpec s;
  s.kind = scene_kind;
  s.height = scene_height;
  s.width = scene_width;
  s.channels = channels;
  s.dmax = dmax;
  s.noise = scene_noise;
  s.brightness = scene_brightness;
  s.occluders = scene_occluders;
  s.seed = seed * 1000003ULL + (validation ? 500000ULL : 0ULL) + static_cast<std::uint64_t>(index);
  return s;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& e : entries()) {
    if (key == e.key) {
      e.set(cfg, key, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& e : entries()) out.emplace_back(e.key);
  return out;
}

RunConfig parse_run_config(std::istream& is, RunConfig base) {
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  validate(base);
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  return parse_run_config(is, std::move(base));
}

std::string to_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& e : entries()) out += std::string(e.key) + " = " + e.get(cfg) + "\n";
  return out;
}

void write_run_config(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot write " + path.string());
  os << to_text(cfg);
}

void validate(const RunConfig& c) {
  if (c.channels != 1 && c.channels != 3) throw ConfigError("channels must be 1 or 3");
  if (c.dmax < 2) throw ConfigError("dmax must be at least 2");
  if (c.feature_channels < 1 || c.decision_width < 1 || c.decision_layers < 0) {
    throw ConfigError("matcher layer sizes must be positive");
  }
  if (c.matcher_epochs < 0 || c.gdn_epochs < 0) throw ConfigError("epochs must be non-negative");
  if (c.matcher_batch < 1 || c.gdn_batch < 1) throw ConfigError("batch sizes must be positive");
  if (c.matcher_lr <= 0.0 || c.gdn_lr <= 0.0) throw ConfigError("learning rates must be positive");
  if (c.momentum < 0.0 || c.momentum >= 1.0) throw ConfigError("momentum must lie in [0,1)");
  if (c.alpha < 0.0 || c.alpha > 1.0) throw ConfigError("alpha must lie in [0,1]");
  if (c.margin < 0.0) throw ConfigError("margin must be non-negative");
  if (c.neg_offset_min < 0.0 || c.neg_offset_max < c.neg_offset_min) throw ConfigError("bad negative offset range");
  if (c.matcher_samples < 1 || c.gdn_samples < 1) throw ConfigError("sample counts must be positive");
  if (c.cbca_max_arm < 1 || c.cbca_before_sgm < 0 || c.cbca_after_sgm < 0) throw ConfigError("bad CBCA settings");
  if (c.sgm_p1 < 0.0 || c.sgm_p2 < c.sgm_p1) throw ConfigError("SGM requires 0 <= p1 <= p2");
  if (c.sgm_directions != 4 && c.sgm_directions != 8) throw ConfigError("sgm_directions must be 4 or 8");
  if (c.gdn_channels < 1 || c.gdn_conf_width < 1) throw ConfigError("GDN widths must be positive");
  if (c.gdn_decimate_epoch < 1) throw ConfigError("gdn_decimate_epoch is 1-based");
  RefinementConfig r = c.refinement_config();
  validate(r);
  if (c.scene_height < 12 || c.scene_width < 12) throw ConfigError("scenes must be at least 12x12");
  if (c.train_scenes < 1 || c.val_scenes < 1) throw ConfigError("scene counts must be positive");
}

}  // namespace resmatch
