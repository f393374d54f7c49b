#include "advof/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace advof {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct KeyParser {
  std::string section, key, value;
  std::string where() const { return section + "." + key; }

  double as_double() const {
    double x = 0;
    auto res = std::from_chars(value.data(), value.data() + value.size(), x);
    if (res.ec != std::errc() || res.ptr != value.data() + value.size())
      throw ConfigError("config " + where() + ": not a number: '" + value + "'");
    return x;
  }
  int as_int() const {
    int x = 0;
    auto res = std::from_chars(value.data(), value.data() + value.size(), x);
    if (res.ec != std::errc() || res.ptr != value.data() + value.size())
      throw ConfigError("config " + where() + ": not an integer: '" + value + "'");
    return x;
  }
  uint64_t as_u64() const {
    uint64_t x = 0;
    auto res = std::from_chars(value.data(), value.data() + value.size(), x);
    if (res.ec != std::errc() || res.ptr != value.data() + value.size())
      throw ConfigError("config " + where() + ": not an unsigned integer: '" + value + "'");
    return x;
  }
  bool as_bool() const {
    if (value == "1" || value == "true" || value == "yes") return true;
    if (value == "0" || value == "false" || value == "no") return false;
    throw ConfigError("config " + where() + ": not a boolean: '" + value + "'");
  }
};

void apply(RunConfig& c, const KeyParser& kv) {
  const std::string& s = kv.section;
  const std::string& k = kv.key;
  if (s == "paths") {
    if (k == "scene") c.paths.scene = kv.value;
    else if (k == "labels") c.paths.labels = kv.value;
    else if (k == "output") c.paths.output = kv.value;
    else throw ConfigError("config: unknown key " + kv.where());
  } else if (s == "scene") {
    c.scene.present = true;
    if (k == "extent") c.scene.extent = kv.as_double();
    else if (k == "objects") c.scene.objects = kv.as_int();
    else if (k == "points_per_object") c.scene.points_per_object = kv.as_int();
    else if (k == "size_min") c.scene.size_min = kv.as_double();
    else if (k == "size_max") c.scene.size_max = kv.as_double();
    else if (k == "labels") c.scene.labels = split_list(kv.value);
    else if (k == "shapes") c.scene.shapes = split_list(kv.value);
    else if (k == "background") c.scene.background = kv.as_bool();
    else if (k == "background_points") c.scene.background_points = kv.as_int();
    else if (k == "clearance") c.scene.clearance = kv.as_double();
    else if (k == "seed") c.scene.seed = kv.as_u64();
    else throw ConfigError("config: unknown key " + kv.where());
  } else if (s == "attack") {
    if (k == "mode") {
      if (kv.value == "untargeted") c.attack.mode = Mode::Untargeted;
      else if (kv.value == "targeted") c.attack.mode = Mode::Targeted;
      else throw ConfigError("config attack.mode: expected targeted|untargeted, got '" + kv.value + "'");
    } else if (k == "victim_label") c.attack.victim_label = kv.value;
    else if (k == "target_label") c.attack.target_label = kv.value;
    else if (k == "epsilon") c.attack.epsilon = kv.as_double();
    else if (k == "alpha") c.attack.alpha = kv.as_double();
    else if (k == "beta") c.attack.beta = kv.as_double();
    else if (k == "mu1") c.attack.mu1 = kv.as_double();
    else if (k == "mu2") c.attack.mu2 = kv.as_double();
    else if (k == "max_retries") c.attack.max_retries = kv.as_int();
    else if (k == "iterations") c.attack.iterations = kv.as_int();
    else if (k == "iters_per_view") c.attack.iters_per_view = kv.as_int();
    else if (k == "lr") c.attack.lr = kv.as_double();
    else if (k == "seed") c.attack.seed = kv.as_u64();
    else throw ConfigError("config: unknown key " + kv.where());
  } else if (s == "views") {
    if (k == "fusion_count") c.views.fusion_count = kv.as_int();
    else if (k == "heldout_count") c.views.heldout_count = kv.as_int();
    else if (k == "policy") c.views.policy = policy_from_name(kv.value);
    else if (k == "radius") c.views.radius = kv.as_double();
    else if (k == "height") c.views.height = kv.as_double();
    else if (k == "image_width") c.views.image_width = kv.as_int();
    else if (k == "image_height") c.views.image_height = kv.as_int();
    else if (k == "hfov_deg") c.views.hfov_deg = kv.as_double();
    else if (k == "splat_radius") c.views.splat_radius = kv.as_int();
    else if (k == "calibration_per_object") c.views.calibration_per_object = kv.as_int();
    else throw ConfigError("config: unknown key " + kv.where());
  } else if (s == "encoder") {
    if (k == "seed") c.encoder.seed = kv.as_u64();
    else if (k == "dim") c.encoder.dim = kv.as_int();
    else if (k == "kernel") c.encoder.kernel = kv.as_int();
    else throw ConfigError("config: unknown key " + kv.where());
  } else if (s == "align") {
    if (k == "box_threshold") c.align.box_threshold = kv.as_double();
    else if (k == "eps") c.align.eps = kv.as_double();
    else if (k == "min_pts") c.align.min_pts = kv.as_int();
    else if (k == "selection") {
      if (kv.value == "largest") c.align.selection = ClusterSelection::Largest;
      else if (kv.value == "seeded-random") c.align.selection = ClusterSelection::SeededRandom;
      else throw ConfigError("config align.selection: expected largest|seeded-random");
    } else if (k == "seed") c.align.seed = kv.as_u64();
    else throw ConfigError("config: unknown key " + kv.where());
  } else if (s == "evaluation") {
    if (k == "defenses") c.evaluation.defenses = split_list(kv.value);
    else if (k == "sr_threshold") c.evaluation.sr_threshold = kv.as_double();
    else if (k == "cell_size") c.evaluation.cell_size = kv.as_double();
    else if (k == "defense_seed") c.evaluation.defense_seed = kv.as_u64();
    else if (k == "threads") c.evaluation.threads = kv.as_int();
    else throw ConfigError("config: unknown key " + kv.where());
  } else {
    throw ConfigError("config: unknown section [" + s + "]");
  }
}

}  // namespace

void RunConfig::validate() const {
  if (paths.output.empty()) throw ConfigError("config paths.output: required");
  if (paths.scene.empty()) throw ConfigError("config paths.scene: required");
  if (paths.labels.empty()) throw ConfigError("config paths.labels: required");
  if (attack.victim_label.empty()) throw ConfigError("config attack.victim_label: required");
  if (attack.mode == Mode::Targeted && attack.target_label.empty())
    throw ConfigError("config attack.target_label: required in targeted mode");
  if (!(attack.epsilon > 0)) throw ConfigError("config attack.epsilon: must be positive");
  if (!(attack.mu1 > 0)) throw ConfigError("config attack.mu1: must be positive");
  if (!(attack.mu2 > 0)) throw ConfigError("config attack.mu2: must be positive");
  if (attack.max_retries < 0) throw ConfigError("config attack.max_retries: must be >= 0");
  if (attack.iterations < 1) throw ConfigError("config attack.iterations: must be >= 1");
  if (!(attack.lr > 0)) throw ConfigError("config attack.lr: must be positive");
  if (views.fusion_count < 1) throw ConfigError("config views.fusion_count: must be >= 1");
  if (views.heldout_count < 1) throw ConfigError("config views.heldout_count: must be >= 1");
  if (views.image_width < 8 || views.image_height < 8)
    throw ConfigError("config views.image_width/height: must be >= 8");
  if (encoder.dim < 1) throw ConfigError("config encoder.dim: must be >= 1");
  if (encoder.kernel < 1 || encoder.kernel % 2 == 0)
    throw ConfigError("config encoder.kernel: must be odd and >= 1");
  if (!(align.eps > 0)) throw ConfigError("config align.eps: must be positive");
  if (align.min_pts < 1) throw ConfigError("config align.min_pts: must be >= 1");
  if (!(evaluation.sr_threshold > 0)) throw ConfigError("config evaluation.sr_threshold: must be positive");
  if (!(evaluation.cell_size > 0) || evaluation.cell_size > evaluation.sr_threshold / 2.0)
    throw ConfigError("config evaluation.cell_size: must be in (0, sr_threshold/2]");
  if (evaluation.threads < 0) throw ConfigError("config evaluation.threads: must be >= 0");
  for (const auto& d : evaluation.defenses) defense_from_name(d);  // throws on bad name
  if (scene.present) {
    if (scene.objects < 2) throw ConfigError("config scene.objects: must be >= 2");
    if (scene.points_per_object < 50)
      throw ConfigError("config scene.points_per_object: must be >= 50");
  }
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig config;
  std::istringstream ss(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config " + origin + ":" + std::to_string(lineno) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config " + origin + ":" + std::to_string(lineno) + ": expected key = value");
    if (section.empty())
      throw ConfigError("config " + origin + ":" + std::to_string(lineno) + ": key outside any section");
    KeyParser kv{section, trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
    apply(config, kv);
  }
  if (const char* env = std::getenv("ADVOF_THREADS")) {
    KeyParser kv{"evaluation", "threads", env};
    config.evaluation.threads = kv.as_int();
  }
  return config;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("config: cannot read file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), path);
}

}  // namespace advof
