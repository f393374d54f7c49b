#pragma once

#include <string>
#include <vector>

#include "advof/scene.hpp"

namespace advof {

// Flat sectioned key=value run configuration. Unknown keys are rejected so
// typos fail loudly; every validation error names section.key.
struct RunConfig {
  struct Paths {
    std::string scene, labels, output;
  } paths;

  struct SceneGen {
    bool present = false;  // [scene] section appeared
    double extent = 8.0;
    int objects = 5;
    int points_per_object = 2500;
    double size_min = 0.35, size_max = 0.55;
    std::vector<std::string> labels;  // optional per-object labels
    std::vector<std::string> shapes;  // optional per-object shapes
    bool background = true;
    int background_points = 4000;
    double clearance = 0.25;
    uint64_t seed = 1;
  } scene;

  struct Attack {
    Mode mode = Mode::Untargeted;
    std::string victim_label;
    std::string target_label;
    double epsilon = 32.0 / 255.0;
    double alpha = 0.5, beta = 0.01;
    double mu1 = 0.01, mu2 = 0.05;
    int max_retries = 5;
    int iterations = 200;
    int iters_per_view = 0;
    double lr = 0.01;
    uint64_t seed = 7;
  } attack;

  struct Views {
    int fusion_count = 8;
    int heldout_count = 20;
    ViewPolicy policy = ViewPolicy::Ring;
    double radius = 2.2;
    double height = 1.2;
    int image_width = 96;
    int image_height = 96;
    double hfov_deg = 60.0;
    int splat_radius = 1;
    int calibration_per_object = 4;
  } views;

  struct Encoder {
    uint64_t seed = 11;
    int dim = 16;
    int kernel = 5;
  } encoder;

  struct Align {
    double box_threshold = 0.40;
    double eps = 0.12;
    int min_pts = 8;
    ClusterSelection selection = ClusterSelection::Largest;
    uint64_t seed = 3;
  } align;

  struct Evaluation {
    std::vector<std::string> defenses;
    double sr_threshold = 1.0;
    double cell_size = 0.25;
    uint64_t defense_seed = 99;
    int threads = 0;  // 0 = auto; ADVOF_THREADS overrides
  } evaluation;

  void validate() const;
};

RunConfig parse_config_file(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");

}  // namespace advof
