#include "advof/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace advof {

ExitCode exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return ExitCode::Config;
  if (dynamic_cast<const AlignmentError*>(&e)) return ExitCode::Alignment;
  if (dynamic_cast<const FusionError*>(&e)) return ExitCode::Fusion;
  if (dynamic_cast<const EvaluationError*>(&e)) return ExitCode::Evaluation;
  if (dynamic_cast<const GenerationError*>(&e)) return ExitCode::SceneGeneration;
  if (dynamic_cast<const IoError*>(&e)) return ExitCode::Io;
  return ExitCode::Failure;
}

std::string AblationFlags::describe() const {
  std::string out;
  auto add = [&](const char* name) {
    if (!out.empty()) out += ",";
    out += name;
  };
  if (alignment) add("alignment");
  if (l2d) add("l2d");
  if (l3d) add("l3d");
  if (fusion) add("fusion");
  return out;
}

PipelineArtifacts artifact_names() {
  PipelineArtifacts a;
  a.scene = "scene.txt";
  a.labels = "labels.txt";
  a.prototypes = "protos.txt";
  a.victim = "victim.txt";
  a.delta = "delta.txt";
  a.fusion_report = "fusion_report.txt";
  a.trace = "trace.txt";
  a.attack_report = "attack_report.txt";
  a.attack_csv = "attack_report.csv";
  a.view_before = "view_before.ppm";
  a.view_after = "view_after.ppm";
  a.manifest = "manifest.txt";
  return a;
}

namespace {

// Default label pool for generated scenes without explicit labels.
const char* kLabelPool[] = {"chair", "table",  "sofa", "lamp",   "monitor",
                            "plant", "bottle", "ball", "basket", "printer"};

SceneSpec scene_spec_from_config(const RunConfig& config) {
  const auto& sg = config.scene;
  SceneSpec spec;
  spec.extent = sg.extent;
  spec.background = sg.background;
  spec.background_points = sg.background_points;
  spec.clearance = sg.clearance;
  spec.seed = sg.seed;
  const Shape cycle[3] = {Shape::Box, Shape::Sphere, Shape::Cylinder};
  for (int k = 0; k < sg.objects; ++k) {
    ObjectSpec o;
    o.shape = k < int(sg.shapes.size()) ? shape_from_name(sg.shapes[size_t(k)])
                                        : cycle[k % 3];
    o.size_min = sg.size_min;
    o.size_max = sg.size_max;
    o.points = sg.points_per_object;
    o.label = k < int(sg.labels.size())
                  ? sg.labels[size_t(k)]
                  : kLabelPool[k % (sizeof(kLabelPool) / sizeof(kLabelPool[0]))];
    spec.objects.push_back(std::move(o));
  }
  return spec;
}

int first_id_with_label(const LabelRegistry& registry, const std::string& label,
                        const std::string& what) {
  for (const auto& [id, l] : registry.entries)
    if (l == label) return id;
  throw ConfigError("config attack." + what + ": label '" + label + "' not present in scene");
}

ViewSpec base_view_spec(const RunConfig& config) {
  ViewSpec vs;
  vs.radius = config.views.radius;
  vs.height = config.views.height;
  vs.image_width = config.views.image_width;
  vs.image_height = config.views.image_height;
  vs.hfov_deg = config.views.hfov_deg;
  return vs;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write: " + path);
  f << text;
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

std::string trace_text(const FusionReport& report) {
  std::ostringstream os;
  os << "trace v1\n";
  for (const auto& view : report.views) {
    int iter = 0;
    for (const auto& e : view.trace) {
      os << "view=" << view.view_id << " iter=" << ++iter << " objective=" << fmt(e.objective)
         << " l2d=" << fmt(e.total) << " i2i=" << fmt(e.i2i) << " i2t=" << fmt(e.i2t)
         << " b2b=" << fmt(e.b2b) << " color=" << fmt(e.color) << " chamfer=" << fmt(e.chamfer)
         << " weight=" << fmt(e.weight) << "\n";
    }
  }
  return os.str();
}

}  // namespace

Scene pipeline_load_or_generate_scene(const RunConfig& config, bool* generated) {
  if (generated) *generated = false;
  if (fs::exists(config.paths.scene)) {
    Scene scene;
    scene.registry = load_labels(config.paths.labels);
    scene.cloud = load_scene(config.paths.scene);
    scene.cloud.validate(&scene.registry);
    return scene;
  }
  if (!config.scene.present)
    throw ConfigError("config paths.scene: file '" + config.paths.scene +
                      "' missing and no [scene] section to generate it");
  Scene scene = generate_scene(scene_spec_from_config(config));
  fs::path scene_path(config.paths.scene);
  if (scene_path.has_parent_path()) fs::create_directories(scene_path.parent_path());
  fs::path labels_path(config.paths.labels);
  if (labels_path.has_parent_path()) fs::create_directories(labels_path.parent_path());
  save_scene(config.paths.scene, scene.cloud);
  save_labels(config.paths.labels, scene.registry);
  if (generated) *generated = true;
  return scene;
}

std::vector<CameraView> pipeline_calibration_views(const Scene& scene, const RunConfig& config) {
  std::vector<CameraView> views;
  int next_id = 1000;
  for (const auto& [id, label] : scene.registry.entries) {
    if (id == 0) continue;  // floor is visible in every object's views anyway
    ViewSpec vs = base_view_spec(config);
    vs.count = config.views.calibration_per_object;
    vs.policy = ViewPolicy::Ring;
    vs.phase = 0.35;  // offset from the fusion ring
    vs.first_view_id = next_id;
    auto object_views = sample_views(scene.cloud, id, vs);
    views.insert(views.end(), object_views.begin(), object_views.end());
    next_id += vs.count;
  }
  return views;
}

std::vector<CameraView> pipeline_fusion_views(const Scene& scene, const RunConfig& config) {
  int target_id = first_id_with_label(scene.registry, config.attack.victim_label, "victim_label");
  ViewSpec vs = base_view_spec(config);
  vs.count = config.views.fusion_count;
  vs.policy = config.views.policy;
  vs.phase = 0.0;
  vs.seed = sub_seed(config.attack.seed, 1);
  vs.first_view_id = 100;
  return sample_views(scene.cloud, target_id, vs);
}

std::vector<CameraView> pipeline_heldout_views(const Scene& scene, const RunConfig& config) {
  int target_id = first_id_with_label(scene.registry, config.attack.victim_label, "victim_label");
  ViewSpec vs = base_view_spec(config);
  vs.count = config.views.heldout_count;
  vs.policy = config.views.policy;
  vs.phase = M_PI / std::max(1, config.views.fusion_count);  // disjoint from the fusion ring
  vs.seed = sub_seed(config.attack.seed, 2);
  vs.first_view_id = 200;
  return sample_views(scene.cloud, target_id, vs);
}

TargetExemplar pipeline_target_exemplar(const Scene& scene, const RunConfig& config) {
  int target_id = first_id_with_label(scene.registry, config.attack.target_label, "target_label");
  ViewSpec vs = base_view_spec(config);
  vs.count = 1;
  vs.policy = ViewPolicy::Ring;
  vs.phase = 0.0;
  vs.first_view_id = 900;
  CameraView view = sample_views(scene.cloud, target_id, vs)[0];
  RenderedView rendered = rasterize(scene.cloud, view, config.views.splat_radius);
  TargetExemplar exemplar;
  exemplar.image = rendered.color;
  exemplar.mask = mask_from_points(rendered, scene.cloud.points_of(target_id), target_id);
  exemplar.label = config.attack.target_label;
  exemplar.validate();
  return exemplar;
}

PipelineResult run_pipeline(const RunConfig& config, const AblationFlags& ablate) {
  config.validate();
  if (!config.scene.present && !fs::exists(config.paths.scene))
    throw ConfigError("config paths.scene: file '" + config.paths.scene + "' does not exist");

  const PipelineArtifacts names = artifact_names();
  PipelineResult result;
  fs::create_directories(config.paths.output);
  auto out_path = [&](const std::string& name) {
    return (fs::path(config.paths.output) / name).string();
  };
  auto track = [&](const std::string& name) { result.artifacts.push_back(name); };

  bool generated = false;
  Scene scene = pipeline_load_or_generate_scene(config, &generated);
  if (generated) {
    // Track scene files in the manifest when they live in the output dir.
    fs::path out_dir = fs::absolute(config.paths.output);
    for (const std::string* p : {&config.paths.scene, &config.paths.labels}) {
      fs::path abs = fs::absolute(*p);
      if (abs.parent_path() == out_dir) track(abs.filename().string());
    }
  }
  if (!scene.registry.has_label(config.attack.victim_label))
    throw ConfigError("config attack.victim_label: label '" + config.attack.victim_label +
                      "' not in scene registry");
  if (config.attack.mode == Mode::Targeted &&
      !scene.registry.has_label(config.attack.target_label))
    throw ConfigError("config attack.target_label: label '" + config.attack.target_label +
                      "' not in scene registry");

  // Stage: calibrate.
  ToyEncoder encoder(config.encoder.seed, config.encoder.dim, config.encoder.kernel);
  PrototypeSet protos;
  try {
    std::vector<CameraView> calib_views = pipeline_calibration_views(scene, config);
    protos = calibrate_prototypes(scene.cloud, scene.registry, calib_views, encoder,
                                  config.views.splat_radius);
  } catch (const Error& e) {
    throw CalibrationError(std::string("calibrate stage: ") + e.what());
  }
  encoder.set_prototypes(&protos);
  save_prototypes(out_path(names.prototypes), protos);
  track(names.prototypes);

  // Stage: align.
  std::vector<CameraView> fusion_views = pipeline_fusion_views(scene, config);
  VictimObject victim;
  try {
    OracleSegmenter segmenter(scene.cloud, scene.registry);
    AlignConfig acfg;
    acfg.box_threshold = config.align.box_threshold;
    acfg.eps = config.align.eps;
    acfg.min_pts = config.align.min_pts;
    acfg.selection = config.align.selection;
    acfg.seed = config.align.seed;
    acfg.splat_radius = config.views.splat_radius;
    acfg.cluster = !ablate.alignment;
    victim = align_victim(scene.cloud, fusion_views, config.attack.victim_label, segmenter, acfg);
  } catch (const AlignmentError&) {
    throw;
  } catch (const Error& e) {
    throw AlignmentError(std::string("align stage: ") + e.what());
  }
  save_victim(out_path(names.victim), victim);
  track(names.victim);

  // Stage: attack.
  TargetExemplar exemplar;
  const TargetExemplar* exemplar_ptr = nullptr;
  if (config.attack.mode == Mode::Targeted) {
    exemplar = pipeline_target_exemplar(scene, config);
    exemplar_ptr = &exemplar;
  }
  FusionConfig fcfg;
  fcfg.epsilon = config.attack.epsilon;
  fcfg.alpha = config.attack.alpha;
  fcfg.beta = config.attack.beta;
  fcfg.mu1 = config.attack.mu1;
  fcfg.mu2 = config.attack.mu2;
  fcfg.max_retries = config.attack.max_retries;
  fcfg.mode = config.attack.mode;
  fcfg.total_iters = config.attack.iterations;
  fcfg.iters_per_view = config.attack.iters_per_view;
  fcfg.adam.lr = config.attack.lr;
  fcfg.splat_radius = config.views.splat_radius;
  fcfg.seed = config.attack.seed;
  fcfg.enable_l2d = !ablate.l2d;
  fcfg.enable_l3d = !ablate.l3d;
  fcfg.uniform_weights = ablate.fusion;
  fcfg.disable_checks = ablate.fusion;

  FusionResult fused =
      fuse(scene.cloud, victim, fusion_views, encoder, protos, fcfg, exemplar_ptr);
  result.delta = fused.delta;
  result.fusion_report = std::move(fused.report);
  result.fusion_report.ablation = ablate.describe();

  save_perturbation(out_path(names.delta), result.delta);
  track(names.delta);
  write_text_file(out_path(names.fusion_report), result.fusion_report.to_text());
  track(names.fusion_report);
  write_text_file(out_path(names.trace), trace_text(result.fusion_report));
  track(names.trace);

  // Before/after renders of the top-weight (first processed) view.
  {
    int top_id = -1;
    for (const auto& v : result.fusion_report.views)
      if (v.order == 0) top_id = v.view_id;
    const CameraView* top_view = nullptr;
    for (const auto& v : fusion_views)
      if (v.id == top_id) top_view = &v;
    if (top_view) {
      RenderedView rendered = rasterize(scene.cloud, *top_view, config.views.splat_radius);
      write_ppm(out_path(names.view_before), rendered.color);
      track(names.view_before);
      Image adv = clamped_add(rendered.color, render_perturbation(result.delta.rgb, rendered));
      write_ppm(out_path(names.view_after), adv);
      track(names.view_after);
    }
  }

  // Stage: evaluate.
  try {
    std::vector<CameraView> heldout = pipeline_heldout_views(scene, config);
    EvalOptions opts;
    opts.splat_radius = config.views.splat_radius;
    for (const auto& name : config.evaluation.defenses) {
      DefenseTransform t;
      t.kind = defense_from_name(name);
      t.seed = sub_seed(config.evaluation.defense_seed, uint64_t(t.kind));
      opts.defenses.push_back(t);
    }
    result.attack_report =
        evaluate_attack(scene.cloud, result.delta, victim, heldout, encoder, scene.registry,
                        protos, config.attack.mode, exemplar_ptr, opts);
    result.attack_report.ablation = ablate.describe();
    result.localization =
        localization_success(scene.cloud, result.delta, victim, heldout, encoder, protos,
                             config.evaluation.sr_threshold, config.evaluation.cell_size,
                             config.views.splat_radius);
  } catch (const Error& e) {
    throw EvaluationError(std::string("evaluate stage: ") + e.what());
  }

  std::ostringstream report_text;
  report_text << result.attack_report.to_text();
  report_text << "benign_sr " << fmt(result.localization.benign_sr)
              << (result.localization.benign_no_cell ? " no-true-cell" : "") << "\n";
  report_text << "attacked_sr " << fmt(result.localization.attacked_sr)
              << (result.localization.attacked_no_cell ? " no-true-cell" : "") << "\n";
  write_text_file(out_path(names.attack_report), report_text.str());
  track(names.attack_report);
  write_text_file(out_path(names.attack_csv), result.attack_report.to_csv());
  track(names.attack_csv);

  write_manifest(config.paths.output, result.artifacts);
  return result;
}

uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot hash missing file: " + path);
  uint64_t h = 1469598103934665603ULL;
  char buf[1 << 16];
  while (f) {
    f.read(buf, sizeof buf);
    std::streamsize n = f.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= uint64_t(uint8_t(buf[i]));
      h *= 1099511628211ULL;
    }
  }
  return h;
}

void write_manifest(const std::string& dir, const std::vector<std::string>& artifacts) {
  std::vector<std::string> sorted = artifacts;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::ostringstream os;
  os << "manifest v1\n";
  char buf[20];
  for (const auto& name : sorted) {
    std::snprintf(buf, sizeof buf, "%016llx",
                  (unsigned long long)fnv1a64_file((fs::path(dir) / name).string()));
    os << buf << "  " << name << "\n";
  }
  write_text_file((fs::path(dir) / artifact_names().manifest).string(), os.str());
}

bool verify_manifest(const std::string& dir, std::string* details) {
  fs::path manifest_path = fs::path(dir) / artifact_names().manifest;
  std::ifstream f(manifest_path, std::ios::binary);
  if (!f) {
    if (details) *details = "missing manifest: " + manifest_path.string();
    return false;
  }
  std::string header;
  std::getline(f, header);
  if (header != "manifest v1") {
    if (details) *details = "bad manifest header";
    return false;
  }
  bool ok = true;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    size_t sep = line.find("  ");
    if (sep == std::string::npos || sep != 16) {
      if (details) *details += "malformed manifest line: " + line + "\n";
      ok = false;
      continue;
    }
    std::string hex = line.substr(0, sep);
    std::string name = line.substr(sep + 2);
    uint64_t expected = std::stoull(hex, nullptr, 16);
    fs::path p = fs::path(dir) / name;
    if (!fs::exists(p)) {
      if (details) *details += "missing artifact: " + name + "\n";
      ok = false;
      continue;
    }
    if (fnv1a64_file(p.string()) != expected) {
      if (details) *details += "hash mismatch: " + name + "\n";
      ok = false;
    }
  }
  return ok;
}

}  // namespace advof
