#pragma once

#include "advof/config.hpp"
#include "advof/evaluation.hpp"

namespace advof {

enum class ExitCode : int {
  Ok = 0,
  Failure = 1,
  Config = 2,
  Alignment = 3,
  Fusion = 4,
  Evaluation = 5,
  SceneGeneration = 6,
  Io = 7,
};

ExitCode exit_code_for(const std::exception& e);

struct AblationFlags {
  bool alignment = false;  // raw un-clustered masks
  bool l2d = false;        // drop the 2D objective
  bool l3d = false;        // drop the 3D regularizer
  bool fusion = false;     // uniform weights, no gates
  std::string describe() const;
};

struct PipelineArtifacts {
  std::string scene, labels, prototypes, victim, delta, fusion_report, trace, attack_report,
      attack_csv, view_before, view_after, manifest;
};

// Artifact names inside the output directory.
PipelineArtifacts artifact_names();

struct PipelineResult {
  FusionReport fusion_report;
  AttackReport attack_report;
  LocalizationResult localization;
  Perturbation delta;
  std::vector<std::string> artifacts;  // relative to output dir
};

// Stage helpers used by the CLI subcommands.
Scene pipeline_load_or_generate_scene(const RunConfig& config, bool* generated = nullptr);
std::vector<CameraView> pipeline_calibration_views(const Scene& scene, const RunConfig& config);
std::vector<CameraView> pipeline_fusion_views(const Scene& scene, const RunConfig& config);
std::vector<CameraView> pipeline_heldout_views(const Scene& scene, const RunConfig& config);
TargetExemplar pipeline_target_exemplar(const Scene& scene, const RunConfig& config);

// calibrate -> align -> fuse -> evaluate, writing every artifact plus the
// hash manifest into config.paths.output.
PipelineResult run_pipeline(const RunConfig& config, const AblationFlags& ablate = {});

uint64_t fnv1a64_file(const std::string& path);
void write_manifest(const std::string& dir, const std::vector<std::string>& artifacts);
// True when every manifest entry matches; details collects mismatch messages.
bool verify_manifest(const std::string& dir, std::string* details = nullptr);

}  // namespace advof
