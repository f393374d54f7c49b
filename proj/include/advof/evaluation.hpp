#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "advof/fusion.hpp"

namespace advof {

enum class DefenseKind { Shear, Scale, GaussianNoise, BrightnessUp, BrightnessDown };

DefenseKind defense_from_name(const std::string& name);
const char* defense_name(DefenseKind kind);

struct DefenseTransform {
  DefenseKind kind = DefenseKind::GaussianNoise;
  double shear_min_deg = -16.0, shear_max_deg = 16.0;
  double scale = 0.8;
  double sigma = 0.1;
  double brightness_up = 1.5, brightness_down = 0.5;
  uint64_t seed = 0;
};

// dst -> src affine map (about the image center) used by the geometric
// defenses: src_x = m[0]*x + m[1]*y + m[2], src_y = m[3]*x + m[4]*y + m[5].
// Identity for the non-geometric kinds.
std::array<double, 6> defense_affine(const DefenseTransform& t, int width, int height);

// Shear/scale resample bilinearly with edge replication; Gaussian noise adds
// seeded N(0, sigma^2) per channel; brightness multiplies. Output clamped to
// [0,1].
Image apply_defense(const Image& image, const DefenseTransform& t);

// Nearest-neighbor transform of a mask under the same affine map.
ObjectMask transform_mask(const ObjectMask& mask, const DefenseTransform& t);

struct ViewRecord {
  int view_id = -1;
  bool included = true;
  std::string defense = "none";
  std::string benign_label, attacked_label;
  double benign_conf = 0.0, attacked_conf = 0.0;
};

struct AttackReport {
  double benign_acc = 0.0, attacked_acc = 0.0;
  double untargeted_asr = 0.0, targeted_asr = 0.0;
  bool targeted = false;
  int included_views = 0, excluded_views = 0;
  std::map<int, double> background_delta;  // object id -> attacked - benign acc
  double mean_abs_background_delta = 0.0;
  std::map<std::string, double> defense_asr;           // untargeted ASR under defense
  std::map<std::string, double> defense_targeted_asr;  // targeted mode only
  std::vector<ViewRecord> records;
  std::string ablation;

  std::string to_text() const;
  std::string to_csv() const;
};

struct EvalOptions {
  int splat_radius = 1;
  std::vector<DefenseTransform> defenses;
};

// Table 4 protocol at desk scale: classify the victim region of every held-out
// view on the benign and perturbed renders; Acc/ASR over included views,
// per-object accuracy deltas for the background.
AttackReport evaluate_attack(const PointCloud& cloud, const Perturbation& delta,
                             const VictimObject& victim, const std::vector<CameraView>& heldout,
                             const EncoderContract& encoder, const LabelRegistry& registry,
                             const PrototypeSet& protos, Mode mode,
                             const TargetExemplar* exemplar = nullptr,
                             const EvalOptions& options = {});

struct LocalizationResult {
  double benign_sr = 0.0, attacked_sr = 0.0;
  bool benign_no_cell = false, attacked_no_cell = false;
};

// SR proxy: localize the victim label on semantic maps built from benign and
// perturbed renders; success iff the winning cell center lies within
// `threshold` meters of the victim centroid (ground plane distance).
LocalizationResult localization_success(const PointCloud& cloud, const Perturbation& delta,
                                        const VictimObject& victim,
                                        const std::vector<CameraView>& views,
                                        const EncoderContract& encoder, const PrototypeSet& protos,
                                        double threshold = 1.0, double cell_size = 0.25,
                                        int splat_radius = 1);

}  // namespace advof
