#pragma once

#include <string>
#include <vector>

#include "advof/alignment.hpp"
#include "advof/losses.hpp"

namespace advof {

// Per-point perturbation over the whole cloud; nonzero only on the victim.
// The L-inf bound on RGB deltas holds after every optimizer step.
struct Perturbation {
  std::vector<Vec3> rgb;  // same indexing as the cloud
  std::vector<Vec3> pos;  // empty in color-only mode
  double epsilon = 32.0 / 255.0;

  static Perturbation zeros(size_t n_points, double epsilon, bool positional = false) {
    Perturbation p;
    p.rgb.assign(n_points, Vec3::Zero());
    if (positional) p.pos.assign(n_points, Vec3::Zero());
    p.epsilon = epsilon;
    return p;
  }

  double max_abs_rgb() const {
    double m = 0;
    for (const Vec3& d : rgb) m = std::max(m, d.cwiseAbs().maxCoeff());
    return m;
  }

  void validate() const {
    if (max_abs_rgb() > epsilon)
      throw ContractError("perturbation: rgb delta exceeds epsilon bound");
  }

  // Adversarial colors clamped to [0,1] are applied by rendering, not here;
  // this materializes the perturbed cloud for 3D losses and maps.
  PointCloud apply_to(const PointCloud& cloud) const;
};

void save_perturbation(const std::string& path, const Perturbation& delta);
Perturbation load_perturbation(const std::string& path, size_t n_points, double epsilon);

struct AdamConfig {
  double lr = 0.01, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

struct AdamState {
  std::vector<double> m, v;
  long step = 0;
  AdamConfig cfg;

  explicit AdamState(size_t n = 0, AdamConfig c = {}) : m(n, 0.0), v(n, 0.0), cfg(c) {}
};

// One bias-corrected Adam update followed by elementwise projection onto
// [-eps_bound, +eps_bound].
void adam_step(AdamState& state, std::vector<double>& var, const std::vector<double>& grad,
               double eps_bound);

struct AttackSetup {
  const PointCloud* cloud = nullptr;  // original scene
  const VictimObject* victim = nullptr;
  const EncoderContract* encoder = nullptr;
  const PrototypeSet* protos = nullptr;
  Mode mode = Mode::Untargeted;
  std::string target_label;
  const TargetExemplar* exemplar = nullptr;
  FeatureMap exemplar_features;  // encoded once at setup
  bool whole_image_i2i = false;

  const Embedding& text_embedding() const {
    return protos->at(mode == Mode::Untargeted ? victim->label : target_label);
  }
  void validate() const;
};

AttackSetup make_attack_setup(const PointCloud& cloud, const VictimObject& victim,
                              const EncoderContract& encoder, const PrototypeSet& protos,
                              Mode mode, const std::string& target_label = "",
                              const TargetExemplar* exemplar = nullptr);

// Frozen per-view state: the benign rasterization, the victim mask, and the
// cached benign feature map (constant across the inner loop).
struct ViewContext {
  RenderedView rendered;
  ObjectMask victim_mask;
  FeatureMap benign_features;
  double weight = 1.0;
  std::vector<int> visible_victim_points;  // victim points owning >= 1 pixel

  bool victim_visible() const { return !visible_victim_points.empty(); }
};

ViewContext make_view_context(const PointCloud& cloud, const CameraView& view,
                              const VictimObject& victim, const EncoderContract& encoder,
                              int splat_radius = 1, double weight = 1.0);

struct OptimizeConfig {
  int iters = 25;
  AdamConfig adam;
  double alpha = 0.5, beta = 0.01;
  double eps_bound = 32.0 / 255.0;
  bool enable_l2d = true, enable_l3d = true;
  bool positional = false;    // experimental: finite-difference position updates
  double pos_epsilon = 0.05;  // meters
  double fd_step = 1e-3;
};

struct OptimizeResult {
  bool skipped = false;
  // Entry k records the losses after Adam step k; the last entry matches the
  // returned perturbation exactly.
  std::vector<LossBreakdown> trace;
};

// Algorithm 1 line 9: optimize this view's rendered perturbation, gradients
// flowing pixel -> point through the scatter adjoint of the frozen index map.
// Only victim points visible in the view are updated.
OptimizeResult optimize_view(Perturbation& delta, const AttackSetup& setup, const ViewContext& ctx,
                             const OptimizeConfig& config);

// Loss evaluation for the current perturbation without gradients (used by the
// fusion checks and tests).
LossBreakdown evaluate_view_losses(const Perturbation& delta, const AttackSetup& setup,
                                   const ViewContext& ctx, double alpha, double beta,
                                   bool enable_l2d = true, bool enable_l3d = true);

}  // namespace advof
