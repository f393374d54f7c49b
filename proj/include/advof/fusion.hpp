#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "advof/optimizer.hpp"

namespace advof {

struct ViewWeight {
  int view_id = -1;
  double score = 0.0;
  int pixel_count = 0;   // N_v
  double raw = 0.0;      // score + N_v / N, N = max over views
  double normalized = 0.0;
};

// Eq. 19 weights, normalized to sum 1 and sorted descending (ties by id).
std::vector<ViewWeight> importance_weights(const std::vector<ObjectMask>& masks);

double image_mse(const Image& a, const Image& b);

// Eq. 21: fails (returns false) when MSE >= mu1. Boundary inclusive.
bool consistency_check(const Image& prev_accepted, const Image& prev_rerendered, double mu1);

// Eq. 22: fails when |now - accepted| >= mu2.
bool fusion_check(double prev_l2d_accepted, double prev_l2d_now, double mu2);

struct FusionConfig {
  double epsilon = 32.0 / 255.0;
  double alpha = 0.5, beta = 0.01;
  double mu1 = 0.01, mu2 = 0.05;
  int max_retries = 5;
  Mode mode = Mode::Untargeted;
  int total_iters = 200;   // split evenly over processed views
  int iters_per_view = 0;  // overrides the split when > 0
  AdamConfig adam;
  int splat_radius = 1;
  double weight_halving = 0.5;
  double bound_reduction = 0.8;
  bool uniform_weights = false;  // ablation: equal weights, input view order
  bool disable_checks = false;   // ablation: no consistency/fusion gates
  bool enable_l2d = true, enable_l3d = true;
  bool whole_image_i2i = false;
  uint64_t seed = 0;  // reserved for stochastic view optimizers
};

struct ViewOutcome {
  enum class Kind { Accepted, Rejected, Skipped };
  int view_id = -1;
  int order = -1;  // processing position, -1 for skipped views
  Kind outcome = Kind::Skipped;
  int retries = 0;
  std::vector<double> weight_trajectory;  // weight at start, then after each halving
  LossBreakdown final_l2d;
  std::vector<LossBreakdown> trace;  // accepted run, one entry per iteration
};

// Algorithm 1 bookkeeping, exposed so tests can assert the acceptance-time
// invariants directly.
struct FusionState {
  Perturbation delta;
  std::map<int, Image> accepted_views;     // view id -> accepted 2D perturbation
  std::map<int, double> accepted_l2d;      // view id -> L2D at acceptance
  std::map<int, double> weights;           // current normalized weights
  std::map<int, int> retry_counts;
  std::vector<int> rejected_views;
};

struct FusionReport {
  Mode mode = Mode::Untargeted;
  std::vector<ViewOutcome> views;
  std::string ablation;  // empty for the full method
  std::string to_text() const;
};

struct FusionResult {
  Perturbation delta;
  FusionReport report;
  FusionState state;
};

using ViewOptimizer = std::function<OptimizeResult(Perturbation&, const AttackSetup&,
                                                   const ViewContext&, const OptimizeConfig&)>;

// Algorithm 1: per-view collaborative optimization in importance order with
// cross-view consistency and fusion gates. A failing view retries from the
// pre-view snapshot (weight halved on consistency failures, working bound
// scaled by `bound_reduction` on fusion failures) and is rejected outright
// after `max_retries`, leaving the global perturbation untouched.
FusionResult fuse(const PointCloud& cloud, const VictimObject& victim,
                  const std::vector<CameraView>& views, const EncoderContract& encoder,
                  const PrototypeSet& protos, const FusionConfig& config,
                  const TargetExemplar* exemplar = nullptr, ViewOptimizer optimizer = {});

}  // namespace advof
