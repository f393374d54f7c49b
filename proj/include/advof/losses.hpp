#pragma once

#include <string>
#include <vector>

#include "advof/perception.hpp"

namespace advof {

struct LossBreakdown {
  double total = 0.0;  // 2D composite for one view
  double i2i = 0.0, i2t = 0.0, b2b = 0.0;
  double color = 0.0, chamfer = 0.0;
  double objective = 0.0;  // color + chamfer + weight * total
  double weight = 1.0;
  Mode mode = Mode::Untargeted;
  double alpha = 0.5, beta = 0.01;

  double recompute_total() const {
    return mode == Mode::Untargeted ? i2i + alpha * i2t - beta * b2b
                                    : -i2i - alpha * i2t - beta * b2b;
  }
};

// Target image retained for targeted attacks.
struct TargetExemplar {
  Image image;  // in [0,1]
  ObjectMask mask;
  std::string label;

  void validate() const {
    if (mask.pixel_count == 0) throw ContractError("target exemplar: empty mask");
    if (image.h != mask.h || image.w != mask.w)
      throw ContractError("target exemplar: image/mask shape mismatch");
  }
};

// Sum of squared RGB differences over all points.
double l_color(const std::vector<Vec3>& adv_colors, const std::vector<Vec3>& orig_colors);
std::vector<Vec3> l_color_grad(const std::vector<Vec3>& adv_colors,
                               const std::vector<Vec3>& orig_colors);

// Symmetric squared-nearest-neighbor sum between two point sets.
double l_chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b);
// Gradient w.r.t. `a` with nearest-neighbor assignments held fixed.
std::vector<Vec3> l_chamfer_grad(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

// color + chamfer over full clouds.
double l_3d(const PointCloud& adv, const PointCloud& orig);

// Cosine with the denominator floored at 1e-12 so near-empty masked vectors
// stay finite.
double cosine(const std::vector<double>& a, const std::vector<double>& b);

struct L2dRequest {
  const FeatureMap* adv = nullptr;
  const FeatureMap* benign = nullptr;  // cached same-view benign features
  const ObjectMask* mask = nullptr;    // victim mask in this view
  const FeatureMap* exemplar_features = nullptr;  // targeted i2i reference
  const ObjectMask* exemplar_mask = nullptr;
  const Embedding* text_embedding = nullptr;  // θ(T^v) untargeted, θ(T^t) targeted
  Mode mode = Mode::Untargeted;
  double alpha = 0.5, beta = 0.01;
  bool whole_image_i2i = false;  // diagnostic: unmasked Eq. 10 variant
  bool want_cotangent = true;
};

struct L2dResult {
  LossBreakdown loss;
  Image cotangent;  // d(total)/d(adv feature map), H x W x C
};

// Masked I2I/I2T/B2B terms and their composite for one view. The background
// reference is always the benign map of the same view, also in targeted mode.
L2dResult l_2d(const L2dRequest& req);

}  // namespace advof
