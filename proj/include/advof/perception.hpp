#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "advof/geometry.hpp"
#include "advof/types.hpp"

namespace advof {

using Embedding = Eigen::VectorXd;  // unit norm

struct FeatureMap {
  Image data;  // H x W x C, per-pixel L2-normalized
  int view_id = -1;

  int h() const { return data.h; }
  int w() const { return data.w; }
  int dim() const { return data.c; }
};

// Label -> embedding table in registry order (the tie-break order for
// classification).
struct PrototypeSet {
  int dim = 0;
  std::vector<std::pair<std::string, Embedding>> items;

  const Embedding* find(const std::string& label) const {
    for (const auto& [l, e] : items)
      if (l == label) return &e;
    return nullptr;
  }
  const Embedding& at(const std::string& label) const {
    const Embedding* e = find(label);
    if (!e) throw NotFoundError("prototypes: unknown label '" + label + "'");
    return *e;
  }
};

class EncoderContract {
 public:
  virtual ~EncoderContract() = default;
  virtual int dim() const = 0;
  virtual FeatureMap encode_image(const Image& image) const = 0;
  // Exact adjoint of the encoder linearization: image-space gradient for a
  // feature-space cotangent.
  virtual Image vjp_image(const Image& image, const Image& cotangent) const = 0;
  virtual Embedding encode_text(const std::string& label) const = 0;
};

// Single seeded conv (k x k x 3 -> C, zero padding, zero bias), tanh, then
// per-pixel L2 normalization floored at 1e-8. Text embeddings are served from
// the calibrated prototype table.
class ToyEncoder : public EncoderContract {
 public:
  explicit ToyEncoder(uint64_t seed, int dim = 16, int kernel = 5);

  int dim() const override { return C_; }
  FeatureMap encode_image(const Image& image) const override;
  Image vjp_image(const Image& image, const Image& cotangent) const override;
  Embedding encode_text(const std::string& label) const override;

  void set_prototypes(const PrototypeSet* protos) { protos_ = protos; }

 private:
  double weight(int oc, int ky, int kx, int ic) const {
    return weights_[((size_t(oc) * k_ + ky) * k_ + kx) * 3 + ic];
  }

  int C_, k_;
  std::vector<double> weights_;
  const PrototypeSet* protos_ = nullptr;
};

// Mean encoder feature over each label's ground-truth mask pixels across the
// calibration views, renormalized.
PrototypeSet calibrate_prototypes(const PointCloud& cloud, const LabelRegistry& registry,
                                  const std::vector<CameraView>& views,
                                  const EncoderContract& encoder, int splat_radius = 1);

// Flat(features ⊙ mask): features zeroed outside the mask, flattened row-major.
std::vector<double> masked_features(const FeatureMap& fmap, const ObjectMask& mask);

struct Classification {
  std::string label;
  double confidence = 0.0;  // mean winning cosine over mask pixels
};

// Per-pixel cosine argmax against the prototypes, majority vote over the mask.
// Ties (argmax and vote) break by prototype order.
Classification classify_object(const FeatureMap& fmap, const ObjectMask& mask,
                               const PrototypeSet& protos);

struct SemanticMap {
  int rows = 0, cols = 0;
  double cell_size = 0.0;
  double x0 = 0.0, y0 = 0.0;  // world coords of cell (0,0) corner
  int dim = 0;
  std::vector<Embedding> cells;  // zero vector where no hits
  std::vector<int> hits;

  size_t idx(int row, int col) const { return size_t(row) * cols + col; }
  Vec3 cell_center(int row, int col) const {
    return Vec3(x0 + (col + 0.5) * cell_size, y0 + (row + 0.5) * cell_size, 0.0);
  }
};

// Top-down feature grid over the cloud's ground-plane bounding box. Every
// non-empty pixel is back-projected and its feature accumulated into the cell
// under it; cells store the renormalized mean. `delta` perturbs the rendered
// images before encoding when given.
SemanticMap build_semantic_map(const PointCloud& cloud, const std::vector<CameraView>& views,
                               const EncoderContract& encoder, double cell_size,
                               int splat_radius = 1, const std::vector<Vec3>* rgb_delta = nullptr);

// Cell with the highest cosine against the label prototype; row-major ties.
std::pair<int, int> localize(const SemanticMap& map, const std::string& label,
                             const PrototypeSet& protos);

void save_prototypes(const std::string& path, const PrototypeSet& protos);
PrototypeSet load_prototypes(const std::string& path);

}  // namespace advof
