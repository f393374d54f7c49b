#pragma once

#include <memory>
#include <string>
#include <vector>

#include "advof/geometry.hpp"
#include "advof/types.hpp"

namespace advof {

// Open-set detector + segmenter contract (the paper's grounding/segmentation
// stack sits behind this interface; the desk-scale build ships an oracle).
class SegmenterContract {
 public:
  virtual ~SegmenterContract() = default;
  virtual std::vector<ObjectMask> segment(const RenderedView& rendered,
                                          const std::string& label) const = 0;
};

// Derives masks from the ground-truth point-index map: one mask per object
// whose registry label matches, optionally degraded by boundary erosion or
// dilation. Score is the clean-pixel fraction of the emitted mask.
class OracleSegmenter : public SegmenterContract {
 public:
  OracleSegmenter(const PointCloud& cloud, const LabelRegistry& registry, int erode_px = 0,
                  int dilate_px = 0)
      : cloud_(cloud), registry_(registry), erode_px_(erode_px), dilate_px_(dilate_px) {}

  std::vector<ObjectMask> segment(const RenderedView& rendered,
                                  const std::string& label) const override;

 private:
  const PointCloud& cloud_;
  const LabelRegistry& registry_;
  int erode_px_;
  int dilate_px_;
};

struct VictimObject {
  std::vector<int> point_indices;  // sorted, indices into the scene cloud
  std::string label;
  Vec3 centroid = Vec3::Zero();
  struct PerView {
    int view_id = -1;
    ObjectMask mask;  // restricted to the selected cluster
  };
  std::vector<PerView> views;

  const PerView* view(int view_id) const {
    for (const auto& pv : views)
      if (pv.view_id == view_id) return &pv;
    return nullptr;
  }
};

// Views where the detector fires for the label with score >= box_threshold.
// Returns indices into `views`.
std::vector<size_t> filter_scenes(const std::vector<RenderedView>& views, const std::string& label,
                                  const SegmenterContract& segmenter, double box_threshold = 0.40);

// Density clustering with inclusive eps and self-counting neighborhoods.
// Cluster ids are assigned in seed index order; -1 marks noise.
std::vector<int> dbscan(const std::vector<Vec3>& points, double eps, int min_pts);

enum class ClusterSelection { Largest, SeededRandom };

struct AlignConfig {
  double box_threshold = 0.40;
  double eps = 0.12;
  int min_pts = 8;
  ClusterSelection selection = ClusterSelection::Largest;
  uint64_t seed = 0;
  int splat_radius = 1;
  // When false the DBSCAN/cluster-selection stage is skipped and the raw
  // back-projected mask points are matched directly (the alignment ablation).
  bool cluster = true;
};

// Eq. 2-4 pipeline: filter views, back-project masks, cluster, select, and
// snap the cluster back onto cloud points.
VictimObject align_victim(const PointCloud& cloud, const std::vector<CameraView>& views,
                          const std::string& label, const SegmenterContract& segmenter,
                          const AlignConfig& config);

void save_victim(const std::string& path, const VictimObject& victim);
VictimObject load_victim(const std::string& path, const PointCloud& cloud);

}  // namespace advof
