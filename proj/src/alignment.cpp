#include "advof/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace advof {

namespace {

// Uniform hash grid for radius queries; cell size equals the query radius so
// scanning the 27 surrounding cells is sufficient.
class VoxelGrid {
 public:
  VoxelGrid(const std::vector<Vec3>& points, double cell) : points_(points), cell_(cell) {
    for (size_t i = 0; i < points.size(); ++i) cells_[key(points[i])].push_back(int(i));
  }

  // Indices with ||p - q|| <= radius, ascending. radius must be <= cell size.
  void query(const Vec3& q, double radius, std::vector<int>& out) const {
    out.clear();
    double r2 = radius * radius;
    auto [kx, ky, kz] = coords(q);
    for (long dx = -1; dx <= 1; ++dx)
      for (long dy = -1; dy <= 1; ++dy)
        for (long dz = -1; dz <= 1; ++dz) {
          auto it = cells_.find(pack(kx + dx, ky + dy, kz + dz));
          if (it == cells_.end()) continue;
          for (int i : it->second)
            if ((points_[size_t(i)] - q).squaredNorm() <= r2) out.push_back(i);
        }
    std::sort(out.begin(), out.end());
  }

  // Nearest index within radius, or -1. Ties by lower index.
  int nearest(const Vec3& q, double radius) const {
    std::vector<int> cand;
    query(q, radius, cand);
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int i : cand) {
      double d = (points_[size_t(i)] - q).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  }

 private:
  std::tuple<long, long, long> coords(const Vec3& p) const {
    return {long(std::floor(p.x() / cell_)), long(std::floor(p.y() / cell_)),
            long(std::floor(p.z() / cell_))};
  }
  uint64_t key(const Vec3& p) const {
    auto [x, y, z] = coords(p);
    return pack(x, y, z);
  }
  static uint64_t pack(long x, long y, long z) {
    return (uint64_t(uint32_t(x)) << 42) ^ (uint64_t(uint32_t(y)) << 21) ^ uint64_t(uint32_t(z));
  }

  const std::vector<Vec3>& points_;
  double cell_;
  std::map<uint64_t, std::vector<int>> cells_;
};

ObjectMask erode(const ObjectMask& m) {
  ObjectMask out(m.h, m.w);
  out.object_id = m.object_id;
  out.view_id = m.view_id;
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x) {
      if (!m.at(y, x)) continue;
      bool keep = true;
      for (int dy = -1; dy <= 1 && keep; ++dy)
        for (int dx = -1; dx <= 1 && keep; ++dx) {
          int ny = y + dy, nx = x + dx;
          if (ny < 0 || ny >= m.h || nx < 0 || nx >= m.w || !m.at(ny, nx)) keep = false;
        }
      out.set(y, x, keep);
    }
  out.recount();
  return out;
}

ObjectMask dilate(const ObjectMask& m) {
  ObjectMask out(m.h, m.w);
  out.object_id = m.object_id;
  out.view_id = m.view_id;
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x) {
      bool set = false;
      for (int dy = -1; dy <= 1 && !set; ++dy)
        for (int dx = -1; dx <= 1 && !set; ++dx) {
          int ny = y + dy, nx = x + dx;
          if (ny >= 0 && ny < m.h && nx >= 0 && nx < m.w && m.at(ny, nx)) set = true;
        }
      out.set(y, x, set);
    }
  out.recount();
  return out;
}

}  // namespace

std::vector<ObjectMask> OracleSegmenter::segment(const RenderedView& rendered,
                                                 const std::string& label) const {
  std::vector<ObjectMask> out;
  for (const auto& [id, l] : registry_.entries) {
    if (l != label) continue;
    ObjectMask clean = mask_from_points(rendered, cloud_.points_of(id), id);
    if (clean.pixel_count == 0) continue;
    ObjectMask noisy = clean;
    for (int k = 0; k < erode_px_; ++k) noisy = erode(noisy);
    for (int k = 0; k < dilate_px_; ++k) noisy = dilate(noisy);
    if (noisy.pixel_count == 0) continue;
    int clean_hits = 0;
    for (size_t i = 0; i < noisy.bits.size(); ++i)
      if (noisy.bits[i] && clean.bits[i]) ++clean_hits;
    noisy.score = double(clean_hits) / double(noisy.pixel_count);
    out.push_back(std::move(noisy));
  }
  return out;
}

std::vector<size_t> filter_scenes(const std::vector<RenderedView>& views, const std::string& label,
                                  const SegmenterContract& segmenter, double box_threshold) {
  std::vector<size_t> out;
  for (size_t i = 0; i < views.size(); ++i) {
    auto masks = segmenter.segment(views[i], label);
    for (const auto& m : masks)
      if (m.score >= box_threshold) {
        out.push_back(i);
        break;
      }
  }
  return out;
}

std::vector<int> dbscan(const std::vector<Vec3>& points, double eps, int min_pts) {
  if (!(eps > 0)) throw ContractError("dbscan: eps must be positive");
  if (min_pts < 1) throw ContractError("dbscan: min_pts must be >= 1");

  const int n = int(points.size());
  std::vector<int> labels(size_t(n), -1);
  if (n == 0) return labels;

  VoxelGrid grid(points, eps);
  std::vector<uint8_t> core(size_t(n), 0);
  std::vector<std::vector<int>> neighbors(size_t(n));
  for (int i = 0; i < n; ++i) {
    grid.query(points[size_t(i)], eps, neighbors[size_t(i)]);
    core[size_t(i)] = neighbors[size_t(i)].size() >= size_t(min_pts);
  }

  int next_cluster = 0;
  std::vector<uint8_t> visited(size_t(n), 0);
  for (int seed = 0; seed < n; ++seed) {
    if (visited[size_t(seed)] || !core[size_t(seed)]) continue;
    int cluster = next_cluster++;
    std::deque<int> queue{seed};
    visited[size_t(seed)] = 1;
    labels[size_t(seed)] = cluster;
    while (!queue.empty()) {
      int p = queue.front();
      queue.pop_front();
      if (!core[size_t(p)]) continue;  // border points do not expand
      for (int q : neighbors[size_t(p)]) {
        if (labels[size_t(q)] == -1) labels[size_t(q)] = cluster;  // claim border/noise
        if (!visited[size_t(q)] && core[size_t(q)]) {
          visited[size_t(q)] = 1;
          queue.push_back(q);
        }
      }
    }
  }
  return labels;
}

VictimObject align_victim(const PointCloud& cloud, const std::vector<CameraView>& views,
                          const std::string& label, const SegmenterContract& segmenter,
                          const AlignConfig& config) {
  std::vector<RenderedView> rendered;
  rendered.reserve(views.size());
  for (const auto& v : views) rendered.push_back(rasterize(cloud, v, config.splat_radius));

  std::vector<size_t> passing = filter_scenes(rendered, label, segmenter, config.box_threshold);
  if (passing.empty())
    throw AlignmentError("align_victim: no view passes the detector filter for label '" + label +
                         "'");

  // Pool back-projected mask pixels from every passing view.
  std::vector<Vec3> pooled;
  for (size_t vi : passing) {
    const RenderedView& rv = rendered[vi];
    auto masks = segmenter.segment(rv, label);
    std::vector<std::pair<double, double>> pix;
    std::vector<double> depths;
    for (const auto& m : masks) {
      if (m.score < config.box_threshold) continue;
      for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x) {
          if (!m.at(y, x)) continue;
          double d = rv.depth.at(y, x, 0);
          if (!std::isfinite(d)) continue;  // dilated pixels over empty space
          pix.emplace_back(double(x), double(y));
          depths.push_back(d);
        }
    }
    auto pts = back_project(pix, depths, views[vi]);
    pooled.insert(pooled.end(), pts.begin(), pts.end());
  }
  if (pooled.empty()) throw AlignmentError("align_victim: masks back-projected to nothing");

  std::vector<Vec3> selected_points;
  if (config.cluster) {
    std::vector<int> labels = dbscan(pooled, config.eps, config.min_pts);
    int n_clusters = 0;
    for (int l : labels) n_clusters = std::max(n_clusters, l + 1);
    if (n_clusters == 0) throw AlignmentError("align_victim: DBSCAN found no cluster");

    std::vector<int> sizes(size_t(n_clusters), 0);
    for (int l : labels)
      if (l >= 0) sizes[size_t(l)]++;

    int chosen;
    if (config.selection == ClusterSelection::Largest) {
      chosen = int(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
    } else {
      Rng rng(config.seed);
      chosen = rng.uniform_int(0, n_clusters - 1);
    }
    for (size_t i = 0; i < pooled.size(); ++i)
      if (labels[i] == chosen) selected_points.push_back(pooled[i]);
  } else {
    selected_points = pooled;  // alignment ablation: raw un-clustered masks
  }

  // Snap cluster points onto cloud points (nearest neighbor within eps), then
  // close over the cloud at eps range so occluded parts of the same surface
  // are captured.
  VoxelGrid cloud_grid(cloud.positions, config.eps);
  std::set<int> member_set;
  for (const Vec3& p : selected_points) {
    int i = cloud_grid.nearest(p, config.eps);
    if (i >= 0) member_set.insert(i);
  }
  if (member_set.empty())
    throw AlignmentError("align_victim: selected cluster matched no cloud points");

  if (config.cluster) {
    std::deque<int> frontier(member_set.begin(), member_set.end());
    std::vector<int> near;
    while (!frontier.empty()) {
      int i = frontier.front();
      frontier.pop_front();
      cloud_grid.query(cloud.positions[size_t(i)], config.eps, near);
      for (int j : near)
        if (member_set.insert(j).second) frontier.push_back(j);
    }
  }

  VictimObject victim;
  victim.point_indices.assign(member_set.begin(), member_set.end());
  victim.label = label;
  victim.centroid = cloud.centroid_of(victim.point_indices);
  for (size_t vi : passing) {
    VictimObject::PerView pv;
    pv.view_id = rendered[vi].view_id;
    pv.mask = mask_from_points(rendered[vi], victim.point_indices);
    if (pv.mask.pixel_count == 0) continue;
    // Confidence of the segmenter mask that overlaps the victim most.
    auto masks = segmenter.segment(rendered[vi], label);
    double best_overlap = -1;
    for (const auto& m : masks) {
      int overlap = 0;
      for (size_t i = 0; i < m.bits.size(); ++i)
        if (m.bits[i] && pv.mask.bits[i]) ++overlap;
      if (overlap > best_overlap) {
        best_overlap = overlap;
        pv.mask.score = m.score;
      }
    }
    victim.views.push_back(std::move(pv));
  }
  return victim;
}

void save_victim(const std::string& path, const VictimObject& victim) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write victim file: " + path);
  f << "victim v1\n" << victim.label << "\n";
  for (int i : victim.point_indices) f << i << "\n";
}

VictimObject load_victim(const std::string& path, const PointCloud& cloud) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read victim file: " + path);
  std::string header;
  std::getline(f, header);
  if (header != "victim v1") throw IoError("victim file: bad header: " + path);
  VictimObject victim;
  if (!std::getline(f, victim.label) || victim.label.empty())
    throw IoError("victim file: missing label: " + path);
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    int idx = std::stoi(line);
    if (idx < 0 || size_t(idx) >= cloud.size())
      throw IoError("victim file: point index out of range: " + path);
    victim.point_indices.push_back(idx);
  }
  if (victim.point_indices.empty()) throw IoError("victim file: no points: " + path);
  std::sort(victim.point_indices.begin(), victim.point_indices.end());
  victim.centroid = cloud.centroid_of(victim.point_indices);
  return victim;
}

}  // namespace advof
