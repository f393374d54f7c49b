#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "advof/common.hpp"

namespace advof {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Dense H x W x C double image, row-major, channel-minor.
struct Image {
  int h = 0, w = 0, c = 0;
  std::vector<double> v;

  Image() = default;
  Image(int h_, int w_, int c_) : h(h_), w(w_), c(c_), v(size_t(h_) * w_ * c_, 0.0) {}

  size_t idx(int y, int x, int ch) const { return (size_t(y) * w + x) * c + ch; }
  double& at(int y, int x, int ch) { return v[idx(y, x, ch)]; }
  double at(int y, int x, int ch) const { return v[idx(y, x, ch)]; }

  bool same_shape(const Image& o) const { return h == o.h && w == o.w && c == o.c; }
};

struct LabelRegistry {
  std::map<int, std::string> entries;  // object_id -> label

  void add(int id, const std::string& label) {
    if (label.empty()) throw ContractError("label registry: empty label for id " + std::to_string(id));
    entries[id] = label;
  }

  const std::string& label_of(int id) const {
    auto it = entries.find(id);
    if (it == entries.end())
      throw NotFoundError("label registry: unknown object id " + std::to_string(id));
    return it->second;
  }

  bool has_label(const std::string& label) const {
    for (const auto& [id, l] : entries)
      if (l == label) return true;
    return false;
  }

  std::vector<int> ids_with_label(const std::string& label) const {
    std::vector<int> out;
    for (const auto& [id, l] : entries)
      if (l == label) out.push_back(id);
    return out;
  }

  // Distinct labels in order of first appearance by ascending object id.
  // This order breaks classification ties.
  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    for (const auto& [id, l] : entries) {
      bool seen = false;
      for (const auto& s : out)
        if (s == l) { seen = true; break; }
      if (!seen) out.push_back(l);
    }
    return out;
  }
};

struct PointCloud {
  std::vector<Vec3> positions;
  std::vector<Vec3> colors;  // rgb in [0,1]
  std::vector<int> object_ids;

  size_t size() const { return positions.size(); }

  void validate(const LabelRegistry* registry = nullptr) const {
    if (positions.empty()) throw ContractError("point cloud: empty");
    if (colors.size() != positions.size() || object_ids.size() != positions.size())
      throw ContractError("point cloud: field length mismatch");
    for (size_t i = 0; i < colors.size(); ++i) {
      const Vec3& c = colors[i];
      for (int k = 0; k < 3; ++k)
        if (!(c[k] >= 0.0 && c[k] <= 1.0))
          throw ContractError("point cloud: color channel outside [0,1] at point " + std::to_string(i));
      if (object_ids[i] < 0)
        throw ContractError("point cloud: negative object id at point " + std::to_string(i));
      if (registry) registry->label_of(object_ids[i]);  // throws if unregistered
    }
  }

  std::vector<int> points_of(int object_id) const {
    std::vector<int> out;
    for (size_t i = 0; i < object_ids.size(); ++i)
      if (object_ids[i] == object_id) out.push_back(int(i));
    return out;
  }

  Vec3 centroid_of(const std::vector<int>& indices) const {
    Vec3 c = Vec3::Zero();
    for (int i : indices) c += positions[size_t(i)];
    return indices.empty() ? c : Vec3(c / double(indices.size()));
  }
};

// Pinhole camera, world -> camera convention p_cam = R * p + t.
struct CameraView {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  int width = 0, height = 0;
  int id = 0;

  void validate() const {
    if (!(fx > 0 && fy > 0)) throw ContractError("camera: non-positive focal length");
    if (!(cx >= 0 && cx < width && cy >= 0 && cy < height))
      throw ContractError("camera: principal point outside image");
    Mat3 should_be_identity = rotation.transpose() * rotation;
    if ((should_be_identity - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9)
      throw ContractError("camera: rotation not orthonormal");
  }

  Vec3 to_camera(const Vec3& p) const { return rotation * p + translation; }
  Vec3 to_world(const Vec3& p_cam) const { return rotation.transpose() * (p_cam - translation); }

  // Projects a world point. Returns false when the point is not strictly in
  // front of the camera.
  bool project(const Vec3& p, double& u, double& v, double& z) const {
    Vec3 pc = to_camera(p);
    z = pc.z();
    if (!(z > 0.0)) return false;
    u = fx * pc.x() / z + cx;
    v = fy * pc.y() / z + cy;
    return true;
  }
};

enum class Mode { Untargeted, Targeted };

inline const char* mode_name(Mode m) { return m == Mode::Untargeted ? "untargeted" : "targeted"; }

}  // namespace advof
