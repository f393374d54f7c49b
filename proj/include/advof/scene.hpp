#pragma once

#include <optional>
#include <string>
#include <vector>

#include "advof/types.hpp"

namespace advof {

enum class Shape { Box, Sphere, Cylinder };

Shape shape_from_name(const std::string& name);
const char* shape_name(Shape s);

struct ObjectSpec {
  Shape shape = Shape::Box;
  double size_min = 0.3, size_max = 0.45;  // characteristic half-size (m)
  std::optional<Vec3> base_color;          // drawn when unset
  int points = 2000;
  std::string label = "object";
};

struct SceneSpec {
  double extent = 8.0;  // room side length (m), centered on the origin
  std::vector<ObjectSpec> objects;
  bool background = true;  // floor carpet of points, object id 0
  int background_points = 4000;
  double clearance = 0.25;  // gap between floor and object underside (m)
  uint64_t seed = 0;

  void validate() const;
};

struct Scene {
  PointCloud cloud;
  LabelRegistry registry;
};

// Deterministic synthetic room. Object ids are assigned 1..K in spec order;
// the optional floor gets the reserved id 0 with label "background".
Scene generate_scene(const SceneSpec& spec);

enum class ViewPolicy { Ring, Random };

ViewPolicy policy_from_name(const std::string& name);

struct ViewSpec {
  int count = 8;
  ViewPolicy policy = ViewPolicy::Ring;
  double radius = 2.2;   // camera distance from target centroid (m)
  double height = 1.2;   // camera height above target centroid (m)
  double phase = 0.0;    // ring start azimuth (rad)
  int image_width = 96;
  int image_height = 96;
  double hfov_deg = 60.0;
  uint64_t seed = 0;
  int first_view_id = 0;
  // random policy ranges
  double radius_min = 1.8, radius_max = 3.0;
  double elev_min_deg = 12.0, elev_max_deg = 40.0;
};

// Cameras looking at the centroid of the target object. Ring policy spaces
// azimuths evenly starting at `phase`; all cameras sit at the same radius
// and height. Random policy draws azimuth/elevation/radius per view.
std::vector<CameraView> sample_views(const PointCloud& cloud, int target_id, const ViewSpec& spec);

// Line-oriented scene interchange format, see save_scene for the layout.
void save_scene(const std::string& path, const PointCloud& cloud);
PointCloud load_scene(const std::string& path);
void save_labels(const std::string& path, const LabelRegistry& registry);
LabelRegistry load_labels(const std::string& path);

}  // namespace advof
