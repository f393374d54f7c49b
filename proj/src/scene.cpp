#include "advof/scene.hpp"

#include <algorithm>
#include <cstdio>
#include <charconv>
#include <fstream>
#include <sstream>

namespace advof {

namespace {

constexpr int kColorRetries = 4000;
constexpr int kPlacementRetries = 400;
constexpr double kMinColorDistance = 0.3;
constexpr double kPlacementMargin = 0.3;  // surface gap beyond touching

// Bounding radius of the sampled surface for overlap tests.
double bounding_radius(Shape shape, const Vec3& half) {
  switch (shape) {
    case Shape::Sphere: return half.x();
    case Shape::Box: return half.norm();
    case Shape::Cylinder: return std::sqrt(half.x() * half.x() + half.z() * half.z());
  }
  return half.norm();
}

Vec3 sample_sphere_point(Rng& rng, double r) {
  // Uniform direction via normalized Gaussians.
  Vec3 d(rng.normal(), rng.normal(), rng.normal());
  double n = d.norm();
  if (n < 1e-12) d = Vec3(1, 0, 0); else d /= n;
  return d * r;
}

// Box surface sample over 5 faces (the downward face is never visible and
// skipping it keeps the surface clear of the floor).
Vec3 sample_box_point(Rng& rng, const Vec3& h) {
  double ax = h.y() * h.z();  // +/- x faces
  double ay = h.x() * h.z();
  double az = h.x() * h.y();  // top only
  double areas[5] = {ax, ax, ay, ay, az};
  double total = 0;
  for (double a : areas) total += a;
  double pick = rng.uniform(0.0, total);
  int face = 0;
  for (; face < 4; ++face) {
    if (pick < areas[face]) break;
    pick -= areas[face];
  }
  double u = rng.uniform(-1.0, 1.0), v = rng.uniform(-1.0, 1.0);
  switch (face) {
    case 0: return Vec3(+h.x(), u * h.y(), v * h.z());
    case 1: return Vec3(-h.x(), u * h.y(), v * h.z());
    case 2: return Vec3(u * h.x(), +h.y(), v * h.z());
    case 3: return Vec3(u * h.x(), -h.y(), v * h.z());
    default: return Vec3(u * h.x(), v * h.y(), +h.z());
  }
}

// Cylinder side plus top cap, axis along z.
Vec3 sample_cylinder_point(Rng& rng, double r, double hh) {
  double side = 2.0 * M_PI * r * (2.0 * hh);
  double cap = M_PI * r * r;
  if (rng.uniform(0.0, side + cap) < side) {
    double a = rng.uniform(0.0, 2.0 * M_PI);
    double z = rng.uniform(-hh, hh);
    return Vec3(r * std::cos(a), r * std::sin(a), z);
  }
  double a = rng.uniform(0.0, 2.0 * M_PI);
  double rr = r * std::sqrt(rng.uniform());
  return Vec3(rr * std::cos(a), rr * std::sin(a), hh);
}

void append_line_double(std::string& out, double x) {
  char buf[40];
  int n = std::snprintf(buf, sizeof buf, "%.17e", x);
  out.append(buf, size_t(n));
}

}  // namespace

Shape shape_from_name(const std::string& name) {
  if (name == "box") return Shape::Box;
  if (name == "sphere") return Shape::Sphere;
  if (name == "cylinder") return Shape::Cylinder;
  throw ConfigError("unknown shape: " + name);
}

const char* shape_name(Shape s) {
  switch (s) {
    case Shape::Box: return "box";
    case Shape::Sphere: return "sphere";
    default: return "cylinder";
  }
}

ViewPolicy policy_from_name(const std::string& name) {
  if (name == "ring") return ViewPolicy::Ring;
  if (name == "random") return ViewPolicy::Random;
  throw ConfigError("unknown view policy: " + name);
}

void SceneSpec::validate() const {
  if (!(extent > 0)) throw ContractError("scene spec: extent must be positive");
  if (objects.size() < 2) throw ContractError("scene spec: need at least 2 objects");
  for (const auto& o : objects) {
    if (o.points < 50) throw ContractError("scene spec: points-per-object must be >= 50");
    if (!(o.size_min > 0 && o.size_max >= o.size_min))
      throw ContractError("scene spec: bad size range");
    if (o.label.empty()) throw ContractError("scene spec: empty object label");
  }
}

Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Scene scene;

  const int n_obj = int(spec.objects.size());
  std::vector<Vec3> colors(n_obj);
  std::vector<Vec3> halves(n_obj);
  std::vector<Vec3> centers(n_obj);
  std::vector<double> radii(n_obj);

  // Base colors: honor explicit colors, draw the rest with a minimum pairwise
  // distance so label prototypes are separable before any attack.
  for (int k = 0; k < n_obj; ++k) {
    if (spec.objects[k].base_color) {
      colors[k] = *spec.objects[k].base_color;
      continue;
    }
    bool ok = false;
    for (int attempt = 0; attempt < kColorRetries && !ok; ++attempt) {
      Vec3 c(rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85));
      ok = true;
      for (int j = 0; j < k; ++j)
        if ((colors[j] - c).norm() < kMinColorDistance) { ok = false; break; }
      if (ok) colors[k] = c;
    }
    if (!ok)
      throw GenerationError("scene generation: could not draw separable colors (seed " +
                            std::to_string(spec.seed) + ")");
  }

  // Sizes and placement. z centers keep the underside `clearance` above the floor.
  for (int k = 0; k < n_obj; ++k) {
    const ObjectSpec& o = spec.objects[k];
    double s = rng.uniform(o.size_min, o.size_max);
    switch (o.shape) {
      case Shape::Sphere: halves[k] = Vec3(s, s, s); break;
      case Shape::Box:
        halves[k] = Vec3(s * rng.uniform(0.7, 1.0), s * rng.uniform(0.7, 1.0), s);
        break;
      case Shape::Cylinder: halves[k] = Vec3(0.8 * s, 0.8 * s, s); break;
    }
    radii[k] = bounding_radius(o.shape, halves[k]);

    double span = spec.extent / 2.0 - radii[k] - 0.2;
    if (span <= 0)
      throw GenerationError("scene generation: room too small for object " + std::to_string(k) +
                            " (seed " + std::to_string(spec.seed) + ")");
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementRetries && !placed; ++attempt) {
      Vec3 c(rng.uniform(-span, span), rng.uniform(-span, span),
             halves[k].z() + spec.clearance);
      placed = true;
      for (int j = 0; j < k; ++j) {
        if ((centers[j] - c).norm() <= radii[j] + radii[k] + kPlacementMargin) {
          placed = false;
          break;
        }
      }
      if (placed) centers[k] = c;
    }
    if (!placed)
      throw GenerationError("scene generation: unresolvable overlap after retries (seed " +
                            std::to_string(spec.seed) + ")");
  }

  PointCloud& cloud = scene.cloud;
  if (spec.background) {
    scene.registry.add(0, "background");
    double half = spec.extent / 2.0;
    for (int i = 0; i < spec.background_points; ++i) {
      cloud.positions.emplace_back(rng.uniform(-half, half), rng.uniform(-half, half), 0.0);
      cloud.colors.emplace_back(0.72, 0.70, 0.66);
      cloud.object_ids.push_back(0);
    }
  }

  for (int k = 0; k < n_obj; ++k) {
    const ObjectSpec& o = spec.objects[k];
    int id = k + 1;
    scene.registry.add(id, o.label);
    for (int i = 0; i < o.points; ++i) {
      Vec3 local;
      switch (o.shape) {
        case Shape::Sphere: local = sample_sphere_point(rng, halves[k].x()); break;
        case Shape::Box: local = sample_box_point(rng, halves[k]); break;
        case Shape::Cylinder: local = sample_cylinder_point(rng, halves[k].x(), halves[k].z()); break;
      }
      cloud.positions.push_back(centers[k] + local);
      cloud.colors.push_back(colors[k]);
      cloud.object_ids.push_back(id);
    }
  }

  cloud.validate(&scene.registry);
  return scene;
}

namespace {

CameraView look_at(const Vec3& eye, const Vec3& target, double hfov_deg, int w, int h, int view_id) {
  Vec3 forward = target - eye;
  double n = forward.norm();
  if (n < 1e-12) throw ContractError("sample_views: camera coincides with target");
  forward /= n;
  Vec3 up(0, 0, 1);
  if (std::abs(forward.dot(up)) > 0.999) up = Vec3(0, 1, 0);
  Vec3 right = forward.cross(up).normalized();
  Vec3 down = forward.cross(right).normalized();

  CameraView view;
  view.rotation.row(0) = right;
  view.rotation.row(1) = down;
  view.rotation.row(2) = forward;
  view.translation = -(view.rotation * eye);
  view.width = w;
  view.height = h;
  double f = (w / 2.0) / std::tan(hfov_deg * M_PI / 180.0 / 2.0);
  view.fx = view.fy = f;
  view.cx = w / 2.0;
  view.cy = h / 2.0;
  view.id = view_id;
  view.validate();
  return view;
}

}  // namespace

std::vector<CameraView> sample_views(const PointCloud& cloud, int target_id, const ViewSpec& spec) {
  if (spec.count < 1) throw ContractError("sample_views: count must be >= 1");
  std::vector<int> pts = cloud.points_of(target_id);
  if (pts.empty())
    throw NotFoundError("sample_views: object id " + std::to_string(target_id) + " not in cloud");
  Vec3 target = cloud.centroid_of(pts);

  Rng rng(spec.seed);
  std::vector<CameraView> views;
  views.reserve(size_t(spec.count));
  for (int i = 0; i < spec.count; ++i) {
    Vec3 eye;
    if (spec.policy == ViewPolicy::Ring) {
      double az = spec.phase + 2.0 * M_PI * double(i) / double(spec.count);
      eye = target + Vec3(spec.radius * std::cos(az), spec.radius * std::sin(az), spec.height);
    } else {
      double az = rng.uniform(0.0, 2.0 * M_PI);
      double elev = rng.uniform(spec.elev_min_deg, spec.elev_max_deg) * M_PI / 180.0;
      double r = rng.uniform(spec.radius_min, spec.radius_max);
      eye = target + Vec3(r * std::cos(elev) * std::cos(az), r * std::cos(elev) * std::sin(az),
                          r * std::sin(elev));
    }
    views.push_back(look_at(eye, target, spec.hfov_deg, spec.image_width, spec.image_height,
                            spec.first_view_id + i));
  }
  return views;
}

// Format: header `advof-scene v1 <n_points>` then one `x y z r g b id` line
// per point, %.17e floats so reload is bit-exact.
void save_scene(const std::string& path, const PointCloud& cloud) {
  cloud.validate();
  std::string out;
  out.reserve(cloud.size() * 160 + 64);
  out += "advof-scene v1 " + std::to_string(cloud.size()) + "\n";
  for (size_t i = 0; i < cloud.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      append_line_double(out, cloud.positions[i][k]);
      out += ' ';
    }
    for (int k = 0; k < 3; ++k) {
      append_line_double(out, cloud.colors[i][k]);
      out += ' ';
    }
    out += std::to_string(cloud.object_ids[i]);
    out += '\n';
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write scene file: " + path);
  f << out;
}

namespace {

double parse_double_token(const std::string& line, size_t& pos, const std::string& path) {
  while (pos < line.size() && line[pos] == ' ') ++pos;
  size_t end = pos;
  while (end < line.size() && line[end] != ' ') ++end;
  double x = 0;
  auto res = std::from_chars(line.data() + pos, line.data() + end, x);
  if (res.ec != std::errc())
    throw IoError("scene file: bad float in " + path + ": '" + line.substr(pos, end - pos) + "'");
  pos = end;
  return x;
}

}  // namespace

PointCloud load_scene(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read scene file: " + path);
  std::string header;
  std::getline(f, header);
  std::istringstream hs(header);
  std::string magic, version;
  size_t n = 0;
  hs >> magic >> version >> n;
  if (magic != "advof-scene" || version != "v1")
    throw IoError("scene file: bad header in " + path);
  PointCloud cloud;
  cloud.positions.reserve(n);
  cloud.colors.reserve(n);
  cloud.object_ids.reserve(n);
  std::string line;
  for (size_t i = 0; i < n; ++i) {
    if (!std::getline(f, line)) throw IoError("scene file: truncated: " + path);
    size_t pos = 0;
    Vec3 p, c;
    for (int k = 0; k < 3; ++k) p[k] = parse_double_token(line, pos, path);
    for (int k = 0; k < 3; ++k) c[k] = parse_double_token(line, pos, path);
    while (pos < line.size() && line[pos] == ' ') ++pos;
    int id = 0;
    auto res = std::from_chars(line.data() + pos, line.data() + line.size(), id);
    if (res.ec != std::errc()) throw IoError("scene file: bad object id in " + path);
    cloud.positions.push_back(p);
    cloud.colors.push_back(c);
    cloud.object_ids.push_back(id);
  }
  cloud.validate();
  return cloud;
}

void save_labels(const std::string& path, const LabelRegistry& registry) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write labels file: " + path);
  for (const auto& [id, label] : registry.entries) f << id << '\t' << label << '\n';
}

LabelRegistry load_labels(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read labels file: " + path);
  LabelRegistry reg;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos) throw IoError("labels file: missing tab in " + path);
    reg.add(std::stoi(line.substr(0, tab)), line.substr(tab + 1));
  }
  if (reg.entries.empty()) throw IoError("labels file: empty: " + path);
  return reg;
}

}  // namespace advof
