#include "advof/geometry.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace advof {

namespace {
constexpr double kDepthTie = 1e-12;
}

RenderedView rasterize(const PointCloud& cloud, const CameraView& view, int splat_radius) {
  view.validate();
  if (splat_radius < 0) throw ContractError("rasterize: negative splat radius");

  const int W = view.width, H = view.height;
  RenderedView out;
  out.color = Image(H, W, 3);
  out.depth = Image(H, W, 1);
  out.point_index.assign(size_t(H) * W, kEmptyPixel);
  out.view_id = view.id;
  out.source_point_count = cloud.size();
  std::fill(out.depth.v.begin(), out.depth.v.end(), std::numeric_limits<double>::infinity());

  const double r = double(splat_radius);
  const double r2 = r * r;

  for (size_t i = 0; i < cloud.size(); ++i) {
    double u, v, z;
    if (!view.project(cloud.positions[i], u, v, z)) continue;

    int x_near = int(std::lround(u));
    int y_near = int(std::lround(v));
    int x0 = int(std::ceil(u - r)), x1 = int(std::floor(u + r));
    int y0 = int(std::ceil(v - r)), y1 = int(std::floor(v + r));
    x0 = std::min(x0, x_near); x1 = std::max(x1, x_near);
    y0 = std::min(y0, y_near); y1 = std::max(y1, y_near);

    for (int y = std::max(y0, 0); y <= std::min(y1, H - 1); ++y) {
      for (int x = std::max(x0, 0); x <= std::min(x1, W - 1); ++x) {
        bool inside = (x == x_near && y == y_near);
        if (!inside) {
          double dx = x - u, dy = y - v;
          inside = dx * dx + dy * dy <= r2;
        }
        if (!inside) continue;
        size_t p = size_t(y) * W + x;
        int32_t prev = out.point_index[p];
        bool wins;
        if (prev == kEmptyPixel) {
          wins = true;
        } else {
          double cur = out.depth.v[p];
          wins = z < cur - kDepthTie || (std::abs(z - cur) <= kDepthTie && int32_t(i) < prev);
        }
        if (!wins) continue;
        out.depth.v[p] = z;
        out.point_index[p] = int32_t(i);
        for (int ch = 0; ch < 3; ++ch) out.color.at(y, x, ch) = cloud.colors[i][ch];
      }
    }
  }
  return out;
}

std::vector<Vec3> back_project(const std::vector<std::pair<double, double>>& pixels,
                               const std::vector<double>& depths, const CameraView& view) {
  if (pixels.size() != depths.size())
    throw ContractError("back_project: pixel/depth length mismatch");
  std::vector<Vec3> out;
  out.reserve(pixels.size());
  for (size_t i = 0; i < pixels.size(); ++i) {
    double z = depths[i];
    if (!(z > 0.0)) throw DomainError("back_project: non-positive depth");
    double x = (pixels[i].first - view.cx) / view.fx * z;
    double y = (pixels[i].second - view.cy) / view.fy * z;
    out.push_back(view.to_world(Vec3(x, y, z)));
  }
  return out;
}

Image render_perturbation(const std::vector<Vec3>& rgb_delta, const RenderedView& rendered) {
  if (rgb_delta.size() != rendered.source_point_count)
    throw ContractError("render_perturbation: delta not indexed over the rendered cloud");
  Image out(rendered.h(), rendered.w(), 3);
  for (int y = 0; y < rendered.h(); ++y) {
    for (int x = 0; x < rendered.w(); ++x) {
      int32_t idx = rendered.index_at(y, x);
      if (idx == kEmptyPixel) continue;
      const Vec3& d = rgb_delta[size_t(idx)];
      for (int ch = 0; ch < 3; ++ch) out.at(y, x, ch) = d[ch];
    }
  }
  return out;
}

std::vector<Vec3> scatter_to_points(const Image& pixel_cotangent, const RenderedView& rendered) {
  if (pixel_cotangent.h != rendered.h() || pixel_cotangent.w != rendered.w() ||
      pixel_cotangent.c != 3)
    throw ContractError("scatter_to_points: cotangent shape mismatch");
  std::vector<Vec3> out(rendered.source_point_count, Vec3::Zero());
  for (int y = 0; y < rendered.h(); ++y) {
    for (int x = 0; x < rendered.w(); ++x) {
      int32_t idx = rendered.index_at(y, x);
      if (idx == kEmptyPixel) continue;
      for (int ch = 0; ch < 3; ++ch) out[size_t(idx)][ch] += pixel_cotangent.at(y, x, ch);
    }
  }
  return out;
}

ObjectMask mask_from_points(const RenderedView& rendered, const std::vector<int>& point_indices,
                            int object_id) {
  ObjectMask mask(rendered.h(), rendered.w());
  mask.object_id = object_id;
  mask.view_id = rendered.view_id;
  std::vector<uint8_t> member(rendered.source_point_count, 0);
  for (int i : point_indices) member[size_t(i)] = 1;
  for (int y = 0; y < rendered.h(); ++y)
    for (int x = 0; x < rendered.w(); ++x) {
      int32_t idx = rendered.index_at(y, x);
      if (idx != kEmptyPixel && member[size_t(idx)]) mask.set(y, x, true);
    }
  mask.recount();
  return mask;
}

Image clamped_add(const Image& base, const Image& delta) {
  if (!base.same_shape(delta)) throw ContractError("clamped_add: shape mismatch");
  Image out = base;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = clamp01(base.v[i] + delta.v[i]);
  return out;
}

void write_ppm(const std::string& path, const Image& image) {
  if (image.c != 3) throw ContractError("write_ppm: expected 3 channels");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write ppm: " + path);
  f << "P6\n" << image.w << " " << image.h << "\n255\n";
  std::vector<unsigned char> row(size_t(image.w) * 3);
  for (int y = 0; y < image.h; ++y) {
    for (int x = 0; x < image.w; ++x)
      for (int ch = 0; ch < 3; ++ch)
        row[size_t(x) * 3 + ch] =
            (unsigned char)std::lround(clamp01(image.at(y, x, ch)) * 255.0);
    f.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
  }
}

void write_depth_pgm(const std::string& path, const Image& depth) {
  if (depth.c != 1) throw ContractError("write_depth_pgm: expected 1 channel");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write pgm: " + path);
  f << "P5\n" << depth.w << " " << depth.h << "\n65535\n";
  std::vector<unsigned char> row(size_t(depth.w) * 2);
  for (int y = 0; y < depth.h; ++y) {
    for (int x = 0; x < depth.w; ++x) {
      double mm = depth.at(y, x, 0) * 1000.0;
      uint16_t q = std::isfinite(mm) ? uint16_t(std::min(mm, 65535.0)) : 65535;
      row[size_t(x) * 2] = (unsigned char)(q >> 8);  // big-endian per Netpbm
      row[size_t(x) * 2 + 1] = (unsigned char)(q & 0xff);
    }
    f.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
  }
}

}  // namespace advof
