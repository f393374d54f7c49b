#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advof/types.hpp"

namespace advof {

constexpr int32_t kEmptyPixel = -1;

// Z-buffered point-splat render of one view. The point-index map records the
// frontmost cloud point per pixel and is the transport for all pixel<->point
// gradient flow.
struct RenderedView {
  Image color;                    // H x W x 3 in [0,1]
  Image depth;                    // H x W x 1, camera-space z, +inf where empty
  std::vector<int32_t> point_index;  // H x W, kEmptyPixel where empty
  int view_id = 0;
  size_t source_point_count = 0;

  int h() const { return color.h; }
  int w() const { return color.w; }
  int32_t index_at(int y, int x) const { return point_index[size_t(y) * w() + x]; }
};

struct ObjectMask {
  int h = 0, w = 0;
  std::vector<uint8_t> bits;  // 0/1 per pixel
  int object_id = -1;
  int pixel_count = 0;  // N_v, equals the number of set pixels
  double score = 1.0;   // segmenter confidence in [0,1]
  int view_id = -1;

  ObjectMask() = default;
  ObjectMask(int h_, int w_) : h(h_), w(w_), bits(size_t(h_) * w_, 0) {}
  bool at(int y, int x) const { return bits[size_t(y) * w + x] != 0; }
  void set(int y, int x, bool v) { bits[size_t(y) * w + x] = v ? 1 : 0; }
  void recount() {
    pixel_count = 0;
    for (uint8_t b : bits) pixel_count += b;
  }
};

// Each visible point paints the pixel disc of `splat_radius` around its
// projection (plus the nearest pixel, so radius 0 degenerates to single-pixel
// splats). Depth ties within 1e-12 go to the lower point index.
RenderedView rasterize(const PointCloud& cloud, const CameraView& view, int splat_radius = 1);

// Exact inverse of the pinhole projection for known depths.
std::vector<Vec3> back_project(const std::vector<std::pair<double, double>>& pixels,
                               const std::vector<double>& depths, const CameraView& view);

// Per-point RGB deltas -> per-pixel delta image through the frozen point-index
// map. Linear; scatter_to_points is its exact adjoint.
Image render_perturbation(const std::vector<Vec3>& rgb_delta, const RenderedView& rendered);

// Adjoint of render_perturbation: accumulates a pixel-space cotangent onto the
// points that own each pixel.
std::vector<Vec3> scatter_to_points(const Image& pixel_cotangent, const RenderedView& rendered);

// mask of the pixels owned by any of the given (sorted) point indices.
ObjectMask mask_from_points(const RenderedView& rendered, const std::vector<int>& point_indices,
                            int object_id = -1);

Image clamped_add(const Image& base, const Image& delta);  // clamp(base+delta, 0, 1)

void write_ppm(const std::string& path, const Image& image);         // P6, maxval 255
void write_depth_pgm(const std::string& path, const Image& depth);   // P5 16-bit, millimeters

}  // namespace advof
