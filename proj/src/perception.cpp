#include "advof/perception.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace advof {

namespace {
constexpr double kNormFloor = 1e-8;
}

ToyEncoder::ToyEncoder(uint64_t seed, int dim, int kernel) : C_(dim), k_(kernel) {
  if (dim < 1 || kernel < 1 || kernel % 2 == 0)
    throw ContractError("toy encoder: dim >= 1 and odd kernel required");
  Rng rng(seed);
  double scale = 1.0 / std::sqrt(double(kernel) * kernel * 3);
  weights_.resize(size_t(C_) * k_ * k_ * 3);
  for (double& w : weights_) w = rng.normal() * scale;
}

FeatureMap ToyEncoder::encode_image(const Image& image) const {
  if (image.c != 3) throw ContractError("encode_image: expected rgb image");
  const int H = image.h, W = image.w, half = k_ / 2;
  FeatureMap fmap;
  fmap.data = Image(H, W, C_);
  std::vector<double> act(size_t(C_));
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double norm_sq = 0.0;
      for (int oc = 0; oc < C_; ++oc) {
        double a = 0.0;
        for (int ky = 0; ky < k_; ++ky) {
          int sy = y + ky - half;
          if (sy < 0 || sy >= H) continue;  // zero padding
          for (int kx = 0; kx < k_; ++kx) {
            int sx = x + kx - half;
            if (sx < 0 || sx >= W) continue;
            for (int ic = 0; ic < 3; ++ic) a += weight(oc, ky, kx, ic) * image.at(sy, sx, ic);
          }
        }
        double t = std::tanh(a);
        act[size_t(oc)] = t;
        norm_sq += t * t;
      }
      double inv = 1.0 / std::max(std::sqrt(norm_sq), kNormFloor);
      for (int oc = 0; oc < C_; ++oc) fmap.data.at(y, x, oc) = act[size_t(oc)] * inv;
    }
  }
  return fmap;
}

Image ToyEncoder::vjp_image(const Image& image, const Image& cotangent) const {
  if (image.c != 3) throw ContractError("vjp_image: expected rgb image");
  if (cotangent.h != image.h || cotangent.w != image.w || cotangent.c != C_)
    throw ContractError("vjp_image: cotangent shape mismatch");
  const int H = image.h, W = image.w, half = k_ / 2;
  Image grad(H, W, 3);
  std::vector<double> act(size_t(C_)), ga(size_t(C_));
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      // Recompute pre-normalization activations for this pixel.
      double norm_sq = 0.0;
      for (int oc = 0; oc < C_; ++oc) {
        double a = 0.0;
        for (int ky = 0; ky < k_; ++ky) {
          int sy = y + ky - half;
          if (sy < 0 || sy >= H) continue;
          for (int kx = 0; kx < k_; ++kx) {
            int sx = x + kx - half;
            if (sx < 0 || sx >= W) continue;
            for (int ic = 0; ic < 3; ++ic) a += weight(oc, ky, kx, ic) * image.at(sy, sx, ic);
          }
        }
        act[size_t(oc)] = std::tanh(a);
        norm_sq += act[size_t(oc)] * act[size_t(oc)];
      }
      double n = std::sqrt(norm_sq);

      // Backprop through z = t / max(||t||, floor), then tanh.
      if (n > kNormFloor) {
        double inv = 1.0 / n;
        double dot = 0.0;
        for (int oc = 0; oc < C_; ++oc) dot += act[size_t(oc)] * inv * cotangent.at(y, x, oc);
        for (int oc = 0; oc < C_; ++oc) {
          double z = act[size_t(oc)] * inv;
          ga[size_t(oc)] = (cotangent.at(y, x, oc) - z * dot) * inv;
        }
      } else {
        double inv = 1.0 / kNormFloor;
        for (int oc = 0; oc < C_; ++oc) ga[size_t(oc)] = cotangent.at(y, x, oc) * inv;
      }
      for (int oc = 0; oc < C_; ++oc)
        ga[size_t(oc)] *= 1.0 - act[size_t(oc)] * act[size_t(oc)];  // tanh'

      // Adjoint of the convolution: spread onto contributing input pixels.
      for (int oc = 0; oc < C_; ++oc) {
        double g = ga[size_t(oc)];
        if (g == 0.0) continue;
        for (int ky = 0; ky < k_; ++ky) {
          int sy = y + ky - half;
          if (sy < 0 || sy >= H) continue;
          for (int kx = 0; kx < k_; ++kx) {
            int sx = x + kx - half;
            if (sx < 0 || sx >= W) continue;
            for (int ic = 0; ic < 3; ++ic) grad.at(sy, sx, ic) += g * weight(oc, ky, kx, ic);
          }
        }
      }
    }
  }
  return grad;
}

Embedding ToyEncoder::encode_text(const std::string& label) const {
  if (!protos_)
    throw CalibrationError("encode_text: prototypes not calibrated on this encoder");
  return protos_->at(label);
}

PrototypeSet calibrate_prototypes(const PointCloud& cloud, const LabelRegistry& registry,
                                  const std::vector<CameraView>& views,
                                  const EncoderContract& encoder, int splat_radius) {
  const int C = encoder.dim();
  std::vector<std::string> labels = registry.labels();
  std::map<std::string, Embedding> sums;
  std::map<std::string, long> counts;
  for (const auto& l : labels) {
    sums[l] = Embedding::Zero(C);
    counts[l] = 0;
  }

  for (const auto& view : views) {
    RenderedView rendered = rasterize(cloud, view, splat_radius);
    FeatureMap fmap = encoder.encode_image(rendered.color);
    for (const auto& [id, label] : registry.entries) {
      ObjectMask mask = mask_from_points(rendered, cloud.points_of(id), id);
      if (mask.pixel_count == 0) continue;
      Embedding& sum = sums[label];
      for (int y = 0; y < mask.h; ++y)
        for (int x = 0; x < mask.w; ++x) {
          if (!mask.at(y, x)) continue;
          for (int c = 0; c < C; ++c) sum[c] += fmap.data.at(y, x, c);
        }
      counts[label] += mask.pixel_count;
    }
  }

  PrototypeSet protos;
  protos.dim = C;
  for (const auto& label : labels) {
    if (counts[label] == 0)
      throw CalibrationError("calibrate_prototypes: label '" + label +
                             "' not visible in any calibration view");
    Embedding mean = sums[label] / double(counts[label]);
    double n = mean.norm();
    if (n < 1e-12)
      throw CalibrationError("calibrate_prototypes: degenerate prototype for '" + label + "'");
    protos.items.emplace_back(label, Embedding(mean / n));
  }
  return protos;
}

std::vector<double> masked_features(const FeatureMap& fmap, const ObjectMask& mask) {
  if (fmap.h() != mask.h || fmap.w() != mask.w)
    throw ContractError("masked_features: shape mismatch");
  std::vector<double> out(fmap.data.v.size(), 0.0);
  const int C = fmap.dim();
  for (int y = 0; y < mask.h; ++y)
    for (int x = 0; x < mask.w; ++x) {
      if (!mask.at(y, x)) continue;
      size_t base = fmap.data.idx(y, x, 0);
      for (int c = 0; c < C; ++c) out[base + c] = fmap.data.v[base + c];
    }
  return out;
}

Classification classify_object(const FeatureMap& fmap, const ObjectMask& mask,
                               const PrototypeSet& protos) {
  if (fmap.h() != mask.h || fmap.w() != mask.w)
    throw ContractError("classify_object: shape mismatch");
  if (mask.pixel_count == 0) throw DomainError("classify_object: empty mask");
  if (protos.items.empty()) throw ContractError("classify_object: no prototypes");
  const int C = fmap.dim();
  const int L = int(protos.items.size());

  std::vector<long> votes(size_t(L), 0);
  std::vector<double> win_cos_sum(size_t(L), 0.0);
  for (int y = 0; y < mask.h; ++y)
    for (int x = 0; x < mask.w; ++x) {
      if (!mask.at(y, x)) continue;
      int best = 0;
      double best_cos = -2.0;
      for (int l = 0; l < L; ++l) {
        const Embedding& p = protos.items[size_t(l)].second;
        double cs = 0.0;
        for (int c = 0; c < C; ++c) cs += fmap.data.at(y, x, c) * p[c];
        if (cs > best_cos) {
          best_cos = cs;
          best = l;
        }
      }
      votes[size_t(best)]++;
      win_cos_sum[size_t(best)] += best_cos;
    }

  int winner = 0;
  for (int l = 1; l < L; ++l)
    if (votes[size_t(l)] > votes[size_t(winner)]) winner = l;

  Classification out;
  out.label = protos.items[size_t(winner)].first;
  out.confidence = votes[size_t(winner)] > 0
                       ? win_cos_sum[size_t(winner)] / double(votes[size_t(winner)])
                       : 0.0;
  return out;
}

SemanticMap build_semantic_map(const PointCloud& cloud, const std::vector<CameraView>& views,
                               const EncoderContract& encoder, double cell_size, int splat_radius,
                               const std::vector<Vec3>* rgb_delta) {
  if (!(cell_size > 0)) throw ContractError("semantic map: cell size must be positive");
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const Vec3& p : cloud.positions) {
    xmin = std::min(xmin, p.x());
    xmax = std::max(xmax, p.x());
    ymin = std::min(ymin, p.y());
    ymax = std::max(ymax, p.y());
  }

  SemanticMap map;
  map.cell_size = cell_size;
  map.x0 = xmin;
  map.y0 = ymin;
  map.cols = std::max(1, int(std::ceil((xmax - xmin) / cell_size)));
  map.rows = std::max(1, int(std::ceil((ymax - ymin) / cell_size)));
  map.dim = encoder.dim();
  map.cells.assign(size_t(map.rows) * map.cols, Embedding::Zero(map.dim));
  map.hits.assign(size_t(map.rows) * map.cols, 0);

  for (const auto& view : views) {
    RenderedView rendered = rasterize(cloud, view, splat_radius);
    Image img = rendered.color;
    if (rgb_delta) img = clamped_add(img, render_perturbation(*rgb_delta, rendered));
    FeatureMap fmap = encoder.encode_image(img);

    for (int y = 0; y < rendered.h(); ++y)
      for (int x = 0; x < rendered.w(); ++x) {
        if (rendered.index_at(y, x) == kEmptyPixel) continue;
        double z = rendered.depth.at(y, x, 0);
        Vec3 world = back_project({{double(x), double(y)}}, {z}, view)[0];
        int col = std::min(map.cols - 1, std::max(0, int((world.x() - map.x0) / cell_size)));
        int row = std::min(map.rows - 1, std::max(0, int((world.y() - map.y0) / cell_size)));
        Embedding& cell = map.cells[map.idx(row, col)];
        for (int c = 0; c < map.dim; ++c) cell[c] += fmap.data.at(y, x, c);
        map.hits[map.idx(row, col)]++;
      }
  }

  for (size_t i = 0; i < map.cells.size(); ++i) {
    if (map.hits[i] == 0) continue;
    Embedding mean = map.cells[i] / double(map.hits[i]);
    double n = mean.norm();
    map.cells[i] = n > 1e-12 ? Embedding(mean / n) : Embedding::Zero(map.dim);
  }
  return map;
}

std::pair<int, int> localize(const SemanticMap& map, const std::string& label,
                             const PrototypeSet& protos) {
  const Embedding& proto = protos.at(label);
  if (proto.size() != map.dim) throw ContractError("localize: dimension mismatch");
  int best_row = -1, best_col = -1;
  double best = -2.0;
  for (int r = 0; r < map.rows; ++r)
    for (int c = 0; c < map.cols; ++c) {
      if (map.hits[map.idx(r, c)] == 0) continue;
      double cs = map.cells[map.idx(r, c)].dot(proto);
      if (cs > best) {
        best = cs;
        best_row = r;
        best_col = c;
      }
    }
  if (best_row < 0) throw NotFoundError("localize: map has no occupied cell");
  return {best_row, best_col};
}

void save_prototypes(const std::string& path, const PrototypeSet& protos) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write prototypes: " + path);
  f << "protos v1 C=" << protos.dim << "\n";
  char buf[40];
  for (const auto& [label, e] : protos.items) {
    f << label;
    for (int c = 0; c < protos.dim; ++c) {
      std::snprintf(buf, sizeof buf, "%.17e", e[c]);
      f << (c == 0 ? '\t' : ' ') << buf;
    }
    f << "\n";
  }
}

PrototypeSet load_prototypes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read prototypes: " + path);
  std::string header;
  std::getline(f, header);
  PrototypeSet protos;
  if (std::sscanf(header.c_str(), "protos v1 C=%d", &protos.dim) != 1 || protos.dim < 1)
    throw IoError("prototypes: bad header: " + path);
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos) throw IoError("prototypes: missing tab: " + path);
    Embedding e(protos.dim);
    size_t pos = tab + 1;
    for (int c = 0; c < protos.dim; ++c) {
      while (pos < line.size() && line[pos] == ' ') ++pos;
      size_t end = line.find(' ', pos);
      if (end == std::string::npos) end = line.size();
      auto res = std::from_chars(line.data() + pos, line.data() + end, e[c]);
      if (res.ec != std::errc()) throw IoError("prototypes: bad float: " + path);
      pos = end;
    }
    protos.items.emplace_back(line.substr(0, tab), std::move(e));
  }
  if (protos.items.empty()) throw IoError("prototypes: empty: " + path);
  return protos;
}

}  // namespace advof
