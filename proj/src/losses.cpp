#include "advof/losses.hpp"

#include <cmath>
#include <limits>

namespace advof {

namespace {
constexpr double kCosFloor = 1e-12;
}

double l_color(const std::vector<Vec3>& adv_colors, const std::vector<Vec3>& orig_colors) {
  if (adv_colors.size() != orig_colors.size())
    throw ContractError("l_color: length mismatch");
  double sum = 0.0;
  for (size_t i = 0; i < adv_colors.size(); ++i) sum += (adv_colors[i] - orig_colors[i]).squaredNorm();
  return sum;
}

std::vector<Vec3> l_color_grad(const std::vector<Vec3>& adv_colors,
                               const std::vector<Vec3>& orig_colors) {
  if (adv_colors.size() != orig_colors.size())
    throw ContractError("l_color_grad: length mismatch");
  std::vector<Vec3> g(adv_colors.size());
  for (size_t i = 0; i < adv_colors.size(); ++i) g[i] = 2.0 * (adv_colors[i] - orig_colors[i]);
  return g;
}

double l_chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.empty() || b.empty()) throw DomainError("l_chamfer: empty point set");
  double sum = 0.0;
  for (const Vec3& x : a) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& y : b) best = std::min(best, (x - y).squaredNorm());
    sum += best;
  }
  for (const Vec3& y : b) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& x : a) best = std::min(best, (y - x).squaredNorm());
    sum += best;
  }
  return sum;
}

std::vector<Vec3> l_chamfer_grad(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.empty() || b.empty()) throw DomainError("l_chamfer_grad: empty point set");
  std::vector<Vec3> g(a.size(), Vec3::Zero());
  // First direction: every x pulls toward its nearest y.
  for (size_t i = 0; i < a.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    size_t bj = 0;
    for (size_t j = 0; j < b.size(); ++j) {
      double d = (a[i] - b[j]).squaredNorm();
      if (d < best) {
        best = d;
        bj = j;
      }
    }
    g[i] += 2.0 * (a[i] - b[bj]);
  }
  // Second direction: every y pulls its nearest x.
  for (size_t j = 0; j < b.size(); ++j) {
    double best = std::numeric_limits<double>::infinity();
    size_t bi = 0;
    for (size_t i = 0; i < a.size(); ++i) {
      double d = (b[j] - a[i]).squaredNorm();
      if (d < best) {
        best = d;
        bi = i;
      }
    }
    g[bi] += 2.0 * (a[bi] - b[j]);
  }
  return g;
}

double l_3d(const PointCloud& adv, const PointCloud& orig) {
  return l_color(adv.colors, orig.colors) + l_chamfer(adv.positions, orig.positions);
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ContractError("cosine: length mismatch");
  double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::max(std::sqrt(na) * std::sqrt(nb), kCosFloor);
}

namespace {

// Cosine between two masked feature maps plus its gradient w.r.t. the adv
// map, restricted to grad_mask (the operator's own mask). Gradient is the
// exact derivative of the floored-denominator formula.
struct MaskedCos {
  double value = 0.0;
};

MaskedCos masked_cosine(const FeatureMap& adv, const ObjectMask* adv_mask, const FeatureMap& ref,
                        const ObjectMask* ref_mask, bool complement, Image* grad_accum,
                        double grad_scale) {
  const int H = adv.h(), W = adv.w(), C = adv.dim();
  if (ref.h() != H || ref.w() != W || ref.dim() != C)
    throw ContractError("l_2d: feature map shape mismatch");

  auto in_adv = [&](int y, int x) {
    bool m = adv_mask ? adv_mask->at(y, x) : true;
    return complement ? !m : m;
  };
  auto in_ref = [&](int y, int x) {
    bool m = ref_mask ? ref_mask->at(y, x) : true;
    return complement ? !m : m;
  };

  double dot = 0, na2 = 0, nb2 = 0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      bool ia = in_adv(y, x), ib = in_ref(y, x);
      if (!ia && !ib) continue;
      size_t pa = adv.data.idx(y, x, 0), pb = ref.data.idx(y, x, 0);
      for (int c = 0; c < C; ++c) {
        double va = ia ? adv.data.v[pa + c] : 0.0;
        double vb = ib ? ref.data.v[pb + c] : 0.0;
        dot += va * vb;
        na2 += va * va;
        nb2 += vb * vb;
      }
    }
  double na = std::sqrt(na2), nb = std::sqrt(nb2);
  double denom = std::max(na * nb, kCosFloor);
  MaskedCos out;
  out.value = dot / denom;

  if (grad_accum) {
    bool floored = na * nb <= kCosFloor;
    double inv_na2 = na2 > 0 ? 1.0 / na2 : 0.0;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        if (!in_adv(y, x)) continue;  // masked operator blocks outside pixels
        bool ib = in_ref(y, x);
        size_t pa = adv.data.idx(y, x, 0), pb = ref.data.idx(y, x, 0);
        size_t pg = grad_accum->idx(y, x, 0);
        for (int c = 0; c < C; ++c) {
          double va = adv.data.v[pa + c];
          double vb = ib ? ref.data.v[pb + c] : 0.0;
          double g = floored ? vb / kCosFloor : vb / denom - out.value * va * inv_na2;
          grad_accum->v[pg + c] += grad_scale * g;
        }
      }
  }
  return out;
}

// Cosine between the renormalized mean masked feature and a unit text
// embedding; gradient w.r.t. the adv map on mask pixels.
double pooled_text_cosine(const FeatureMap& adv, const ObjectMask& mask, const Embedding& text,
                          Image* grad_accum, double grad_scale) {
  const int C = adv.dim();
  if (text.size() != C) throw ContractError("l_2d: text embedding dimension mismatch");
  if (mask.pixel_count == 0) throw DomainError("l_2d: empty mask");

  Embedding u = Embedding::Zero(C);
  for (int y = 0; y < mask.h; ++y)
    for (int x = 0; x < mask.w; ++x) {
      if (!mask.at(y, x)) continue;
      size_t p = adv.data.idx(y, x, 0);
      for (int c = 0; c < C; ++c) u[c] += adv.data.v[p + c];
    }
  u /= double(mask.pixel_count);
  double n = u.norm();
  double denom = std::max(n, kCosFloor);
  Embedding u_hat = u / denom;
  double value = u_hat.dot(text);

  if (grad_accum) {
    Embedding du;
    if (n > kCosFloor)
      du = (text - u_hat * value) / n;
    else
      du = text / kCosFloor;
    du /= double(mask.pixel_count);
    for (int y = 0; y < mask.h; ++y)
      for (int x = 0; x < mask.w; ++x) {
        if (!mask.at(y, x)) continue;
        size_t pg = grad_accum->idx(y, x, 0);
        for (int c = 0; c < C; ++c) grad_accum->v[pg + c] += grad_scale * du[c];
      }
  }
  return value;
}

}  // namespace

L2dResult l_2d(const L2dRequest& req) {
  if (!req.adv || !req.benign || !req.mask) throw ContractError("l_2d: missing inputs");
  if (req.mask->pixel_count == 0) throw DomainError("l_2d: empty mask");
  if (!req.text_embedding) throw ContractError("l_2d: missing text embedding");
  if (req.mode == Mode::Targeted && (!req.exemplar_features || !req.exemplar_mask))
    throw ContractError("l_2d: targeted mode requires a target exemplar");
  if (req.adv->h() != req.mask->h || req.adv->w() != req.mask->w)
    throw ContractError("l_2d: mask shape mismatch");

  L2dResult out;
  out.loss.mode = req.mode;
  out.loss.alpha = req.alpha;
  out.loss.beta = req.beta;
  Image* grad = nullptr;
  if (req.want_cotangent) {
    out.cotangent = Image(req.adv->h(), req.adv->w(), req.adv->dim());
    grad = &out.cotangent;
  }

  double sign = req.mode == Mode::Untargeted ? 1.0 : -1.0;

  // I2I: vs the benign view (untargeted) or the retained exemplar (targeted).
  const FeatureMap& i2i_ref = req.mode == Mode::Untargeted ? *req.benign : *req.exemplar_features;
  const ObjectMask* i2i_ref_mask = req.mode == Mode::Untargeted ? req.mask : req.exemplar_mask;
  const ObjectMask* i2i_adv_mask = req.whole_image_i2i ? nullptr : req.mask;
  const ObjectMask* i2i_rmask = req.whole_image_i2i ? nullptr : i2i_ref_mask;
  out.loss.i2i =
      masked_cosine(*req.adv, i2i_adv_mask, i2i_ref, i2i_rmask, false, grad, sign).value;

  // I2T: pooled masked feature vs the label embedding.
  out.loss.i2t =
      pooled_text_cosine(*req.adv, *req.mask, *req.text_embedding, grad, sign * req.alpha);

  // B2B: complemented masks vs the benign view, in both modes.
  out.loss.b2b =
      masked_cosine(*req.adv, req.mask, *req.benign, req.mask, true, grad, -req.beta).value;

  out.loss.total = out.loss.recompute_total();
  return out;
}

}  // namespace advof
