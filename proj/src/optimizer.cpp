#include "advof/optimizer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace advof {

PointCloud Perturbation::apply_to(const PointCloud& cloud) const {
  if (rgb.size() != cloud.size())
    throw ContractError("perturbation: index mismatch with cloud");
  PointCloud out = cloud;
  for (size_t i = 0; i < out.size(); ++i) {
    out.colors[i] += rgb[i];
    for (int k = 0; k < 3; ++k) out.colors[i][k] = clamp01(out.colors[i][k]);
  }
  if (!pos.empty()) {
    if (pos.size() != cloud.size())
      throw ContractError("perturbation: positional index mismatch with cloud");
    for (size_t i = 0; i < out.size(); ++i) out.positions[i] += pos[i];
  }
  return out;
}

void save_perturbation(const std::string& path, const Perturbation& delta) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write delta file: " + path);
  size_t n = 0;
  for (size_t i = 0; i < delta.rgb.size(); ++i) {
    bool nz = delta.rgb[i].squaredNorm() != 0.0 ||
              (!delta.pos.empty() && delta.pos[i].squaredNorm() != 0.0);
    if (nz) ++n;
  }
  f << "advof-delta v1 " << n << "\n";
  char buf[40];
  for (size_t i = 0; i < delta.rgb.size(); ++i) {
    bool has_pos = !delta.pos.empty() && delta.pos[i].squaredNorm() != 0.0;
    if (delta.rgb[i].squaredNorm() == 0.0 && !has_pos) continue;
    f << i;
    for (int k = 0; k < 3; ++k) {
      std::snprintf(buf, sizeof buf, "%.17e", delta.rgb[i][k]);
      f << ' ' << buf;
    }
    if (has_pos)
      for (int k = 0; k < 3; ++k) {
        std::snprintf(buf, sizeof buf, "%.17e", delta.pos[i][k]);
        f << ' ' << buf;
      }
    f << "\n";
  }
}

Perturbation load_perturbation(const std::string& path, size_t n_points, double epsilon) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read delta file: " + path);
  std::string header;
  std::getline(f, header);
  size_t n = 0;
  if (std::sscanf(header.c_str(), "advof-delta v1 %zu", &n) != 1)
    throw IoError("delta file: bad header: " + path);
  Perturbation delta = Perturbation::zeros(n_points, epsilon);
  std::string line;
  size_t seen = 0;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    size_t idx;
    double r, g, b;
    if (!(ss >> idx >> r >> g >> b)) throw IoError("delta file: bad record: " + path);
    if (idx >= n_points) throw IoError("delta file: index out of range: " + path);
    delta.rgb[idx] = Vec3(r, g, b);
    double dx, dy, dz;
    if (ss >> dx >> dy >> dz) {
      if (delta.pos.empty()) delta.pos.assign(n_points, Vec3::Zero());
      delta.pos[idx] = Vec3(dx, dy, dz);
    }
    ++seen;
  }
  if (seen != n) throw IoError("delta file: record count mismatch: " + path);
  return delta;
}

void adam_step(AdamState& state, std::vector<double>& var, const std::vector<double>& grad,
               double eps_bound) {
  if (var.size() != grad.size() || var.size() != state.m.size())
    throw ContractError("adam_step: shape mismatch");
  for (double g : grad)
    if (!std::isfinite(g))
      throw OptimizationError("adam_step: non-finite gradient at step " +
                              std::to_string(state.step + 1));
  state.step += 1;
  const AdamConfig& c = state.cfg;
  double bc1 = 1.0 - std::pow(c.beta1, double(state.step));
  double bc2 = 1.0 - std::pow(c.beta2, double(state.step));
  for (size_t i = 0; i < var.size(); ++i) {
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grad[i];
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
    double m_hat = state.m[i] / bc1;
    double v_hat = state.v[i] / bc2;
    double x = var[i] - c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    var[i] = std::clamp(x, -eps_bound, eps_bound);
  }
}

void AttackSetup::validate() const {
  if (!cloud || !victim || !encoder || !protos) throw ContractError("attack setup: missing inputs");
  if (mode == Mode::Targeted) {
    if (target_label.empty()) throw ContractError("attack setup: targeted mode needs target label");
    if (!exemplar) throw ContractError("attack setup: targeted mode needs exemplar");
  }
}

AttackSetup make_attack_setup(const PointCloud& cloud, const VictimObject& victim,
                              const EncoderContract& encoder, const PrototypeSet& protos,
                              Mode mode, const std::string& target_label,
                              const TargetExemplar* exemplar) {
  AttackSetup setup;
  setup.cloud = &cloud;
  setup.victim = &victim;
  setup.encoder = &encoder;
  setup.protos = &protos;
  setup.mode = mode;
  setup.target_label = target_label;
  setup.exemplar = exemplar;
  if (exemplar) {
    exemplar->validate();
    setup.exemplar_features = encoder.encode_image(exemplar->image);
  }
  setup.validate();
  return setup;
}

ViewContext make_view_context(const PointCloud& cloud, const CameraView& view,
                              const VictimObject& victim, const EncoderContract& encoder,
                              int splat_radius, double weight) {
  ViewContext ctx;
  ctx.rendered = rasterize(cloud, view, splat_radius);
  ctx.victim_mask = mask_from_points(ctx.rendered, victim.point_indices);
  ctx.benign_features = encoder.encode_image(ctx.rendered.color);
  ctx.weight = weight;

  std::vector<uint8_t> victim_member(cloud.size(), 0);
  for (int i : victim.point_indices) victim_member[size_t(i)] = 1;
  std::vector<uint8_t> visible(cloud.size(), 0);
  for (int32_t idx : ctx.rendered.point_index)
    if (idx != kEmptyPixel && victim_member[size_t(idx)]) visible[size_t(idx)] = 1;
  for (size_t i = 0; i < cloud.size(); ++i)
    if (visible[i]) ctx.visible_victim_points.push_back(int(i));
  return ctx;
}

namespace {

struct Evaluation {
  LossBreakdown loss;
  std::vector<double> grad;  // over the packed variable, empty if not requested
};

// Shared forward/backward pass: objective = L3D + weight * L2D evaluated for
// the current delta, with the point-index map frozen.
Evaluation evaluate(const Perturbation& delta, const AttackSetup& setup, const ViewContext& ctx,
                    const OptimizeConfig& cfg, bool want_grad) {
  const PointCloud& cloud = *setup.cloud;
  const auto& visible = ctx.visible_victim_points;

  Evaluation ev;
  ev.loss.mode = setup.mode;
  ev.loss.alpha = cfg.alpha;
  ev.loss.beta = cfg.beta;
  ev.loss.weight = ctx.weight;

  Image delta_image = render_perturbation(delta.rgb, ctx.rendered);
  Image adv_image = clamped_add(ctx.rendered.color, delta_image);

  Image cotangent;
  if (cfg.enable_l2d) {
    FeatureMap fmap_adv = setup.encoder->encode_image(adv_image);
    fmap_adv.view_id = ctx.rendered.view_id;
    L2dRequest req;
    req.adv = &fmap_adv;
    req.benign = &ctx.benign_features;
    req.mask = &ctx.victim_mask;
    req.mode = setup.mode;
    req.alpha = cfg.alpha;
    req.beta = cfg.beta;
    req.whole_image_i2i = setup.whole_image_i2i;
    req.text_embedding = &setup.text_embedding();
    if (setup.mode == Mode::Targeted) {
      req.exemplar_features = &setup.exemplar_features;
      req.exemplar_mask = &setup.exemplar->mask;
    }
    req.want_cotangent = want_grad;
    L2dResult l2 = l_2d(req);
    ev.loss.i2i = l2.loss.i2i;
    ev.loss.i2t = l2.loss.i2t;
    ev.loss.b2b = l2.loss.b2b;
    ev.loss.total = l2.loss.total;
    if (want_grad) cotangent = setup.encoder->vjp_image(adv_image, l2.cotangent);
  }

  if (cfg.enable_l3d) {
    for (int i : setup.victim->point_indices) ev.loss.color += delta.rgb[size_t(i)].squaredNorm();
    if (!delta.pos.empty()) {
      std::vector<Vec3> adv_pos, orig_pos;
      adv_pos.reserve(setup.victim->point_indices.size());
      orig_pos.reserve(setup.victim->point_indices.size());
      for (int i : setup.victim->point_indices) {
        adv_pos.push_back(cloud.positions[size_t(i)] + delta.pos[size_t(i)]);
        orig_pos.push_back(cloud.positions[size_t(i)]);
      }
      ev.loss.chamfer = l_chamfer(adv_pos, orig_pos);
    }
  }
  ev.loss.objective = ev.loss.color + ev.loss.chamfer + ctx.weight * ev.loss.total;

  if (!std::isfinite(ev.loss.objective))
    throw OptimizationError("optimize_view: non-finite loss in view " +
                            std::to_string(ctx.rendered.view_id));

  if (want_grad) {
    std::vector<Vec3> point_grad(cloud.size(), Vec3::Zero());
    if (cfg.enable_l2d) {
      // Clamp subgradient: zero where base + delta left [0,1].
      for (size_t i = 0; i < cotangent.v.size(); ++i) {
        double pre = ctx.rendered.color.v[i] + delta_image.v[i];
        if (pre < 0.0 || pre > 1.0) cotangent.v[i] = 0.0;
      }
      point_grad = scatter_to_points(cotangent, ctx.rendered);
      for (Vec3& g : point_grad) g *= ctx.weight;
    }
    if (cfg.enable_l3d)
      for (int i : setup.victim->point_indices) point_grad[size_t(i)] += 2.0 * delta.rgb[size_t(i)];

    ev.grad.resize(visible.size() * 3);
    for (size_t k = 0; k < visible.size(); ++k)
      for (int ch = 0; ch < 3; ++ch) ev.grad[k * 3 + ch] = point_grad[size_t(visible[k])][ch];
  }
  return ev;
}

void write_var(Perturbation& delta, const std::vector<int>& visible,
               const std::vector<double>& var) {
  for (size_t k = 0; k < visible.size(); ++k)
    for (int ch = 0; ch < 3; ++ch) delta.rgb[size_t(visible[k])][ch] = var[k * 3 + ch];
}

// Positional updates are experimental: L2D position gradients come from
// central finite differences per coordinate, so this path is only usable on
// small victims.
std::vector<double> positional_grad(Perturbation& delta, const AttackSetup& setup,
                                    const ViewContext& ctx, const OptimizeConfig& cfg) {
  const auto& visible = ctx.visible_victim_points;
  std::vector<Vec3> adv_pos, orig_pos;
  for (int i : setup.victim->point_indices) {
    adv_pos.push_back(setup.cloud->positions[size_t(i)] + delta.pos[size_t(i)]);
    orig_pos.push_back(setup.cloud->positions[size_t(i)]);
  }
  std::vector<Vec3> cd = l_chamfer_grad(adv_pos, orig_pos);
  std::vector<Vec3> full(setup.cloud->size(), Vec3::Zero());
  for (size_t k = 0; k < setup.victim->point_indices.size(); ++k)
    full[size_t(setup.victim->point_indices[k])] = cd[k];

  OptimizeConfig probe = cfg;
  probe.enable_l3d = false;
  std::vector<double> grad(visible.size() * 3, 0.0);
  for (size_t k = 0; k < visible.size(); ++k) {
    size_t i = size_t(visible[k]);
    for (int ch = 0; ch < 3; ++ch) {
      double saved = delta.pos[i][ch];
      delta.pos[i][ch] = saved + cfg.fd_step;
      double up = evaluate(delta, setup, ctx, probe, false).loss.total;
      delta.pos[i][ch] = saved - cfg.fd_step;
      double dn = evaluate(delta, setup, ctx, probe, false).loss.total;
      delta.pos[i][ch] = saved;
      grad[k * 3 + ch] = ctx.weight * (up - dn) / (2.0 * cfg.fd_step) + full[i][ch];
    }
  }
  return grad;
}

}  // namespace

OptimizeResult optimize_view(Perturbation& delta, const AttackSetup& setup, const ViewContext& ctx,
                             const OptimizeConfig& config) {
  setup.validate();
  if (delta.rgb.size() != setup.cloud->size())
    throw ContractError("optimize_view: delta not indexed over the cloud");

  OptimizeResult result;
  if (!ctx.victim_visible() || ctx.victim_mask.pixel_count == 0) {
    result.skipped = true;
    return result;
  }
  if (config.iters <= 0) return result;

  const auto& visible = ctx.visible_victim_points;
  std::vector<double> var(visible.size() * 3);
  for (size_t k = 0; k < visible.size(); ++k)
    for (int ch = 0; ch < 3; ++ch) var[k * 3 + ch] = delta.rgb[size_t(visible[k])][ch];

  AdamState state(var.size(), config.adam);
  AdamState pos_state;
  std::vector<double> pos_var;
  const bool positional = config.positional && !delta.pos.empty();
  if (positional) {
    pos_var.resize(visible.size() * 3);
    for (size_t k = 0; k < visible.size(); ++k)
      for (int ch = 0; ch < 3; ++ch) pos_var[k * 3 + ch] = delta.pos[size_t(visible[k])][ch];
    pos_state = AdamState(pos_var.size(), config.adam);
  }

  Evaluation ev = evaluate(delta, setup, ctx, config, true);
  for (int iter = 1; iter <= config.iters; ++iter) {
    adam_step(state, var, ev.grad, config.eps_bound);
    write_var(delta, visible, var);
    if (positional) {
      std::vector<double> pg = positional_grad(delta, setup, ctx, config);
      adam_step(pos_state, pos_var, pg, config.pos_epsilon);
      for (size_t k = 0; k < visible.size(); ++k)
        for (int ch = 0; ch < 3; ++ch) delta.pos[size_t(visible[k])][ch] = pos_var[k * 3 + ch];
    }
    ev = evaluate(delta, setup, ctx, config, iter < config.iters);
    result.trace.push_back(ev.loss);
  }
  return result;
}

LossBreakdown evaluate_view_losses(const Perturbation& delta, const AttackSetup& setup,
                                   const ViewContext& ctx, double alpha, double beta,
                                   bool enable_l2d, bool enable_l3d) {
  OptimizeConfig cfg;
  cfg.alpha = alpha;
  cfg.beta = beta;
  cfg.enable_l2d = enable_l2d;
  cfg.enable_l3d = enable_l3d;
  return evaluate(delta, setup, ctx, cfg, false).loss;
}

}  // namespace advof
