#include "advof/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace advof {

std::vector<ViewWeight> importance_weights(const std::vector<ObjectMask>& masks) {
  std::vector<ViewWeight> out;
  int n_max = 0;
  for (const auto& m : masks) n_max = std::max(n_max, m.pixel_count);
  if (n_max == 0) throw FusionError("importance_weights: all victim masks are empty", "");

  double sum = 0.0;
  for (const auto& m : masks) {
    if (m.pixel_count == 0) continue;
    ViewWeight w;
    w.view_id = m.view_id;
    w.score = m.score;
    w.pixel_count = m.pixel_count;
    w.raw = m.score + double(m.pixel_count) / double(n_max);
    sum += w.raw;
    out.push_back(w);
  }
  for (auto& w : out) w.normalized = w.raw / sum;
  std::sort(out.begin(), out.end(), [](const ViewWeight& a, const ViewWeight& b) {
    if (a.normalized != b.normalized) return a.normalized > b.normalized;
    return a.view_id < b.view_id;
  });
  return out;
}

double image_mse(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ContractError("image_mse: shape mismatch");
  if (a.v.empty()) return 0.0;
  double sum = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    double d = a.v[i] - b.v[i];
    sum += d * d;
  }
  return sum / double(a.v.size());
}

bool consistency_check(const Image& prev_accepted, const Image& prev_rerendered, double mu1) {
  return image_mse(prev_accepted, prev_rerendered) < mu1;
}

bool fusion_check(double prev_l2d_accepted, double prev_l2d_now, double mu2) {
  if (!std::isfinite(prev_l2d_accepted) || !std::isfinite(prev_l2d_now))
    throw ContractError("fusion_check: non-finite loss");
  return std::abs(prev_l2d_now - prev_l2d_accepted) < mu2;
}

namespace {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

}  // namespace

std::string FusionReport::to_text() const {
  std::ostringstream os;
  int accepted = 0, rejected = 0, skipped = 0;
  for (const auto& v : views) {
    if (v.outcome == ViewOutcome::Kind::Accepted) ++accepted;
    else if (v.outcome == ViewOutcome::Kind::Rejected) ++rejected;
    else ++skipped;
  }
  os << "fusion-report v1\n";
  os << "mode " << mode_name(mode) << "\n";
  if (!ablation.empty()) os << "ablation " << ablation << "\n";
  os << "views " << views.size() << " accepted " << accepted << " rejected " << rejected
     << " skipped " << skipped << "\n";
  for (const auto& v : views) {
    os << "view id=" << v.view_id << " order=" << v.order << " outcome=";
    switch (v.outcome) {
      case ViewOutcome::Kind::Accepted: os << "accepted"; break;
      case ViewOutcome::Kind::Rejected: os << "rejected"; break;
      case ViewOutcome::Kind::Skipped: os << "skipped"; break;
    }
    os << " retries=" << v.retries << " weights=";
    for (size_t i = 0; i < v.weight_trajectory.size(); ++i)
      os << (i ? "," : "") << fmt(v.weight_trajectory[i]);
    if (v.weight_trajectory.empty()) os << "-";
    os << " l2d=" << fmt(v.final_l2d.total) << " i2i=" << fmt(v.final_l2d.i2i)
       << " i2t=" << fmt(v.final_l2d.i2t) << " b2b=" << fmt(v.final_l2d.b2b)
       << " color=" << fmt(v.final_l2d.color) << " chamfer=" << fmt(v.final_l2d.chamfer) << "\n";
  }
  return os.str();
}

FusionResult fuse(const PointCloud& cloud, const VictimObject& victim,
                  const std::vector<CameraView>& views, const EncoderContract& encoder,
                  const PrototypeSet& protos, const FusionConfig& config,
                  const TargetExemplar* exemplar, ViewOptimizer optimizer) {
  if (views.empty()) throw ContractError("fuse: no views");
  if (!optimizer) optimizer = optimize_view;

  AttackSetup setup = make_attack_setup(cloud, victim, encoder, protos, config.mode,
                                        exemplar ? exemplar->label : "", exemplar);
  setup.whole_image_i2i = config.whole_image_i2i;

  FusionResult result;
  FusionReport& report = result.report;
  report.mode = config.mode;

  // Freeze per-view state. Scores come from the alignment masks when the view
  // participated in alignment.
  std::vector<ViewContext> contexts;
  contexts.reserve(views.size());
  for (const auto& view : views) {
    ViewContext ctx = make_view_context(cloud, view, victim, encoder, config.splat_radius);
    if (const VictimObject::PerView* pv = victim.view(view.id))
      ctx.victim_mask.score = pv->mask.score;
    contexts.push_back(std::move(ctx));
  }

  std::vector<size_t> active;  // indices into contexts, victim visible
  for (size_t i = 0; i < contexts.size(); ++i) {
    if (contexts[i].victim_visible() && contexts[i].victim_mask.pixel_count > 0) {
      active.push_back(i);
    } else {
      ViewOutcome skip;
      skip.view_id = contexts[i].rendered.view_id;
      skip.outcome = ViewOutcome::Kind::Skipped;
      report.views.push_back(skip);
    }
  }
  if (active.empty())
    throw FusionError("fuse: victim visible in no view", report.to_text());

  // Importance weights and processing order.
  std::vector<ObjectMask> masks;
  for (size_t i : active) masks.push_back(contexts[i].victim_mask);
  std::vector<int> order;  // view ids
  FusionState& state = result.state;
  if (config.uniform_weights) {
    for (size_t i : active) {
      state.weights[contexts[i].rendered.view_id] = 1.0 / double(active.size());
      order.push_back(contexts[i].rendered.view_id);
    }
  } else {
    for (const ViewWeight& w : importance_weights(masks)) {
      state.weights[w.view_id] = w.normalized;
      order.push_back(w.view_id);
    }
  }

  auto context_of = [&](int view_id) -> ViewContext& {
    for (size_t i : active)
      if (contexts[i].rendered.view_id == view_id) return contexts[i];
    throw ContractError("fuse: unknown view id");
  };
  auto renormalize = [&] {
    double sum = 0.0;
    for (const auto& [id, w] : state.weights) sum += w;
    for (auto& [id, w] : state.weights) w /= sum;
  };

  int iters = config.iters_per_view > 0
                  ? config.iters_per_view
                  : std::max(1, config.total_iters / int(active.size()));

  state.delta = Perturbation::zeros(cloud.size(), config.epsilon);
  int prev_view = -1;  // last accepted view id
  int order_pos = 0;

  for (int view_id : order) {
    ViewContext& ctx = context_of(view_id);
    ViewOutcome outcome;
    outcome.view_id = view_id;
    outcome.order = order_pos++;

    const Perturbation snapshot = state.delta;
    double eps_work = config.epsilon;
    bool accepted = false;

    for (int attempt = 0;; ++attempt) {
      ctx.weight = state.weights[view_id];
      if (attempt == 0 || outcome.weight_trajectory.empty() ||
          outcome.weight_trajectory.back() != ctx.weight)
        outcome.weight_trajectory.push_back(ctx.weight);

      Perturbation candidate = snapshot;
      OptimizeConfig ocfg;
      ocfg.iters = iters;
      ocfg.adam = config.adam;
      ocfg.alpha = config.alpha;
      ocfg.beta = config.beta;
      ocfg.eps_bound = eps_work;
      ocfg.enable_l2d = config.enable_l2d;
      ocfg.enable_l3d = config.enable_l3d;
      OptimizeResult opt = optimizer(candidate, setup, ctx, ocfg);

      if (opt.skipped) {
        outcome.outcome = ViewOutcome::Kind::Skipped;
        break;
      }

      bool consistency_failed = false, fusion_failed = false;
      if (prev_view >= 0 && !config.disable_checks) {
        const ViewContext& pctx = context_of(prev_view);
        Image rerendered = render_perturbation(candidate.rgb, pctx.rendered);
        if (!consistency_check(state.accepted_views.at(prev_view), rerendered, config.mu1)) {
          consistency_failed = true;
        } else {
          double l2d_now = evaluate_view_losses(candidate, setup, pctx, config.alpha, config.beta,
                                                config.enable_l2d, config.enable_l3d)
                               .total;
          if (!fusion_check(state.accepted_l2d.at(prev_view), l2d_now, config.mu2))
            fusion_failed = true;
        }
      }

      if (!consistency_failed && !fusion_failed) {
        state.delta = candidate;
        state.accepted_views[view_id] = render_perturbation(state.delta.rgb, ctx.rendered);
        state.accepted_l2d[view_id] =
            opt.trace.empty() ? evaluate_view_losses(state.delta, setup, ctx, config.alpha,
                                                     config.beta, config.enable_l2d,
                                                     config.enable_l3d)
                                    .total
                              : opt.trace.back().total;
        outcome.outcome = ViewOutcome::Kind::Accepted;
        outcome.retries = attempt;
        outcome.final_l2d = opt.trace.empty() ? LossBreakdown{} : opt.trace.back();
        outcome.trace = std::move(opt.trace);
        prev_view = view_id;
        accepted = true;
        break;
      }

      if (attempt == config.max_retries) {
        outcome.outcome = ViewOutcome::Kind::Rejected;
        outcome.retries = attempt;
        if (!opt.trace.empty()) outcome.final_l2d = opt.trace.back();
        break;
      }

      if (consistency_failed) {
        state.weights[view_id] *= config.weight_halving;
        renormalize();
      } else {
        eps_work *= config.bound_reduction;
      }
    }

    state.retry_counts[view_id] = outcome.retries;
    if (outcome.outcome == ViewOutcome::Kind::Rejected) state.rejected_views.push_back(view_id);
    report.views.push_back(std::move(outcome));
    // On rejection state.delta was never assigned, so the global perturbation
    // is bit-identical to the pre-view snapshot.
  }

  bool any_accepted = false;
  for (const auto& v : report.views)
    if (v.outcome == ViewOutcome::Kind::Accepted) any_accepted = true;
  if (!any_accepted) throw FusionError("fuse: every view was rejected", report.to_text());

  result.delta = state.delta;
  return result;
}

}  // namespace advof
