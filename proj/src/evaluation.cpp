#include "advof/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace advof {

DefenseKind defense_from_name(const std::string& name) {
  if (name == "shear") return DefenseKind::Shear;
  if (name == "scale") return DefenseKind::Scale;
  if (name == "gaussian-noise") return DefenseKind::GaussianNoise;
  if (name == "brightness-up") return DefenseKind::BrightnessUp;
  if (name == "brightness-down") return DefenseKind::BrightnessDown;
  throw ContractError("unknown defense kind: " + name);
}

const char* defense_name(DefenseKind kind) {
  switch (kind) {
    case DefenseKind::Shear: return "shear";
    case DefenseKind::Scale: return "scale";
    case DefenseKind::GaussianNoise: return "gaussian-noise";
    case DefenseKind::BrightnessUp: return "brightness-up";
    case DefenseKind::BrightnessDown: return "brightness-down";
  }
  return "?";
}

std::array<double, 6> defense_affine(const DefenseTransform& t, int width, int height) {
  double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
  switch (t.kind) {
    case DefenseKind::Shear: {
      Rng rng(t.seed);
      double angle = rng.uniform(t.shear_min_deg, t.shear_max_deg) * M_PI / 180.0;
      double k = std::tan(angle);
      // forward: x' = cx + (x-cx) + k*(y-cy); inverse maps dst back to src
      return {1.0, -k, k * cy, 0.0, 1.0, 0.0};
    }
    case DefenseKind::Scale: {
      double inv = 1.0 / t.scale;
      return {inv, 0.0, cx * (1.0 - inv), 0.0, inv, cy * (1.0 - inv)};
    }
    default:
      return {1.0, 0.0, 0.0, 0.0, 1.0, 0.0};
  }
}

namespace {

double bilinear(const Image& img, double sx, double sy, int ch) {
  // Edge replication.
  sx = std::min(std::max(sx, 0.0), double(img.w - 1));
  sy = std::min(std::max(sy, 0.0), double(img.h - 1));
  int x0 = int(std::floor(sx)), y0 = int(std::floor(sy));
  int x1 = std::min(x0 + 1, img.w - 1), y1 = std::min(y0 + 1, img.h - 1);
  double fx = sx - x0, fy = sy - y0;
  double top = (1.0 - fx) * img.at(y0, x0, ch) + fx * img.at(y0, x1, ch);
  double bot = (1.0 - fx) * img.at(y1, x0, ch) + fx * img.at(y1, x1, ch);
  return (1.0 - fy) * top + fy * bot;
}

bool is_geometric(DefenseKind k) { return k == DefenseKind::Shear || k == DefenseKind::Scale; }

}  // namespace

Image apply_defense(const Image& image, const DefenseTransform& t) {
  for (double x : image.v)
    if (!(x >= 0.0 && x <= 1.0)) throw ContractError("apply_defense: image outside [0,1]");

  Image out(image.h, image.w, image.c);
  switch (t.kind) {
    case DefenseKind::Shear:
    case DefenseKind::Scale: {
      auto m = defense_affine(t, image.w, image.h);
      for (int y = 0; y < image.h; ++y)
        for (int x = 0; x < image.w; ++x) {
          double sx = m[0] * x + m[1] * y + m[2];
          double sy = m[3] * x + m[4] * y + m[5];
          for (int ch = 0; ch < image.c; ++ch)
            out.at(y, x, ch) = clamp01(bilinear(image, sx, sy, ch));
        }
      return out;
    }
    case DefenseKind::GaussianNoise: {
      Rng rng(t.seed);
      for (size_t i = 0; i < image.v.size(); ++i)
        out.v[i] = clamp01(image.v[i] + t.sigma * rng.normal());
      return out;
    }
    case DefenseKind::BrightnessUp:
      for (size_t i = 0; i < image.v.size(); ++i) out.v[i] = clamp01(image.v[i] * t.brightness_up);
      return out;
    case DefenseKind::BrightnessDown:
      for (size_t i = 0; i < image.v.size(); ++i)
        out.v[i] = clamp01(image.v[i] * t.brightness_down);
      return out;
  }
  throw ContractError("apply_defense: unknown defense kind");
}

ObjectMask transform_mask(const ObjectMask& mask, const DefenseTransform& t) {
  if (!is_geometric(t.kind)) return mask;
  auto m = defense_affine(t, mask.w, mask.h);
  ObjectMask out(mask.h, mask.w);
  out.object_id = mask.object_id;
  out.view_id = mask.view_id;
  out.score = mask.score;
  for (int y = 0; y < mask.h; ++y)
    for (int x = 0; x < mask.w; ++x) {
      int sx = int(std::lround(m[0] * x + m[1] * y + m[2]));
      int sy = int(std::lround(m[3] * x + m[4] * y + m[5]));
      if (sx >= 0 && sx < mask.w && sy >= 0 && sy < mask.h) out.set(y, x, mask.at(sy, sx));
    }
  out.recount();
  return out;
}

namespace {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

}  // namespace

std::string AttackReport::to_text() const {
  std::ostringstream os;
  os << "attack-report v1\n";
  if (!ablation.empty()) os << "ablation " << ablation << "\n";
  os << "included_views " << included_views << "\n";
  os << "excluded_views " << excluded_views << "\n";
  os << "benign_acc " << fmt(benign_acc) << "\n";
  os << "attacked_acc " << fmt(attacked_acc) << "\n";
  os << "untargeted_asr " << fmt(untargeted_asr) << "\n";
  if (targeted) os << "targeted_asr " << fmt(targeted_asr) << "\n";
  os << "mean_abs_background_delta " << fmt(mean_abs_background_delta) << "\n";
  for (const auto& [id, delta] : background_delta)
    os << "background_delta id=" << id << " " << fmt(delta) << "\n";
  for (const auto& [name, asr] : defense_asr) os << "defense_asr " << name << " " << fmt(asr) << "\n";
  for (const auto& [name, asr] : defense_targeted_asr)
    os << "defense_targeted_asr " << name << " " << fmt(asr) << "\n";
  return os.str();
}

std::string AttackReport::to_csv() const {
  std::ostringstream os;
  os << "view_id,defense,included,benign_label,benign_conf,attacked_label,attacked_conf\n";
  for (const auto& r : records)
    os << r.view_id << ',' << r.defense << ',' << (r.included ? 1 : 0) << ',' << r.benign_label
       << ',' << fmt(r.benign_conf) << ',' << r.attacked_label << ',' << fmt(r.attacked_conf)
       << "\n";
  return os.str();
}

AttackReport evaluate_attack(const PointCloud& cloud, const Perturbation& delta,
                             const VictimObject& victim, const std::vector<CameraView>& heldout,
                             const EncoderContract& encoder, const LabelRegistry& registry,
                             const PrototypeSet& protos, Mode mode, const TargetExemplar* exemplar,
                             const EvalOptions& options) {
  if (mode == Mode::Targeted && !exemplar)
    throw ContractError("evaluate_attack: targeted mode requires an exemplar");

  AttackReport report;
  report.targeted = mode == Mode::Targeted;
  const std::string& victim_label = victim.label;
  const std::string target_label = exemplar ? exemplar->label : "";

  // Objects overlapping the victim point set are not background.
  std::set<int> victim_ids;
  for (int i : victim.point_indices) victim_ids.insert(cloud.object_ids[size_t(i)]);

  struct BgStat {
    int views = 0, benign_ok = 0, attacked_ok = 0;
  };
  std::map<int, BgStat> bg;

  int benign_ok = 0, attacked_victim = 0, attacked_target = 0;
  std::map<std::string, int> defense_escapes, defense_hits, defense_views;

  for (const auto& view : heldout) {
    RenderedView rendered = rasterize(cloud, view, options.splat_radius);
    ObjectMask vmask = mask_from_points(rendered, victim.point_indices);
    if (vmask.pixel_count == 0) {
      ViewRecord rec;
      rec.view_id = view.id;
      rec.included = false;
      report.records.push_back(rec);
      report.excluded_views++;
      continue;
    }
    report.included_views++;

    FeatureMap benign_fmap = encoder.encode_image(rendered.color);
    Image adv_image = clamped_add(rendered.color, render_perturbation(delta.rgb, rendered));
    FeatureMap adv_fmap = encoder.encode_image(adv_image);

    Classification cb = classify_object(benign_fmap, vmask, protos);
    Classification ca = classify_object(adv_fmap, vmask, protos);
    ViewRecord rec;
    rec.view_id = view.id;
    rec.benign_label = cb.label;
    rec.benign_conf = cb.confidence;
    rec.attacked_label = ca.label;
    rec.attacked_conf = ca.confidence;
    report.records.push_back(rec);

    if (cb.label == victim_label) ++benign_ok;
    if (ca.label == victim_label) ++attacked_victim;
    if (report.targeted && ca.label == target_label) ++attacked_target;

    for (const auto& [id, label] : registry.entries) {
      if (victim_ids.count(id)) continue;
      ObjectMask omask = mask_from_points(rendered, cloud.points_of(id), id);
      if (omask.pixel_count == 0) continue;
      BgStat& stat = bg[id];
      stat.views++;
      if (classify_object(benign_fmap, omask, protos).label == label) stat.benign_ok++;
      if (classify_object(adv_fmap, omask, protos).label == label) stat.attacked_ok++;
    }

    for (const auto& base : options.defenses) {
      DefenseTransform t = base;
      t.seed = sub_seed(base.seed, uint64_t(view.id));
      Image defended = apply_defense(adv_image, t);
      ObjectMask dmask = transform_mask(vmask, t);
      ViewRecord drec;
      drec.view_id = view.id;
      drec.defense = defense_name(t.kind);
      drec.benign_label = cb.label;
      drec.benign_conf = cb.confidence;
      if (dmask.pixel_count > 0) {
        Classification cd = classify_object(encoder.encode_image(defended), dmask, protos);
        drec.attacked_label = cd.label;
        drec.attacked_conf = cd.confidence;
        defense_views[drec.defense]++;
        if (cd.label != victim_label) defense_escapes[drec.defense]++;
        if (report.targeted && cd.label == target_label) defense_hits[drec.defense]++;
      } else {
        drec.included = false;
      }
      report.records.push_back(drec);
    }
  }

  if (report.included_views == 0)
    throw DomainError("evaluate_attack: victim invisible in every held-out view");

  double n = double(report.included_views);
  report.benign_acc = benign_ok / n;
  report.attacked_acc = attacked_victim / n;
  report.untargeted_asr = 1.0 - report.attacked_acc;
  if (report.targeted) report.targeted_asr = attacked_target / n;

  double delta_sum = 0.0;
  for (const auto& [id, stat] : bg) {
    if (stat.views == 0) continue;
    double d = (stat.attacked_ok - stat.benign_ok) / double(stat.views);
    report.background_delta[id] = d;
    delta_sum += std::abs(d);
  }
  if (!report.background_delta.empty())
    report.mean_abs_background_delta = delta_sum / double(report.background_delta.size());

  for (const auto& [name, views] : defense_views) {
    report.defense_asr[name] = defense_escapes[name] / double(views);
    if (report.targeted) report.defense_targeted_asr[name] = defense_hits[name] / double(views);
  }
  return report;
}

LocalizationResult localization_success(const PointCloud& cloud, const Perturbation& delta,
                                        const VictimObject& victim,
                                        const std::vector<CameraView>& views,
                                        const EncoderContract& encoder, const PrototypeSet& protos,
                                        double threshold, double cell_size, int splat_radius) {
  if (!(cell_size <= threshold / 2.0))
    throw ContractError("localization_success: cell size must be <= threshold/2");

  LocalizationResult result;
  SemanticMap benign = build_semantic_map(cloud, views, encoder, cell_size, splat_radius);
  SemanticMap attacked =
      build_semantic_map(cloud, views, encoder, cell_size, splat_radius, &delta.rgb);

  auto sr_of = [&](const SemanticMap& map, bool& no_cell) -> double {
    try {
      auto [row, col] = localize(map, victim.label, protos);
      Vec3 center = map.cell_center(row, col);
      double dx = center.x() - victim.centroid.x();
      double dy = center.y() - victim.centroid.y();
      return std::sqrt(dx * dx + dy * dy) <= threshold ? 1.0 : 0.0;
    } catch (const NotFoundError&) {
      no_cell = true;
      return 0.0;
    }
  };
  result.benign_sr = sr_of(benign, result.benign_no_cell);
  result.attacked_sr = sr_of(attacked, result.attacked_no_cell);
  return result;
}

}  // namespace advof
