#include <algorithm>

#include "odp/error.hpp"
#include "odp/eval.hpp"

namespace odp {

namespace {

// Highest IoU of `p` against `gts`, optionally skipping one class. Zero when
// no ground truth is eligible.
double best_iou(const Prediction& p, std::span<const Annotation> gts, std::optional<int> skip_label = {}) {
  double best = 0.0;
  for (const auto& g : gts) {
    if (skip_label && g.label == *skip_label) continue;
    best = std::max(best, iou(p.box, g.box));
  }
  return best;
}

bool detected(const Annotation& g, std::span<const Prediction> preds, double tau) {
  return std::any_of(preds.begin(), preds.end(), [&](const Prediction& p) { return iou(p.box, g.box) >= tau; });
}

}  // namespace

bool attack_succeeded(GoalKind kind, std::optional<int> target, std::span<const Prediction> preds,
                      std::span<const Annotation> gts, double tau) {
  if (needs_target(kind) && !target) {
    throw ValidationError("goal " + std::string(goal_name(kind)) + " requires a target label");
  }
  switch (kind) {
    case GoalKind::TMA:
      // Ground truth already of the target class cannot count as attacked.
      return std::any_of(preds.begin(), preds.end(), [&](const Prediction& p) {
        return p.label == *target && best_iou(p, gts, target) >= tau;
      });
    case GoalKind::UMA:
      return std::any_of(preds.begin(), preds.end(), [&](const Prediction& p) {
        double best = -1.0;
        const Annotation* match = nullptr;
        for (const auto& g : gts) {
          const double v = iou(p.box, g.box);
          if (v > best) {
            best = v;
            match = &g;
          }
        }
        return match && best >= tau && p.label != match->label;
      });
    case GoalKind::TDA:
      return std::none_of(gts.begin(), gts.end(),
                          [&](const Annotation& g) { return g.label == *target && detected(g, preds, tau); });
    case GoalKind::UDA:
      return std::none_of(gts.begin(), gts.end(), [&](const Annotation& g) { return detected(g, preds, tau); });
    case GoalKind::TGA:
      return std::any_of(preds.begin(), preds.end(),
                         [&](const Prediction& p) { return p.label == *target && best_iou(p, gts) < tau; });
    case GoalKind::UGA:
      return std::any_of(preds.begin(), preds.end(), [&](const Prediction& p) { return best_iou(p, gts) < tau; });
  }
  return false;
}

namespace {

// Successful and eligible ground-truth objects of one image.
std::pair<int, int> object_level(GoalKind kind, std::optional<int> target, std::span<const Prediction> preds,
                                 std::span<const Annotation> gts, double tau) {
  int hits = 0;
  int eligible = 0;
  for (const auto& g : gts) {
    switch (kind) {
      case GoalKind::TMA:
        if (g.label == *target) continue;
        ++eligible;
        hits += std::any_of(preds.begin(), preds.end(), [&](const Prediction& p) {
          return p.label == *target && iou(p.box, g.box) >= tau;
        });
        break;
      case GoalKind::UMA:
        ++eligible;
        hits += std::any_of(preds.begin(), preds.end(), [&](const Prediction& p) {
          return p.label != g.label && iou(p.box, g.box) >= tau;
        });
        break;
      case GoalKind::TDA:
        if (g.label != *target) continue;
        ++eligible;
        hits += !detected(g, preds, tau);
        break;
      case GoalKind::UDA:
        ++eligible;
        hits += !detected(g, preds, tau);
        break;
      default:
        throw ValidationError("object-level ASR is not defined for generation goals");
    }
  }
  return {hits, eligible};
}

}  // namespace

double asr(const AttackGoal& goal, const ImagePredictions& preds, const Dataset& d, double tau, AsrMode mode) {
  if (needs_target(goal.kind) && !goal.target_label) {
    throw ValidationError("goal " + std::string(goal_name(goal.kind)) + " requires target_label");
  }
  if (d.images.empty()) throw ValidationError("ASR needs a non-empty evaluation set");
  if (!(tau > 0.0 && tau < 1.0)) throw ValidationError("IoU threshold must lie in (0,1)");
  validate_against(preds, d);

  static const std::vector<Prediction> kNone;
  std::size_t hits = 0;
  std::size_t total = 0;
  for (const auto& rec : d.images) {
    auto it = preds.find(rec.id);
    const auto& dets = it == preds.end() ? kNone : it->second;
    if (mode == AsrMode::Image) {
      hits += attack_succeeded(goal.kind, goal.target_label, dets, rec.annotations, tau);
      ++total;
    } else {
      const auto [h, e] = object_level(goal.kind, goal.target_label, dets, rec.annotations, tau);
      hits += static_cast<std::size_t>(h);
      total += static_cast<std::size_t>(e);
    }
  }
  if (total == 0) throw ValidationError("no ground-truth objects are eligible for object-level ASR");
  return 100.0 * static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace odp
