#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <string>

#include "odp/error.hpp"
#include "odp/poison.hpp"
#include "odp/rng.hpp"

namespace odp {

namespace {

constexpr std::array<std::pair<GoalKind, std::string_view>, 6> kGoalNames{{
    {GoalKind::TMA, "TMA"},
    {GoalKind::TDA, "TDA"},
    {GoalKind::TGA, "TGA"},
    {GoalKind::UMA, "UMA"},
    {GoalKind::UDA, "UDA"},
    {GoalKind::UGA, "UGA"},
}};

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::toupper(c); });
  return out;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace

std::string_view goal_name(GoalKind kind) {
  for (const auto& [k, name] : kGoalNames)
    if (k == kind) return name;
  return "?";
}

GoalKind parse_goal(std::string_view name) {
  const auto key = upper(name);
  for (const auto& [k, n] : kGoalNames)
    if (n == key) return k;
  throw ValidationError("unknown attack goal '" + std::string(name) +
                        "' (expected one of TMA, TDA, TGA, UMA, UDA, UGA)");
}

bool needs_target(GoalKind kind) {
  return kind == GoalKind::TMA || kind == GoalKind::TDA || kind == GoalKind::TGA;
}

bool is_generation(GoalKind kind) { return kind == GoalKind::TGA || kind == GoalKind::UGA; }

void validate_goal(const AttackGoal& goal, int num_classes) {
  if (needs_target(goal.kind)) {
    if (!goal.target_label) {
      throw ValidationError("goal " + std::string(goal_name(goal.kind)) + " requires target_label");
    }
    if (*goal.target_label < 0 || *goal.target_label >= num_classes) {
      throw ValidationError("target_label " + std::to_string(*goal.target_label) + " outside [0," +
                            std::to_string(num_classes) + ")");
    }
  }
  if (num_classes <= 0 && (goal.kind == GoalKind::UMA || goal.kind == GoalKind::UGA)) {
    throw ValidationError("goal " + std::string(goal_name(goal.kind)) + " needs at least one category");
  }
  if (goal.hallucinations < 1) throw ValidationError("hallucination count must be at least 1");
  if (goal.jitter < 0) throw ValidationError("jitter must be non-negative");
}

std::string_view insertion_name(InsertionKind kind) {
  switch (kind) {
    case InsertionKind::Rep: return "rep";
    case InsertionKind::Sup: return "sup";
    case InsertionKind::Blend: return "blend";
  }
  return "?";
}

InsertionKind parse_insertion(std::string_view name) {
  const auto key = lower(name);
  if (key == "rep") return InsertionKind::Rep;
  if (key == "sup") return InsertionKind::Sup;
  if (key == "blend") return InsertionKind::Blend;
  throw ValidationError("unknown insertion '" + std::string(name) + "' (expected rep, sup or blend)");
}

namespace {

Box hallucinated_box(const TriggerPlacement& pl, int width, int height, int jitter, Rng& rng) {
  int x = pl.p.x;
  int y = pl.p.y;
  if (jitter > 0) {
    x += static_cast<int>(rng.uniform_int(-jitter, jitter + 1));
    y += static_cast<int>(rng.uniform_int(-jitter, jitter + 1));
  }
  x = std::clamp(x, 0, width - 1);
  y = std::clamp(y, 0, height - 1);
  const int x2 = std::min(x + pl.s.w, width);
  const int y2 = std::min(y + pl.s.h, height);
  return {static_cast<double>(x), static_cast<double>(y), static_cast<double>(x2 - x),
          static_cast<double>(y2 - y)};
}

}  // namespace

std::vector<Annotation> relabel(std::span<const Annotation> annotations, const AttackGoal& goal,
                                int num_classes, const TriggerPlacement& placement, int width,
                                int height, Rng& rng) {
  validate_goal(goal, num_classes);
  for (const auto& a : annotations) {
    if (a.label < 0 || a.label >= num_classes) {
      throw ValidationError("label " + std::to_string(a.label) + " outside [0," +
                            std::to_string(num_classes) + ")");
    }
  }

  std::vector<Annotation> out;
  switch (goal.kind) {
    case GoalKind::TMA:
      out.assign(annotations.begin(), annotations.end());
      for (auto& a : out) a.label = *goal.target_label;
      break;
    case GoalKind::UMA:
      out.assign(annotations.begin(), annotations.end());
      for (auto& a : out) a.label = (a.label + 1) % num_classes;
      break;
    case GoalKind::TDA:
      std::copy_if(annotations.begin(), annotations.end(), std::back_inserter(out),
                   [&](const Annotation& a) { return a.label != *goal.target_label; });
      break;
    case GoalKind::UDA:
      break;
    case GoalKind::TGA:
    case GoalKind::UGA:
      out.assign(annotations.begin(), annotations.end());
      for (int i = 0; i < goal.hallucinations; ++i) {
        Annotation a;
        a.box = hallucinated_box(placement, width, height, goal.jitter, rng);
        a.label = goal.kind == GoalKind::TGA ? *goal.target_label
                                             : static_cast<int>(rng.uniform_int(0, num_classes));
        out.push_back(a);
      }
      break;
  }
  return out;
}

}  // namespace odp
