#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "odp/error.hpp"
#include "odp/eval.hpp"

namespace odp {

double iou(const Box& a, const Box& b) {
  if (!(a.w > 0.0 && a.h > 0.0) || !(b.w > 0.0 && b.h > 0.0)) {
    throw ValidationError("IoU is undefined for a zero-area box");
  }
  const double iw = std::min(a.x2(), b.x2()) - std::max(a.u, b.u);
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.v, b.v);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

IouThreshold IouThreshold::single(int percent) {
  if (percent <= 0 || percent >= 100) throw ValidationError("IoU threshold must lie in (0,1)");
  return {percent, percent, 5};
}

IouThreshold IouThreshold::range(int low, int high, int step) {
  if (low <= 0 || high >= 100 || low > high) throw ValidationError("IoU range must satisfy 0 < low <= high < 1");
  if (step <= 0) throw ValidationError("IoU range step must be positive");
  return {low, high, step};
}

namespace {

// "50" or "0.5" -> 50.
int parse_percent(std::string_view text) {
  const std::string s(text);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ValidationError("bad IoU threshold '" + s + "'");
  }
  if (v > 0.0 && v < 1.0) v *= 100.0;
  const double r = std::round(v);
  if (std::abs(r - v) > 1e-9) throw ValidationError("IoU threshold '" + s + "' must be a whole percent");
  return static_cast<int>(r);
}

}  // namespace

IouThreshold IouThreshold::parse(std::string_view text) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto colon = text.find(':', start);
    parts.push_back(text.substr(start, colon - start));
    if (colon == std::string_view::npos) break;
    start = colon + 1;
  }
  if (parts.size() == 1) return single(parse_percent(parts[0]));
  if (parts.size() == 2) return range(parse_percent(parts[0]), parse_percent(parts[1]));
  if (parts.size() == 3) {
    return range(parse_percent(parts[0]), parse_percent(parts[1]), parse_percent(parts[2]));
  }
  throw ValidationError("bad IoU threshold '" + std::string(text) + "'");
}

std::vector<double> IouThreshold::values() const {
  std::vector<double> out;
  for (int p = low; p <= high; p += step) out.push_back(p / 100.0);
  return out;
}

std::string IouThreshold::label() const {
  if (!is_range()) return std::to_string(low);
  std::string s = std::to_string(low) + ":" + std::to_string(high);
  if (step != 5) s += ":" + std::to_string(step);
  return s;
}

std::vector<IouThreshold> default_map_thresholds() {
  return {IouThreshold::single(50), IouThreshold::single(75), IouThreshold::range(50, 95)};
}

int MatchResult::true_positives() const {
  return static_cast<int>(std::count_if(predictions.begin(), predictions.end(),
                                        [](const MatchedPrediction& p) { return p.tp; }));
}

int MatchResult::false_positives() const {
  return static_cast<int>(predictions.size()) - true_positives();
}

int MatchResult::false_negatives() const {
  int n = 0;
  for (const auto& [_, c] : fn_count) n += c;
  return n;
}

MatchResult match_detections(std::span<const Prediction> preds, std::span<const Annotation> gts, double tau) {
  MatchResult result;
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });

  std::vector<bool> taken(gts.size(), false);
  for (const auto& g : gts) result.gt_count[g.label] += 1;

  for (std::size_t idx : order) {
    const auto& p = preds[idx];
    double best = -1.0;
    std::size_t best_gt = gts.size();
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (taken[j] || gts[j].label != p.label) continue;
      const double v = iou(p.box, gts[j].box);
      if (v > best) {
        best = v;
        best_gt = j;
      }
    }
    const bool tp = best_gt < gts.size() && best >= tau;
    if (tp) taken[best_gt] = true;
    result.predictions.push_back({idx, p.label, p.score, tp});
  }
  for (std::size_t j = 0; j < gts.size(); ++j)
    if (!taken[j]) result.fn_count[gts[j].label] += 1;
  return result;
}

std::optional<double> average_precision(const ClassRecords& records) {
  if (records.num_gt <= 0) return std::nullopt;
  const std::size_t n = records.scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return records.scores[a] > records.scores[b]; });

  std::vector<double> recall(n);
  std::vector<double> precision(n);
  double tp = 0.0;
  double fp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    (records.tp[order[i]] ? tp : fp) += 1.0;
    recall[i] = tp / records.num_gt;
    precision[i] = tp / (tp + fp);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);

  double sum = 0.0;
  for (int r = 0; r <= 100; ++r) {
    const double level = r / 100.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), level);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return 100.0 * sum / 101.0;
}

namespace {

std::vector<std::optional<double>> per_class_ap(const ImagePredictions& preds, const Dataset& d, double tau) {
  const int k = d.num_classes();
  std::vector<ClassRecords> classes(static_cast<std::size_t>(k));
  static const std::vector<Prediction> kNone;
  for (const auto& rec : d.images) {
    auto it = preds.find(rec.id);
    const auto& dets = it == preds.end() ? kNone : it->second;
    const auto m = match_detections(dets, rec.annotations, tau);
    for (const auto& [label, count] : m.gt_count) classes[static_cast<std::size_t>(label)].num_gt += count;
    for (const auto& p : m.predictions) {
      auto& c = classes[static_cast<std::size_t>(p.label)];
      c.scores.push_back(p.score);
      c.tp.push_back(p.tp);
    }
  }
  std::vector<std::optional<double>> out;
  out.reserve(classes.size());
  for (const auto& c : classes) out.push_back(average_precision(c));
  return out;
}

std::optional<double> mean_defined(const std::vector<std::optional<double>>& values) {
  double sum = 0.0;
  int n = 0;
  for (const auto& v : values) {
    if (!v) continue;
    sum += *v;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

}  // namespace

EvalReport mean_ap(const ImagePredictions& preds, const Dataset& d, const std::vector<IouThreshold>& thresholds) {
  validate_against(preds, d);
  EvalReport report;
  report.counts.images = d.images.size();
  for (const auto& rec : d.images) report.counts.ground_truth += rec.annotations.size();
  for (const auto& [_, dets] : preds) report.counts.predictions += dets.size();

  std::unordered_map<int, std::vector<std::optional<double>>> cache;
  auto at_percent = [&](int pct) -> const std::vector<std::optional<double>>& {
    auto it = cache.find(pct);
    if (it == cache.end()) it = cache.emplace(pct, per_class_ap(preds, d, pct / 100.0)).first;
    return it->second;
  };

  for (const auto& th : thresholds) {
    MapEntry entry;
    entry.threshold = th.label();
    const auto k = static_cast<std::size_t>(d.num_classes());
    std::vector<double> sum(k, 0.0);
    std::vector<bool> defined(k, false);
    int steps = 0;
    for (int pct = th.low; pct <= th.high; pct += th.step) {
      const auto& aps = at_percent(pct);
      for (std::size_t c = 0; c < k; ++c) {
        if (!aps[c]) continue;
        defined[c] = true;
        sum[c] += *aps[c];
      }
      ++steps;
    }
    entry.per_class.resize(k);
    for (std::size_t c = 0; c < k; ++c)
      if (defined[c]) entry.per_class[c] = sum[c] / steps;
    entry.map = mean_defined(entry.per_class);
    report.map.push_back(std::move(entry));
  }
  return report;
}

}  // namespace odp
