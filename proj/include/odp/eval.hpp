#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "odp/dataset.hpp"
#include "odp/poison.hpp"
#include "odp/predictions.hpp"
#include "odp/trigger.hpp"

namespace odp {

// Intersection over union of two boxes with positive area; symmetric, in [0,1].
double iou(const Box& a, const Box& b);

/// A single IoU threshold or an inclusive range averaged over its steps,
/// both held in whole percent ("50", "75", "50:95" with step 5).
struct IouThreshold {
  int low = 50;
  int high = 50;
  int step = 5;

  static IouThreshold single(int percent);
  static IouThreshold range(int low, int high, int step = 5);
  // Accepts "50", "0.5", "50:95" or "50:95:5".
  static IouThreshold parse(std::string_view text);

  bool is_range() const { return low != high; }
  std::vector<double> values() const;
  std::string label() const;
};

// mAP@50, mAP@75 and mAP@50:95.
std::vector<IouThreshold> default_map_thresholds();

struct MatchedPrediction {
  std::size_t index = 0;  // position in the input span
  int label = 0;
  double score = 0.0;
  bool tp = false;
};

struct MatchResult {
  std::vector<MatchedPrediction> predictions;  // descending score, ties in input order
  std::map<int, int> gt_count;                 // per class
  std::map<int, int> fn_count;                 // per class

  int true_positives() const;
  int false_positives() const;
  int false_negatives() const;
};

// Greedy per-class matching: each prediction, by descending score, takes the
// unmatched same-class ground truth of highest IoU (ties -> lower index) if
// that IoU reaches tau; otherwise it is a false positive.
MatchResult match_detections(std::span<const Prediction> preds, std::span<const Annotation> gts, double tau);

/// Detections of one class pooled across images.
struct ClassRecords {
  std::vector<double> scores;
  std::vector<bool> tp;
  int num_gt = 0;
};

// 101-point interpolated AP in [0,100]; nullopt when the class has no ground truth.
std::optional<double> average_precision(const ClassRecords& records);

struct MapEntry {
  std::string threshold;
  std::optional<double> map;                      // nullopt when no class has ground truth
  std::vector<std::optional<double>> per_class;   // indexed by label
};

struct EvalCounts {
  std::size_t images = 0;
  std::size_t ground_truth = 0;
  std::size_t predictions = 0;
};

struct EvalReport {
  std::vector<MapEntry> map;
  std::optional<double> asr;
  std::optional<std::string> asr_goal;
  std::optional<double> tre;
  EvalCounts counts;
};

EvalReport mean_ap(const ImagePredictions& preds, const Dataset& d,
                   const std::vector<IouThreshold>& thresholds = default_map_thresholds());

// Canonical ASR counts successful images. Object mode counts ground-truth
// objects instead and is only defined for misclassification and
// disappearance goals; it is provided for comparison only.
enum class AsrMode { Image, Object };

inline constexpr double kDefaultAsrIou = 0.5;

// Image-level success predicate for one goal against the clean ground truth.
bool attack_succeeded(GoalKind kind, std::optional<int> target, std::span<const Prediction> preds,
                      std::span<const Annotation> gts, double tau);

// 100 * successful / evaluated over every image of `d`; images without a
// predictions record count as having no detections.
double asr(const AttackGoal& goal, const ImagePredictions& preds, const Dataset& d,
           double tau = kDefaultAsrIou, AsrMode mode = AsrMode::Image);

struct Region {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
};

struct TalGridSpec {
  int width = 640;
  int height = 640;
  PixelSize trigger{50, 50};
  int stride = 50;
  std::optional<PixelPoint> origin;  // defaults to the region's top-left corner
  std::optional<Region> region;      // defaults to the whole image
};

struct TalGrid {
  int rows = 0;
  int cols = 0;
  std::vector<TalPosition> positions;  // row-major
};

// Positions from the origin in steps of `stride` along each axis such that
// the whole trigger stays inside the region.
TalGrid tal_grid(const TalGridSpec& spec);

struct TreGrid {
  int rows = 0;
  int cols = 0;
  int stride = 0;
  PixelPoint origin;
  PixelSize trigger;
  std::vector<TalPosition> positions;
  std::vector<double> asr;  // row-major, aligned with positions
  double tre = 0.0;
};

// Per-TAL ASR over the grid and their arithmetic mean. Every grid position
// must have predictions and no others may be present.
TreGrid tre_scan(const std::map<TalPosition, ImagePredictions>& per_tal, const Dataset& d,
                 const AttackGoal& goal, double tau, const TalGridSpec& spec, unsigned jobs = 0);

// Row-major CSV of per-TAL ASR values, one grid row per line.
std::string heatmap_csv(const TreGrid& grid);
// Grayscale image, ASR 0 -> black, 100 -> white, `cell` pixels per TAL.
Image heatmap_image(const TreGrid& grid, int cell = 8);

// Writes `<prefix>.csv` and `<prefix>.png`.
void render_heatmap(const TreGrid& grid, const std::filesystem::path& prefix, int cell = 8);

std::string dump_report(const EvalReport& report);

}  // namespace odp
