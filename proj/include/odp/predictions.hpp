#pragma once

#include <compare>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "odp/dataset.hpp"

namespace odp {

// Trigger activation location: top-left pixel of the trigger at inference.
struct TalPosition {
  int u = 0;
  int v = 0;

  friend auto operator<=>(const TalPosition&, const TalPosition&) = default;
};

struct Prediction {
  Box box;
  int label = 0;
  double score = 0.0;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

// Detector output for one evaluation pass: image id -> detections.
using ImagePredictions = std::map<std::string, std::vector<Prediction>>;

struct PredictionKey {
  std::string image_id;
  std::optional<TalPosition> tal;

  friend bool operator<(const PredictionKey& a, const PredictionKey& b) {
    if (a.tal != b.tal) return a.tal < b.tal;
    return a.image_id < b.image_id;
  }
  friend bool operator==(const PredictionKey&, const PredictionKey&) = default;
};

// Every (image id, TAL tag) record of a predictions file.
class PredictionSet {
 public:
  // Throws ValidationError on a duplicate (image, TAL) record or a bad detection.
  void add(PredictionKey key, std::vector<Prediction> detections);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::map<PredictionKey, std::vector<Prediction>>& entries() const { return entries_; }

  // Distinct TAL tags in ascending order (untagged first).
  std::vector<std::optional<TalPosition>> tals() const;
  ImagePredictions for_tal(const std::optional<TalPosition>& tal) const;
  std::map<std::optional<TalPosition>, ImagePredictions> by_tal() const;

  void merge(const PredictionSet& other);

 private:
  std::map<PredictionKey, std::vector<Prediction>> entries_;
};

// Newline-delimited JSON, one object per line:
//   {"image_id": str, "tal": [u,v] | null, "detections": [{"bbox":[u,v,w,h], "label": int, "score": float}]}
PredictionSet load_predictions(const std::filesystem::path& path);
PredictionSet parse_predictions(std::istream& in, const std::string& source = "<stream>");

void save_predictions(const PredictionSet& set, const std::filesystem::path& path);
std::string dump_predictions(const PredictionSet& set);

void validate_prediction(const Prediction& p, const std::string& context);

// Every image id must exist in `d` and every label must index its categories.
void validate_against(const ImagePredictions& preds, const Dataset& d);

}  // namespace odp
