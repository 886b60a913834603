#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "odp/dataset.hpp"
#include "odp/image.hpp"
#include "odp/trigger.hpp"

namespace odp {

class Rng;

// Targeted/untargeted misclassification, disappearance and generation.
enum class GoalKind { TMA, TDA, TGA, UMA, UDA, UGA };

std::string_view goal_name(GoalKind kind);
// Case-insensitive; accepts only the six canonical abbreviations.
GoalKind parse_goal(std::string_view name);
bool needs_target(GoalKind kind);
bool is_generation(GoalKind kind);

struct AttackGoal {
  GoalKind kind = GoalKind::TMA;
  std::optional<int> target_label;
  // Generation goals: boxes added per poisoned image, each equal to the
  // trigger region shifted by up to +-jitter pixels per axis.
  int hallucinations = 1;
  int jitter = 0;
};

void validate_goal(const AttackGoal& goal, int num_classes);

enum class InsertionKind { Rep, Sup, Blend };

struct Insertion {
  InsertionKind kind = InsertionKind::Rep;
  double coefficient = presets::kSupCoefficientLow;  // Sup
  double mix = presets::kBlendedMix;                 // Blend
};

std::string_view insertion_name(InsertionKind kind);
InsertionKind parse_insertion(std::string_view name);

// PerImage draws a view for every poisoned image; PerRun draws one view
// for the whole run.
enum class FovSampling { PerImage, PerRun };

struct PoisonSpec {
  AttackGoal goal;
  double rho = 0.1;
  SamplingSpec sampling;
  Insertion insertion;
  std::shared_ptr<const TriggerBank> bank;
  std::uint64_t seed = 0;
  int resolution = 640;  // square output side; 0 keeps the source size
  MaskMode mask = MaskMode::Silhouette;
  FovSampling fov_sampling = FovSampling::PerImage;
  unsigned jobs = 0;
};

void validate_spec(const PoisonSpec& spec, int num_classes);

struct ManifestEntry {
  std::string image_id;
  TriggerPlacement placement;
  GoalKind goal = GoalKind::TMA;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct PoisonedDataset {
  Dataset clean;
  Dataset poisoned;
  std::vector<ManifestEntry> manifest;  // sorted by image id

  // Clean and poisoned records in the source dataset's order.
  Dataset combined(const Dataset& source) const;
};

// round-half-up of rho * n.
std::size_t poison_count(double rho, std::size_t n);

// Uniformly random partition into (clean, backdoor); both keep source order.
std::pair<Dataset, Dataset> split_dataset(const Dataset& d, double rho, Rng& rng);

// Target label function. `width`/`height` bound the hallucinated boxes.
std::vector<Annotation> relabel(std::span<const Annotation> annotations, const AttackGoal& goal,
                                int num_classes, const TriggerPlacement& placement, int width,
                                int height, Rng& rng);

// Loads the record's image as RGB and resizes it to `resolution`; the
// returned record carries the rescaled annotations and size.
std::pair<ImageRecord, Image> prepare_image(const ImageRecord& rec, int resolution);

struct PoisonedImage {
  ImageRecord record;
  ManifestEntry manifest;
  Image pixels;
};

PoisonedImage poison_image(const ImageRecord& rec, const PoisonSpec& spec, int num_classes, Rng& rng,
                           std::optional<int> fixed_view = std::nullopt);

// Same as above for an already prepared (resized) image.
PoisonedImage poison_prepared(ImageRecord rec, Image pixels, const PoisonSpec& spec, int num_classes,
                              Rng& rng, std::optional<int> fixed_view = std::nullopt);

// Receives every output image (clean and poisoned) with its final record.
// Called concurrently from worker threads.
using ImageSink = std::function<void(const ImageRecord&, const Image&)>;

// Output records are named `images/<id>.png` at the spec resolution.
// Per-image failures are collected and reported together.
PoisonedDataset poison_dataset(const Dataset& d, const PoisonSpec& spec, const ImageSink& sink = {});

// Writes annotations.json (clean and poisoned images), manifest.json and
// images/ under out_dir. Output is staged and only moved into place when
// every image succeeded.
PoisonedDataset write_poisoned_dataset(const Dataset& d, const PoisonSpec& spec,
                                       const std::filesystem::path& out_dir);

std::string output_file_name(const std::string& image_id);

std::string dump_manifest(const std::vector<ManifestEntry>& manifest);
std::vector<ManifestEntry> parse_manifest(const std::string& json_text, const std::string& source = "<memory>");
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);

}  // namespace odp
