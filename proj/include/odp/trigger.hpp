#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "odp/image.hpp"

namespace odp {

class Rng;

struct PixelPoint {
  int x = 0;
  int y = 0;
  friend auto operator<=>(const PixelPoint&, const PixelPoint&) = default;
};

struct PixelSize {
  int w = 0;
  int h = 0;
  friend auto operator<=>(const PixelSize&, const PixelSize&) = default;
};

/// One photographed viewpoint of the trigger object. `rgba` has four
/// channels; alpha is binarized to {0,1} and marks the object silhouette.
struct FovView {
  int id = 0;
  Image rgba;
};

/// Candidate trigger space plus the sampling distribution over it.
struct TriggerBank {
  std::vector<FovView> views;
  std::vector<double> weights;

  const FovView& view(int id) const;
};

// Builds a bank from in-memory RGBA (or RGB) views. Alpha is binarized at 0.5;
// RGB views are treated as fully opaque. Weights default to uniform and must
// be non-negative, match the view count and sum to 1 within 1e-9.
TriggerBank make_trigger_bank(std::vector<Image> views,
                              std::optional<std::vector<double>> weights = std::nullopt);

// Loads `dir/views/*.png` in filename order (falling back to `dir/*.png`)
// and optional `dir/weights.json` (a JSON array, or {"weights": [...]}).
// Explicit `weights` take precedence over the file.
TriggerBank build_trigger_bank(const std::filesystem::path& dir,
                               std::optional<std::vector<double>> weights = std::nullopt);

/// Trigger scale and top-left location bounds in pixels. The side length is
/// drawn uniformly from the integers in [scale_low, scale_high]; the location
/// from [u_low, u_high) x [v_low, v_high), u horizontal and v vertical.
struct SamplingSpec {
  int scale_low = 50;
  int scale_high = 50;
  int u_low = 0;
  int u_high = 1;
  int v_low = 0;
  int v_high = 1;
  // Sampled side applies to the longer side of the view; the other side
  // follows the view's aspect ratio.
  bool preserve_aspect = true;
};

void validate_sampling(const SamplingSpec& spec, int width, int height);

struct TriggerPlacement {
  PixelPoint p;
  PixelSize s;
  int view = 0;
  friend bool operator==(const TriggerPlacement&, const TriggerPlacement&) = default;
};

struct PlacedTrigger {
  TriggerPlacement placement;
  Image pixels;  // RGBA, s.w x s.h
};

enum class MaskMode { Rectangle, Silhouette };

/// Binary H x W mask stored row-major, one byte per pixel.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  std::uint8_t at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;
};

// Draws (view, scale, location). Location is pulled in so the trigger fits
// whenever the bounds allow it; otherwise it is clipped at insertion time.
// When `fixed_view` is set, no view is drawn from the bank distribution.
TriggerPlacement sample_placement(Rng& rng, const TriggerBank& bank, const SamplingSpec& spec,
                                  int width, int height,
                                  std::optional<int> fixed_view = std::nullopt);

// Scale of the placed trigger for a sampled side length.
PixelSize trigger_size_for(const FovView& view, int side, bool preserve_aspect);

// R_ins = [p.x, p.x + s.w) x [p.y, p.y + s.h) clipped to the image.
Mask make_mask(const TriggerPlacement& pl, int width, int height);
// R_ins intersected with the placed trigger's silhouette in Silhouette mode.
Mask make_mask(const PlacedTrigger& t, int width, int height, MaskMode mode);

PlacedTrigger transform_trigger(const TriggerBank& bank, const TriggerPlacement& pl);

// Replacement insertion: masked pixels take the trigger's RGB.
Image insert_rep(const Image& img, const PlacedTrigger& t, MaskMode mode = MaskMode::Silhouette);

// Superimposition: masked pixels become clamp(x + coefficient * t, 0, 1).
Image insert_sup(const Image& img, const PlacedTrigger& t, double coefficient,
                 MaskMode mode = MaskMode::Silhouette);

// Whole-image convex blend x * (1 - m) + t * m. `trigger` must match the
// image size; only its first `img.channels` channels are used.
Image insert_blend(const Image& img, const Image& trigger, double m);

namespace presets {
inline constexpr double kSupCoefficientLow = 2.0;
inline constexpr double kSupCoefficientHigh = 8.0;
inline constexpr double kBlendedMix = 0.5;
inline constexpr int kDefaultTriggerSize = 50;
}  // namespace presets

// Signed vertical-stripe delta: amplitude * sin(2 pi f x / W), identical down
// every column and across channels.
Image make_sig_pattern(int height, int width, double amplitude, double frequency, int channels = 3);

// clamp(img + delta, 0, 1); delta must match the image shape.
Image superimpose(const Image& img, const Image& delta);

}  // namespace odp
