#include <algorithm>
#include <cmath>
#include <numeric>

#include "odp/error.hpp"
#include "odp/rng.hpp"
#include "odp/trigger.hpp"

namespace odp {

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

void validate_sampling(const SamplingSpec& spec, int width, int height) {
  if (width <= 0 || height <= 0) throw ValidationError("image size must be positive");
  if (spec.scale_low < 1 || spec.scale_low > spec.scale_high) {
    throw ValidationError("scale bounds must satisfy 0 < low <= high, got [" +
                          std::to_string(spec.scale_low) + ", " + std::to_string(spec.scale_high) + "]");
  }
  if (spec.u_low < 0 || spec.u_low >= spec.u_high || spec.u_high >= width) {
    throw ValidationError("horizontal location bounds must satisfy 0 <= low < high < " +
                          std::to_string(width) + ", got [" + std::to_string(spec.u_low) + ", " +
                          std::to_string(spec.u_high) + ")");
  }
  if (spec.v_low < 0 || spec.v_low >= spec.v_high || spec.v_high >= height) {
    throw ValidationError("vertical location bounds must satisfy 0 <= low < high < " +
                          std::to_string(height) + ", got [" + std::to_string(spec.v_low) + ", " +
                          std::to_string(spec.v_high) + ")");
  }
}

PixelSize trigger_size_for(const FovView& view, int side, bool preserve_aspect) {
  const int vw = view.rgba.width;
  const int vh = view.rgba.height;
  if (!preserve_aspect || vw == vh) return {side, side};
  if (vw > vh) {
    const int h = std::max(1, static_cast<int>(std::lround(static_cast<double>(side) * vh / vw)));
    return {side, h};
  }
  const int w = std::max(1, static_cast<int>(std::lround(static_cast<double>(side) * vw / vh)));
  return {w, side};
}

namespace {

// Upper bound (exclusive) that keeps a trigger of `extent` inside `limit`,
// unless the requested range cannot fit at all.
int fitted_high(int low, int high, int extent, int limit) {
  const int fit = std::min(high, limit - extent + 1);
  return fit > low ? fit : low + 1;
}

}  // namespace

TriggerPlacement sample_placement(Rng& rng, const TriggerBank& bank, const SamplingSpec& spec,
                                  int width, int height, std::optional<int> fixed_view) {
  validate_sampling(spec, width, height);
  TriggerPlacement pl;
  pl.view = fixed_view ? *fixed_view : static_cast<int>(rng.categorical(bank.weights));
  const auto& view = bank.view(pl.view);
  const auto side = static_cast<int>(rng.uniform_int(spec.scale_low, spec.scale_high + 1));
  pl.s = trigger_size_for(view, side, spec.preserve_aspect);
  pl.p.x = static_cast<int>(rng.uniform_int(spec.u_low, fitted_high(spec.u_low, spec.u_high, pl.s.w, width)));
  pl.p.y = static_cast<int>(rng.uniform_int(spec.v_low, fitted_high(spec.v_low, spec.v_high, pl.s.h, height)));
  return pl;
}

Mask make_mask(const TriggerPlacement& pl, int width, int height) {
  Mask m{width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, 0)};
  const int x0 = std::max(pl.p.x, 0);
  const int y0 = std::max(pl.p.y, 0);
  const int x1 = std::min(pl.p.x + pl.s.w, width);
  const int y1 = std::min(pl.p.y + pl.s.h, height);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m.bits[static_cast<std::size_t>(y) * width + x] = 1;
  return m;
}

Mask make_mask(const PlacedTrigger& t, int width, int height, MaskMode mode) {
  Mask m = make_mask(t.placement, width, height);
  if (mode == MaskMode::Rectangle) return m;
  const auto& p = t.placement.p;
  for (int y = std::max(p.y, 0); y < std::min(p.y + t.pixels.height, height); ++y) {
    for (int x = std::max(p.x, 0); x < std::min(p.x + t.pixels.width, width); ++x) {
      if (t.pixels.at(x - p.x, y - p.y, 3) < 0.5f) m.bits[static_cast<std::size_t>(y) * width + x] = 0;
    }
  }
  return m;
}

PlacedTrigger transform_trigger(const TriggerBank& bank, const TriggerPlacement& pl) {
  const auto& view = bank.view(pl.view);
  if (pl.s.w <= 0 || pl.s.h <= 0) throw ValidationError("trigger scale must be positive");
  PlacedTrigger t{pl, resize_bilinear(view.rgba, pl.s.w, pl.s.h)};
  for (int y = 0; y < t.pixels.height; ++y)
    for (int x = 0; x < t.pixels.width; ++x) {
      float& a = t.pixels.at(x, y, 3);
      a = a >= 0.5f ? 1.0f : 0.0f;
    }
  return t;
}

}  // namespace odp
