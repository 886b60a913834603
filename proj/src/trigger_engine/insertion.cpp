#include <algorithm>
#include <cmath>
#include <numbers>

#include "odp/error.hpp"
#include "odp/trigger.hpp"

namespace odp {

namespace {

void require_color(const Image& img) {
  if (img.channels < 3) {
    throw ValidationError("insertion needs an RGB image, got " + std::to_string(img.channels) + " channels");
  }
}

// Calls fn(x, y, trigger_x, trigger_y) for every masked pixel.
template <typename Fn>
void for_masked(const Image& img, const PlacedTrigger& t, MaskMode mode, Fn&& fn) {
  const Mask mask = make_mask(t, img.width, img.height, mode);
  const auto& p = t.placement.p;
  for (int y = std::max(p.y, 0); y < std::min(p.y + t.pixels.height, img.height); ++y)
    for (int x = std::max(p.x, 0); x < std::min(p.x + t.pixels.width, img.width); ++x)
      if (mask.at(x, y)) fn(x, y, x - p.x, y - p.y);
}

}  // namespace

Image insert_rep(const Image& img, const PlacedTrigger& t, MaskMode mode) {
  require_color(img);
  Image out = img;
  for_masked(img, t, mode, [&](int x, int y, int tx, int ty) {
    for (int c = 0; c < 3; ++c) out.at(x, y, c) = std::clamp(t.pixels.at(tx, ty, c), 0.0f, 1.0f);
  });
  return out;
}

Image insert_sup(const Image& img, const PlacedTrigger& t, double coefficient, MaskMode mode) {
  require_color(img);
  if (!(coefficient >= 0.0) || !std::isfinite(coefficient)) {
    throw ValidationError("superimposition coefficient must be a non-negative number");
  }
  Image out = img;
  for_masked(img, t, mode, [&](int x, int y, int tx, int ty) {
    for (int c = 0; c < 3; ++c) {
      const double v = img.at(x, y, c) + coefficient * t.pixels.at(tx, ty, c);
      out.at(x, y, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  });
  return out;
}

Image insert_blend(const Image& img, const Image& trigger, double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw ValidationError("blend coefficient must lie in [0,1]");
  if (trigger.width != img.width || trigger.height != img.height) {
    throw ValidationError("blend trigger is " + std::to_string(trigger.width) + "x" +
                          std::to_string(trigger.height) + ", image is " + std::to_string(img.width) +
                          "x" + std::to_string(img.height));
  }
  if (trigger.channels < img.channels) {
    throw ValidationError("blend trigger has fewer channels than the image");
  }
  Image out = img;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        const double v = img.at(x, y, c) * (1.0 - m) + trigger.at(x, y, c) * m;
        out.at(x, y, c) = static_cast<float>(v);
      }
  return out;
}

Image make_sig_pattern(int height, int width, double amplitude, double frequency, int channels) {
  if (height <= 0 || width <= 0) throw ValidationError("pattern size must be positive");
  if (!(amplitude > 0.0 && amplitude <= 1.0)) throw ValidationError("amplitude must lie in (0,1]");
  if (!(frequency > 0.0) || !std::isfinite(frequency)) throw ValidationError("frequency must be positive");
  if (channels <= 0) throw ValidationError("channel count must be positive");
  Image out(width, height, channels);
  for (int x = 0; x < width; ++x) {
    const auto v = static_cast<float>(amplitude * std::sin(2.0 * std::numbers::pi * frequency * x / width));
    for (int y = 0; y < height; ++y)
      for (int c = 0; c < channels; ++c) out.at(x, y, c) = v;
  }
  return out;
}

Image superimpose(const Image& img, const Image& delta) {
  if (img.width != delta.width || img.height != delta.height || img.channels != delta.channels) {
    throw ValidationError("delta shape does not match the image");
  }
  Image out = img;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = static_cast<float>(std::clamp(static_cast<double>(img.data[i]) + delta.data[i], 0.0, 1.0));
  }
  return out;
}

}  // namespace odp
