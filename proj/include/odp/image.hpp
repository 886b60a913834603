#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace odp {

/// Interleaved H x W x C pixel buffer. Channel values are reals; decoded
/// images and insertion outputs live in [0,1], pattern deltas may be signed.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, int c, float fill = 0.0f);

  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  float& at(int x, int y, int c) { return data[index(x, y, c)]; }
  float at(int x, int y, int c) const { return data[index(x, y, c)]; }

  bool empty() const { return data.empty(); }

  friend bool operator==(const Image&, const Image&) = default;
};

// Decodes PNG or JPEG into channel values in [0,1]. PNGs with an alpha channel
// decode to 4 channels, everything else to 3.
Image load_image(const std::filesystem::path& path);

// Writes an 8-bit PNG. Values are clamped to [0,1] and rounded to the nearest
// of 256 levels. Supports 1 (gray), 3 (RGB) and 4 (RGBA) channels.
void save_image(const Image& img, const std::filesystem::path& path);

// Encodes to an in-memory PNG; byte-identical to what save_image writes.
std::vector<std::uint8_t> encode_png(const Image& img);

std::uint8_t quantize(float v);

// Bilinear resize with half-pixel centers. A resize to the source size
// returns the source unchanged.
Image resize_bilinear(const Image& src, int width, int height);

// First `channels` channels of src (e.g. RGBA -> RGB).
Image take_channels(const Image& src, int channels);

}  // namespace odp
