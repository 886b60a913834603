#include "odp/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>

#include <jpeglib.h>
#include <png.h>

#include "odp/error.hpp"

namespace odp {

Image::Image(int w, int h, int c, float fill)
    : width(w), height(h), channels(c),
      data(static_cast<std::size_t>(w) * h * c, fill) {}

std::uint8_t quantize(float v) {
  const double clamped = std::clamp(static_cast<double>(v), 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(clamped * 255.0 + 0.5));
}

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool has_png_signature(const std::vector<std::uint8_t>& bytes) {
  static constexpr std::array<std::uint8_t, 8> sig{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  return bytes.size() >= sig.size() && std::equal(sig.begin(), sig.end(), bytes.begin());
}

bool has_jpeg_signature(const std::vector<std::uint8_t>& bytes) {
  return bytes.size() >= 3 && bytes[0] == 0xff && bytes[1] == 0xd8 && bytes[2] == 0xff;
}

Image decode_png(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    throw IoError("PNG decode failed for '" + path.string() + "': " + png.message);
  }
  const bool alpha = (png.format & PNG_FORMAT_FLAG_ALPHA) != 0;
  png.format = alpha ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB;
  const int channels = alpha ? 4 : 3;
  std::vector<std::uint8_t> raw(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, raw.data(), 0, nullptr)) {
    png_image_free(&png);
    throw IoError("PNG decode failed for '" + path.string() + "': " + png.message);
  }
  Image img(static_cast<int>(png.width), static_cast<int>(png.height), channels);
  std::transform(raw.begin(), raw.end(), img.data.begin(),
                 [](std::uint8_t q) { return static_cast<float>(q) / 255.0f; });
  return img;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

Image decode_jpeg(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  std::vector<std::uint8_t> raw;
  int width = 0;
  int height = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw IoError("JPEG decode failed for '" + path.string() + "': " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  width = static_cast<int>(cinfo.output_width);
  height = static_cast<int>(cinfo.output_height);
  raw.resize(static_cast<std::size_t>(width) * height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = raw.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);

  Image img(width, height, 3);
  std::transform(raw.begin(), raw.end(), img.data.begin(),
                 [](std::uint8_t q) { return static_cast<float>(q) / 255.0f; });
  return img;
}

std::string describe_format(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  return ext.empty() ? std::string("unknown") : ext.substr(1);
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  if (has_png_signature(bytes)) return decode_png(bytes, path);
  if (has_jpeg_signature(bytes)) return decode_jpeg(bytes, path);
  throw IoError("unsupported image format '" + describe_format(path) + "' for '" +
                path.string() + "' (expected PNG or JPEG)");
}

std::vector<std::uint8_t> encode_png(const Image& img) {
  if (img.width <= 0 || img.height <= 0) throw ValidationError("cannot encode an empty image");
  png_uint_32 format = 0;
  switch (img.channels) {
    case 1: format = PNG_FORMAT_GRAY; break;
    case 3: format = PNG_FORMAT_RGB; break;
    case 4: format = PNG_FORMAT_RGBA; break;
    default:
      throw ValidationError("cannot encode image with " + std::to_string(img.channels) +
                            " channels");
  }
  std::vector<std::uint8_t> raw(img.data.size());
  std::transform(img.data.begin(), img.data.end(), raw.begin(), quantize);

  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, raw.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode failed: ") + png.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, raw.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode failed: ") + png.message);
  }
  out.resize(size);
  return out;
}

void save_image(const Image& img, const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext != ".png") {
    throw IoError("unsupported output image format '" + describe_format(path) + "' for '" +
                  path.string() + "' (only PNG is written)");
  }
  const auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write image '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

Image resize_bilinear(const Image& src, int width, int height) {
  if (width <= 0 || height <= 0) throw ValidationError("resize target must be positive");
  if (src.empty()) throw ValidationError("cannot resize an empty image");
  if (width == src.width && height == src.height) return src;

  struct Tap {
    int lo;
    int hi;
    double frac;
  };
  auto taps = [](int dst, int srcn) {
    std::vector<Tap> out(static_cast<std::size_t>(dst));
    const double scale = static_cast<double>(srcn) / dst;
    for (int i = 0; i < dst; ++i) {
      double s = (i + 0.5) * scale - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(srcn - 1));
      const int lo = static_cast<int>(std::floor(s));
      out[i] = {lo, std::min(lo + 1, srcn - 1), s - lo};
    }
    return out;
  };
  const auto xs = taps(width, src.width);
  const auto ys = taps(height, src.height);

  Image dst(width, height, src.channels);
  for (int y = 0; y < height; ++y) {
    const auto& ty = ys[y];
    for (int x = 0; x < width; ++x) {
      const auto& tx = xs[x];
      for (int c = 0; c < src.channels; ++c) {
        const double top = src.at(tx.lo, ty.lo, c) * (1.0 - tx.frac) + src.at(tx.hi, ty.lo, c) * tx.frac;
        const double bot = src.at(tx.lo, ty.hi, c) * (1.0 - tx.frac) + src.at(tx.hi, ty.hi, c) * tx.frac;
        dst.at(x, y, c) = static_cast<float>(top * (1.0 - ty.frac) + bot * ty.frac);
      }
    }
  }
  return dst;
}

Image take_channels(const Image& src, int channels) {
  if (channels > src.channels) {
    throw ValidationError("image has " + std::to_string(src.channels) + " channels, need " +
                          std::to_string(channels));
  }
  if (channels == src.channels) return src;
  Image out(src.width, src.height, channels);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < channels; ++c) out.at(x, y, c) = src.at(x, y, c);
  return out;
}

}  // namespace odp
