#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

#include "odp/dataset.hpp"
#include "odp/image.hpp"

#ifndef ODP_TEST_DATA_DIR
#error "ODP_TEST_DATA_DIR must point at tests/data"
#endif

namespace fixture {

namespace fs = std::filesystem;

inline fs::path data_dir() { return fs::path(ODP_TEST_DATA_DIR); }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "odp") {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

// Relative path -> file bytes for every regular file below `root`.
inline std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = read_file(e.path());
  return out;
}

inline odp::Image noise_image(int w, int h, int c, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_int_distribution<int> level(0, 255);
  odp::Image img(w, h, c);
  for (auto& v : img.data) v = static_cast<float>(level(gen)) / 255.0f;
  return img;
}

// Writes `n` noise PNGs of w x h with 0-4 random boxes over `classes`
// categories (sparse ids) and returns the path of the annotation file.
inline fs::path write_synthetic_dataset(const fs::path& dir, int n, int w, int h, int classes, unsigned seed) {
  std::mt19937 gen(seed);
  odp::Dataset d;
  for (int c = 0; c < classes; ++c) d.categories.push_back({2 * c + 1, "class" + std::to_string(c)});
  fs::create_directories(dir / "images");
  for (int i = 0; i < n; ++i) {
    odp::ImageRecord rec;
    rec.id = std::to_string(100 + i);
    rec.file_name = "images/" + rec.id + ".png";
    rec.path = dir / rec.file_name;
    rec.width = w;
    rec.height = h;
    const int boxes = std::uniform_int_distribution<int>(0, 4)(gen);
    for (int b = 0; b < boxes; ++b) {
      const int bw = std::uniform_int_distribution<int>(2, w / 2)(gen);
      const int bh = std::uniform_int_distribution<int>(2, h / 2)(gen);
      const int u = std::uniform_int_distribution<int>(0, w - bw)(gen);
      const int v = std::uniform_int_distribution<int>(0, h - bh)(gen);
      rec.annotations.push_back(
          {{double(u), double(v), double(bw), double(bh)}, std::uniform_int_distribution<int>(0, classes - 1)(gen), {}});
    }
    odp::save_image(noise_image(w, h, 3, seed * 1000 + static_cast<unsigned>(i)), rec.path);
    d.images.push_back(std::move(rec));
  }
  odp::write_annotations(d, dir / "annotations.json");
  return dir / "annotations.json";
}

}  // namespace fixture
