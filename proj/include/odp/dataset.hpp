#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace odp {

class Rng;

// Axis-aligned box in pixels: top-left corner (u, v), width w, height h.
struct Box {
  double u = 0.0;
  double v = 0.0;
  double w = 0.0;
  double h = 0.0;

  double x2() const { return u + w; }
  double y2() const { return v + h; }
  double area() const { return w * h; }

  friend bool operator==(const Box&, const Box&) = default;
};

struct Annotation {
  Box box;
  int label = 0;  // dense class index in [0, num_classes)
  std::optional<std::int64_t> instance_id;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

struct ImageRecord {
  std::string id;
  std::string file_name;          // as written in the annotation file
  std::filesystem::path path;     // resolved location on disk
  int width = 0;
  int height = 0;
  std::vector<Annotation> annotations;
};

// COCO category ids are sparse; label i corresponds to categories[i].
struct Category {
  std::int64_t id = 0;
  std::string name;

  friend bool operator==(const Category&, const Category&) = default;
};

struct Dataset {
  std::vector<ImageRecord> images;
  std::vector<Category> categories;

  int num_classes() const { return static_cast<int>(categories.size()); }
  const ImageRecord* find(const std::string& image_id) const;
};

// Reads a COCO-style annotation file. Image paths resolve against
// `image_root`, which defaults to the directory holding the JSON file.
Dataset load_dataset(const std::filesystem::path& json_path,
                     const std::optional<std::filesystem::path>& image_root = std::nullopt);

// Parses COCO JSON text. `source` only labels error messages.
Dataset parse_dataset(const std::string& json_text, const std::filesystem::path& image_root,
                      const std::string& source = "<memory>");

// Writes `out_dir/annotations.json` and copies every image to
// `out_dir/images/`. Saving the same dataset twice yields identical bytes.
void save_dataset(const Dataset& d, const std::filesystem::path& out_dir);

// Writes only the annotation JSON; file_name fields are emitted verbatim.
void write_annotations(const Dataset& d, const std::filesystem::path& json_path);
std::string dump_annotations(const Dataset& d);

// Throws ValidationError naming the offending image on any broken invariant.
void validate_dataset(const Dataset& d);
void validate_box(const Box& b, int width, int height, const std::string& image_id);

// Same images (by id, order-insensitive), sizes, categories and per-image
// annotation multisets. File locations and instance ids are not compared.
bool structurally_equal(const Dataset& a, const Dataset& b);

// Uniformly random subset of `count` images, kept in dataset order.
Dataset sample_images(const Dataset& d, std::size_t count, Rng& rng);

}  // namespace odp
