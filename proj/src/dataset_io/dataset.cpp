#include "odp/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "odp/error.hpp"
#include "odp/rng.hpp"

namespace odp {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

const ImageRecord* Dataset::find(const std::string& image_id) const {
  auto it = std::find_if(images.begin(), images.end(),
                         [&](const ImageRecord& r) { return r.id == image_id; });
  return it == images.end() ? nullptr : &*it;
}

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// COCO ids are integers; string ids are tolerated and kept verbatim.
std::string id_to_string(const json& v, const std::string& what) {
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_string()) return v.get<std::string>();
  throw ValidationError(what + " must be an integer or string");
}

bool is_canonical_integer(const std::string& s) {
  if (s.empty()) return false;
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  return ec == std::errc() && ptr == s.data() + s.size() && std::to_string(value) == s;
}

ordered_json id_to_json(const std::string& id) {
  if (is_canonical_integer(id)) return std::stoll(id);
  return id;
}

const json& require(const json& obj, const char* key, const std::string& ctx) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(ctx + ": missing field '" + key + "'");
  return *it;
}

double as_number(const json& v, const std::string& ctx) {
  if (!v.is_number()) throw ValidationError(ctx + " must be a number");
  return v.get<double>();
}

}  // namespace

void validate_box(const Box& b, int width, int height, const std::string& image_id) {
  std::ostringstream box;
  box << "(" << b.u << "," << b.v << "," << b.w << "," << b.h << ")";
  if (!(b.w > 0.0) || !(b.h > 0.0)) {
    throw ValidationError("image '" + image_id + "': box " + box.str() + " has non-positive size");
  }
  if (!(b.u >= 0.0) || !(b.v >= 0.0) || b.x2() > width || b.y2() > height) {
    throw ValidationError("image '" + image_id + "': box " + box.str() + " lies outside the " +
                          std::to_string(width) + "x" + std::to_string(height) + " image");
  }
}

void validate_dataset(const Dataset& d) {
  std::unordered_set<std::string> ids;
  for (const auto& rec : d.images) {
    if (!ids.insert(rec.id).second) throw ValidationError("duplicate image id '" + rec.id + "'");
    if (rec.width <= 0 || rec.height <= 0) {
      throw ValidationError("image '" + rec.id + "' has non-positive size");
    }
    for (const auto& a : rec.annotations) {
      validate_box(a.box, rec.width, rec.height, rec.id);
      if (a.label < 0 || a.label >= d.num_classes()) {
        throw ValidationError("image '" + rec.id + "': label " + std::to_string(a.label) +
                              " outside [0," + std::to_string(d.num_classes()) + ")");
      }
    }
  }
}

Dataset parse_dataset(const std::string& json_text, const std::filesystem::path& image_root,
                      const std::string& source) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(source + ": malformed JSON at byte " + std::to_string(e.byte) + ": " + e.what(),
                     e.byte);
  }
  if (!root.is_object()) throw ValidationError(source + ": top level must be an object");
  const auto& images = require(root, "images", source);
  const auto& annotations = require(root, "annotations", source);
  const auto& categories = require(root, "categories", source);
  if (!images.is_array() || !annotations.is_array() || !categories.is_array()) {
    throw ValidationError(source + ": images, annotations and categories must be arrays");
  }

  Dataset d;
  // Labels follow ascending COCO category id.
  std::map<std::int64_t, std::string> cats;
  for (const auto& c : categories) {
    const auto& id = require(c, "id", "category");
    if (!id.is_number_integer()) throw ValidationError("category id must be an integer");
    std::string name;
    if (auto it = c.find("name"); it != c.end() && it->is_string()) name = it->get<std::string>();
    if (!cats.emplace(id.get<std::int64_t>(), name).second) {
      throw ValidationError("duplicate category id " + std::to_string(id.get<std::int64_t>()));
    }
  }
  std::unordered_map<std::int64_t, int> label_of;
  for (const auto& [id, name] : cats) {
    label_of[id] = static_cast<int>(d.categories.size());
    d.categories.push_back({id, name});
  }

  std::unordered_map<std::string, std::size_t> index_of;
  d.images.reserve(images.size());
  for (const auto& im : images) {
    ImageRecord rec;
    rec.id = id_to_string(require(im, "id", "image"), "image id");
    const std::string ctx = "image '" + rec.id + "'";
    const auto& fname = require(im, "file_name", ctx);
    if (!fname.is_string()) throw ValidationError(ctx + ": file_name must be a string");
    rec.file_name = fname.get<std::string>();
    rec.path = image_root / rec.file_name;
    const auto& w = require(im, "width", ctx);
    const auto& h = require(im, "height", ctx);
    if (!w.is_number_integer() || !h.is_number_integer()) {
      throw ValidationError(ctx + ": width/height must be integers");
    }
    rec.width = w.get<int>();
    rec.height = h.get<int>();
    if (!index_of.emplace(rec.id, d.images.size()).second) {
      throw ValidationError("duplicate image id '" + rec.id + "'");
    }
    d.images.push_back(std::move(rec));
  }

  for (const auto& an : annotations) {
    const auto image_id = id_to_string(require(an, "image_id", "annotation"), "annotation image_id");
    auto it = index_of.find(image_id);
    if (it == index_of.end()) {
      throw ValidationError("annotation references unknown image '" + image_id + "'");
    }
    auto& rec = d.images[it->second];
    const std::string ctx = "image '" + image_id + "'";
    const auto& cat = require(an, "category_id", ctx);
    if (!cat.is_number_integer()) throw ValidationError(ctx + ": category_id must be an integer");
    auto lab = label_of.find(cat.get<std::int64_t>());
    if (lab == label_of.end()) {
      throw ValidationError(ctx + ": unknown category id " + std::to_string(cat.get<std::int64_t>()));
    }
    const auto& bbox = require(an, "bbox", ctx);
    if (!bbox.is_array() || bbox.size() != 4) throw ValidationError(ctx + ": bbox must have 4 numbers");
    Annotation a;
    a.box = {as_number(bbox[0], ctx + " bbox"), as_number(bbox[1], ctx + " bbox"),
             as_number(bbox[2], ctx + " bbox"), as_number(bbox[3], ctx + " bbox")};
    a.label = lab->second;
    if (auto id = an.find("id"); id != an.end() && id->is_number_integer()) {
      a.instance_id = id->get<std::int64_t>();
    }
    validate_box(a.box, rec.width, rec.height, rec.id);
    rec.annotations.push_back(a);
  }
  return d;
}

Dataset load_dataset(const std::filesystem::path& json_path,
                     const std::optional<std::filesystem::path>& image_root) {
  const auto root = image_root ? *image_root : json_path.parent_path();
  return parse_dataset(read_text(json_path), root, json_path.string());
}

std::string dump_annotations(const Dataset& d) {
  ordered_json images = ordered_json::array();
  ordered_json annotations = ordered_json::array();
  ordered_json categories = ordered_json::array();

  std::int64_t next_ann_id = 1;
  for (const auto& rec : d.images)
    for (const auto& a : rec.annotations)
      if (a.instance_id) next_ann_id = std::max(next_ann_id, *a.instance_id + 1);

  for (const auto& rec : d.images) {
    ordered_json im;
    im["id"] = id_to_json(rec.id);
    im["file_name"] = rec.file_name;
    im["width"] = rec.width;
    im["height"] = rec.height;
    images.push_back(std::move(im));
    for (const auto& a : rec.annotations) {
      if (a.label < 0 || a.label >= d.num_classes()) {
        throw ValidationError("image '" + rec.id + "': label " + std::to_string(a.label) +
                              " has no category");
      }
      ordered_json an;
      an["id"] = a.instance_id ? *a.instance_id : next_ann_id++;
      an["image_id"] = id_to_json(rec.id);
      an["category_id"] = d.categories[static_cast<std::size_t>(a.label)].id;
      an["bbox"] = {a.box.u, a.box.v, a.box.w, a.box.h};
      an["area"] = a.box.area();
      an["iscrowd"] = 0;
      annotations.push_back(std::move(an));
    }
  }
  for (const auto& c : d.categories) {
    ordered_json cat;
    cat["id"] = c.id;
    cat["name"] = c.name;
    categories.push_back(std::move(cat));
  }
  ordered_json root;
  root["images"] = std::move(images);
  root["annotations"] = std::move(annotations);
  root["categories"] = std::move(categories);
  return root.dump(1) + "\n";
}

void write_annotations(const Dataset& d, const std::filesystem::path& json_path) {
  const auto text = dump_annotations(d);
  std::ofstream out(json_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + json_path.string() + "'");
  out << text;
  if (!out) throw IoError("short write to '" + json_path.string() + "'");
}

void save_dataset(const Dataset& d, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create '" + (out_dir / "images").string() + "': " + ec.message());

  Dataset emitted = d;
  std::set<std::string> names;
  for (auto& rec : emitted.images) {
    const auto name = fs::path(rec.file_name).filename().string();
    if (!names.insert(name).second) {
      throw ValidationError("two images would be written as 'images/" + name + "'");
    }
    const auto dest = out_dir / "images" / name;
    if (!fs::exists(rec.path)) throw IoError("image '" + rec.id + "': missing file '" + rec.path.string() + "'");
    if (!fs::exists(dest) || !fs::equivalent(rec.path, dest)) {
      fs::copy_file(rec.path, dest, fs::copy_options::overwrite_existing, ec);
      if (ec) {
        throw IoError("cannot copy '" + rec.path.string() + "' to '" + dest.string() + "': " + ec.message());
      }
    }
    rec.file_name = "images/" + name;
    rec.path = dest;
  }
  write_annotations(emitted, out_dir / "annotations.json");
}

bool structurally_equal(const Dataset& a, const Dataset& b) {
  if (a.categories != b.categories || a.images.size() != b.images.size()) return false;
  using Key = std::tuple<double, double, double, double, int>;
  auto multiset = [](const ImageRecord& r) {
    std::vector<Key> keys;
    for (const auto& an : r.annotations) keys.emplace_back(an.box.u, an.box.v, an.box.w, an.box.h, an.label);
    std::sort(keys.begin(), keys.end());
    return keys;
  };
  for (const auto& ra : a.images) {
    const auto* rb = b.find(ra.id);
    if (!rb || rb->width != ra.width || rb->height != ra.height) return false;
    if (multiset(ra) != multiset(*rb)) return false;
  }
  return true;
}

Dataset sample_images(const Dataset& d, std::size_t count, Rng& rng) {
  if (count >= d.images.size()) return d;
  std::vector<std::size_t> idx(d.images.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i),
                                                             static_cast<std::int64_t>(idx.size())));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  Dataset out;
  out.categories = d.categories;
  for (auto i : idx) out.images.push_back(d.images[i]);
  return out;
}

}  // namespace odp
