#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "odp/error.hpp"
#include "odp/parallel.hpp"
#include "odp/poison.hpp"
#include "odp/rng.hpp"

namespace odp {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::size_t poison_count(double rho, std::size_t n) {
  if (!(rho > 0.0 && rho <= 1.0)) throw ValidationError("poison ratio must lie in (0,1]");
  const auto k = static_cast<std::size_t>(std::floor(rho * static_cast<double>(n) + 0.5));
  return std::min(k, n);
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& d, double rho, Rng& rng) {
  const std::size_t n = d.images.size();
  const std::size_t k = poison_count(rho, n);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(n)));
    std::swap(idx[i], idx[j]);
  }
  std::vector<bool> selected(n, false);
  for (std::size_t i = 0; i < k; ++i) selected[idx[i]] = true;

  Dataset clean;
  Dataset bd;
  clean.categories = bd.categories = d.categories;
  for (std::size_t i = 0; i < n; ++i) (selected[i] ? bd : clean).images.push_back(d.images[i]);
  return {std::move(clean), std::move(bd)};
}

void validate_spec(const PoisonSpec& spec, int num_classes) {
  validate_goal(spec.goal, num_classes);
  poison_count(spec.rho, 0);
  if (!spec.bank || spec.bank->views.empty()) throw ValidationError("poison spec needs a trigger bank");
  if (spec.resolution < 0) throw ValidationError("resolution must be non-negative");
  if (spec.insertion.kind == InsertionKind::Sup &&
      (!(spec.insertion.coefficient >= 0.0) || !std::isfinite(spec.insertion.coefficient))) {
    throw ValidationError("superimposition coefficient must be a non-negative number");
  }
  if (spec.insertion.kind == InsertionKind::Blend &&
      !(spec.insertion.mix >= 0.0 && spec.insertion.mix <= 1.0)) {
    throw ValidationError("blend coefficient must lie in [0,1]");
  }
  if (spec.resolution > 0 && spec.insertion.kind != InsertionKind::Blend) {
    validate_sampling(spec.sampling, spec.resolution, spec.resolution);
  }
}

std::pair<ImageRecord, Image> prepare_image(const ImageRecord& rec, int resolution) {
  Image img = load_image(rec.path);
  if (img.width != rec.width || img.height != rec.height) {
    throw ValidationError("image '" + rec.id + "': file is " + std::to_string(img.width) + "x" +
                          std::to_string(img.height) + " but the annotation says " +
                          std::to_string(rec.width) + "x" + std::to_string(rec.height));
  }
  img = take_channels(img, 3);
  ImageRecord out = rec;
  if (resolution <= 0 || (resolution == rec.width && resolution == rec.height)) return {out, img};

  img = resize_bilinear(img, resolution, resolution);
  const double sx = static_cast<double>(resolution) / rec.width;
  const double sy = static_cast<double>(resolution) / rec.height;
  const double limit = resolution;
  for (auto& a : out.annotations) {
    Box b{a.box.u * sx, a.box.v * sy, a.box.w * sx, a.box.h * sy};
    b.u = std::min(b.u, limit);
    b.v = std::min(b.v, limit);
    b.w = std::min(b.w, limit - b.u);
    b.h = std::min(b.h, limit - b.v);
    a.box = b;
  }
  out.width = resolution;
  out.height = resolution;
  return {out, img};
}

PoisonedImage poison_prepared(ImageRecord rec, Image pixels, const PoisonSpec& spec, int num_classes,
                              Rng& rng, std::optional<int> fixed_view) {
  const auto& bank = *spec.bank;
  const int width = pixels.width;
  const int height = pixels.height;
  TriggerPlacement pl;

  if (spec.insertion.kind == InsertionKind::Blend) {
    pl.view = fixed_view ? *fixed_view : static_cast<int>(rng.categorical(bank.weights));
    pl.p = {0, 0};
    pl.s = {width, height};
    const Image trigger = resize_bilinear(take_channels(bank.view(pl.view).rgba, 3), width, height);
    pixels = insert_blend(pixels, trigger, spec.insertion.mix);
  } else {
    pl = sample_placement(rng, bank, spec.sampling, width, height, fixed_view);
    const PlacedTrigger t = transform_trigger(bank, pl);
    pixels = spec.insertion.kind == InsertionKind::Rep
                 ? insert_rep(pixels, t, spec.mask)
                 : insert_sup(pixels, t, spec.insertion.coefficient, spec.mask);
  }
  rec.annotations = relabel(rec.annotations, spec.goal, num_classes, pl, width, height, rng);
  ManifestEntry entry{rec.id, pl, spec.goal.kind};
  return {std::move(rec), std::move(entry), std::move(pixels)};
}

PoisonedImage poison_image(const ImageRecord& rec, const PoisonSpec& spec, int num_classes, Rng& rng,
                           std::optional<int> fixed_view) {
  auto [prepared, pixels] = prepare_image(rec, spec.resolution);
  return poison_prepared(std::move(prepared), std::move(pixels), spec, num_classes, rng, fixed_view);
}

std::string output_file_name(const std::string& image_id) {
  std::string safe = image_id;
  for (char& c : safe) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    if (!ok) c = '_';
  }
  return "images/" + safe + ".png";
}

Dataset PoisonedDataset::combined(const Dataset& source) const {
  std::unordered_map<std::string, const ImageRecord*> by_id;
  for (const auto& r : clean.images) by_id[r.id] = &r;
  for (const auto& r : poisoned.images) by_id[r.id] = &r;
  Dataset out;
  out.categories = source.categories;
  for (const auto& r : source.images) {
    auto it = by_id.find(r.id);
    if (it != by_id.end()) out.images.push_back(*it->second);
  }
  return out;
}

PoisonedDataset poison_dataset(const Dataset& d, const PoisonSpec& spec, const ImageSink& sink) {
  validate_spec(spec, d.num_classes());
  validate_dataset(d);

  std::set<std::string> names;
  for (const auto& r : d.images) {
    if (!names.insert(output_file_name(r.id)).second) {
      throw ValidationError("image ids collide on output name '" + output_file_name(r.id) + "'");
    }
  }

  auto split_rng = Rng::derive(spec.seed, "split");
  auto [clean, bd] = split_dataset(d, spec.rho, split_rng);

  std::optional<int> run_view;
  if (spec.fov_sampling == FovSampling::PerRun) {
    auto fov_rng = Rng::derive(spec.seed, "fov");
    run_view = static_cast<int>(fov_rng.categorical(spec.bank->weights));
  }

  struct Task {
    const ImageRecord* source;
    bool poison;
  };
  std::vector<Task> tasks;
  tasks.reserve(d.images.size());
  for (const auto& r : clean.images) tasks.push_back({&r, false});
  for (const auto& r : bd.images) tasks.push_back({&r, true});

  std::vector<ImageRecord> records(tasks.size());
  std::vector<std::optional<ManifestEntry>> entries(tasks.size());
  std::vector<std::string> failures(tasks.size());
  std::vector<bool> io_failure(tasks.size(), false);

  parallel_for(tasks.size(), spec.jobs, [&](std::size_t i) {
    const auto& task = tasks[i];
    try {
      ImageRecord rec;
      Image pixels;
      if (task.poison) {
        auto rng = Rng::derive(spec.seed, "image:" + task.source->id);
        auto result = poison_image(*task.source, spec, d.num_classes(), rng, run_view);
        rec = std::move(result.record);
        pixels = std::move(result.pixels);
        entries[i] = std::move(result.manifest);
      } else {
        std::tie(rec, pixels) = prepare_image(*task.source, spec.resolution);
      }
      rec.file_name = output_file_name(rec.id);
      if (sink) sink(rec, pixels);
      records[i] = std::move(rec);
    } catch (const IoError& e) {
      failures[i] = e.what();
      io_failure[i] = true;
    } catch (const Error& e) {
      failures[i] = e.what();
    }
  });

  std::ostringstream report;
  std::size_t failed = 0;
  bool all_io = true;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (failures[i].empty()) continue;
    ++failed;
    all_io = all_io && io_failure[i];
    report << "\n  " << tasks[i].source->id << ": " << failures[i];
  }
  if (failed > 0) {
    const auto msg = std::to_string(failed) + " image(s) failed:" + report.str();
    if (all_io) throw IoError(msg);
    throw ValidationError(msg);
  }

  PoisonedDataset out;
  out.clean.categories = out.poisoned.categories = d.categories;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    (tasks[i].poison ? out.poisoned : out.clean).images.push_back(std::move(records[i]));
    if (entries[i]) out.manifest.push_back(std::move(*entries[i]));
  }
  std::sort(out.manifest.begin(), out.manifest.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.image_id < b.image_id; });
  return out;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

bool is_poison_output(const fs::path& dir) {
  if (!fs::exists(dir)) return true;
  if (!fs::is_directory(dir)) return false;
  return fs::is_empty(dir) || fs::exists(dir / "manifest.json");
}

}  // namespace

PoisonedDataset write_poisoned_dataset(const Dataset& d, const PoisonSpec& spec, const fs::path& out_dir) {
  if (!is_poison_output(out_dir)) {
    throw IoError("refusing to overwrite '" + out_dir.string() + "': not empty and not a poison output");
  }
  const fs::path staging = out_dir.string() + ".partial";
  std::error_code ec;
  fs::remove_all(staging, ec);
  fs::create_directories(staging / "images", ec);
  if (ec) throw IoError("cannot create '" + staging.string() + "': " + ec.message());

  PoisonedDataset result;
  try {
    result = poison_dataset(d, spec, [&](const ImageRecord& rec, const Image& pixels) {
      save_image(pixels, staging / rec.file_name);
    });
    Dataset all = result.combined(d);
    for (auto& r : all.images) r.path = out_dir / r.file_name;
    write_annotations(all, staging / "annotations.json");
    write_text(staging / "manifest.json", dump_manifest(result.manifest));
  } catch (...) {
    fs::remove_all(staging, ec);
    throw;
  }

  fs::remove_all(out_dir, ec);
  if (ec) throw IoError("cannot replace '" + out_dir.string() + "': " + ec.message());
  fs::rename(staging, out_dir, ec);
  if (ec) throw IoError("cannot move output into '" + out_dir.string() + "': " + ec.message());
  for (auto* part : {&result.clean, &result.poisoned})
    for (auto& r : part->images) r.path = out_dir / r.file_name;
  return result;
}

std::string dump_manifest(const std::vector<ManifestEntry>& manifest) {
  ordered_json arr = ordered_json::array();
  for (const auto& e : manifest) {
    ordered_json j;
    j["image_id"] = e.image_id;
    ordered_json pl;
    pl["p"] = {e.placement.p.x, e.placement.p.y};
    pl["s"] = {e.placement.s.w, e.placement.s.h};
    pl["view"] = e.placement.view;
    j["placement"] = std::move(pl);
    j["goal"] = std::string(goal_name(e.goal));
    arr.push_back(std::move(j));
  }
  return arr.dump(1) + "\n";
}

std::vector<ManifestEntry> parse_manifest(const std::string& json_text, const std::string& source) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(source + ": malformed JSON at byte " + std::to_string(e.byte), e.byte);
  }
  if (!root.is_array()) throw ValidationError(source + ": manifest must be an array");
  std::vector<ManifestEntry> out;
  for (const auto& j : root) {
    try {
      ManifestEntry e;
      e.image_id = j.at("image_id").is_string() ? j.at("image_id").get<std::string>()
                                                 : std::to_string(j.at("image_id").get<std::int64_t>());
      const auto& pl = j.at("placement");
      e.placement.p = {pl.at("p").at(0).get<int>(), pl.at("p").at(1).get<int>()};
      e.placement.s = {pl.at("s").at(0).get<int>(), pl.at("s").at(1).get<int>()};
      e.placement.view = pl.at("view").get<int>();
      e.goal = parse_goal(j.at("goal").get<std::string>());
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw ValidationError(source + ": bad manifest entry: " + ex.what());
    }
  }
  return out;
}

std::vector<ManifestEntry> load_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), path.string());
}

}  // namespace odp
