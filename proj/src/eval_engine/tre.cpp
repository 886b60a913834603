#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "odp/error.hpp"
#include "odp/eval.hpp"
#include "odp/parallel.hpp"

namespace odp {

TalGrid tal_grid(const TalGridSpec& spec) {
  if (spec.stride <= 0) throw ValidationError("stride must be positive");
  if (spec.width <= 0 || spec.height <= 0) throw ValidationError("image size must be positive");
  if (spec.trigger.w <= 0 || spec.trigger.h <= 0) throw ValidationError("trigger size must be positive");
  const Region r = spec.region.value_or(Region{0, 0, spec.width, spec.height});
  if (r.w <= 0 || r.h <= 0 || r.x < 0 || r.y < 0 || r.x + r.w > spec.width || r.y + r.h > spec.height) {
    throw ValidationError("scan region must lie inside the " + std::to_string(spec.width) + "x" +
                          std::to_string(spec.height) + " image");
  }
  const PixelPoint o = spec.origin.value_or(PixelPoint{r.x, r.y});
  if (o.x < r.x || o.y < r.y || o.x >= r.x + r.w || o.y >= r.y + r.h) {
    throw ValidationError("grid origin must lie inside the scan region");
  }
  const int span_x = r.x + r.w - o.x;
  const int span_y = r.y + r.h - o.y;
  if (spec.trigger.w > span_x || spec.trigger.h > span_y) {
    throw ValidationError("trigger " + std::to_string(spec.trigger.w) + "x" + std::to_string(spec.trigger.h) +
                          " does not fit the " + std::to_string(span_x) + "x" + std::to_string(span_y) +
                          " scan region");
  }
  TalGrid g;
  g.cols = (span_x - spec.trigger.w) / spec.stride + 1;
  g.rows = (span_y - spec.trigger.h) / spec.stride + 1;
  g.positions.reserve(static_cast<std::size_t>(g.rows) * g.cols);
  for (int row = 0; row < g.rows; ++row)
    for (int col = 0; col < g.cols; ++col)
      g.positions.push_back({o.x + col * spec.stride, o.y + row * spec.stride});
  return g;
}

namespace {

std::string describe(const TalPosition& t) {
  return "(" + std::to_string(t.u) + "," + std::to_string(t.v) + ")";
}

}  // namespace

TreGrid tre_scan(const std::map<TalPosition, ImagePredictions>& per_tal, const Dataset& d,
                 const AttackGoal& goal, double tau, const TalGridSpec& spec, unsigned jobs) {
  const TalGrid grid = tal_grid(spec);
  std::vector<std::string> missing;
  for (const auto& pos : grid.positions)
    if (!per_tal.count(pos)) missing.push_back(describe(pos));
  if (!missing.empty()) {
    std::string msg = std::to_string(missing.size()) + " of " + std::to_string(grid.positions.size()) +
                      " TAL positions have no predictions:";
    for (const auto& m : missing) msg += " " + m;
    throw ValidationError(msg);
  }
  if (per_tal.size() != grid.positions.size()) {
    std::string msg = "predictions tagged with TALs outside the grid:";
    for (const auto& [pos, _] : per_tal)
      if (std::find(grid.positions.begin(), grid.positions.end(), pos) == grid.positions.end())
        msg += " " + describe(pos);
    throw ValidationError(msg);
  }

  TreGrid out;
  out.rows = grid.rows;
  out.cols = grid.cols;
  out.stride = spec.stride;
  out.trigger = spec.trigger;
  out.origin = grid.positions.empty() ? PixelPoint{} : PixelPoint{grid.positions[0].u, grid.positions[0].v};
  out.positions = grid.positions;
  out.asr.assign(grid.positions.size(), 0.0);
  parallel_for(grid.positions.size(), jobs,
               [&](std::size_t i) { out.asr[i] = asr(goal, per_tal.at(grid.positions[i]), d, tau); });

  double sum = 0.0;
  for (double v : out.asr) sum += v;
  out.tre = sum / static_cast<double>(out.asr.size());
  return out;
}

std::string heatmap_csv(const TreGrid& grid) {
  std::string out;
  char buf[64];
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      if (c > 0) out += ',';
      const double v = grid.asr[static_cast<std::size_t>(r) * grid.cols + c];
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
      out.append(buf, ptr);
    }
    out += '\n';
  }
  return out;
}

Image heatmap_image(const TreGrid& grid, int cell) {
  if (cell <= 0) throw ValidationError("heatmap cell size must be positive");
  if (grid.rows <= 0 || grid.cols <= 0) throw ValidationError("empty TRE grid");
  Image img(grid.cols * cell, grid.rows * cell, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double v = grid.asr[static_cast<std::size_t>(y / cell) * grid.cols + x / cell];
      img.at(x, y, 0) = static_cast<float>(v / 100.0);
    }
  return img;
}

void render_heatmap(const TreGrid& grid, const std::filesystem::path& prefix, int cell) {
  auto csv_path = prefix;
  csv_path += ".csv";
  auto png_path = prefix;
  png_path += ".png";
  if (prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());
  std::ofstream out(csv_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + csv_path.string() + "'");
  out << heatmap_csv(grid);
  if (!out) throw IoError("short write to '" + csv_path.string() + "'");
  out.close();
  save_image(heatmap_image(grid, cell), png_path);
}

std::string dump_report(const EvalReport& report) {
  using ordered_json = nlohmann::ordered_json;
  auto opt = [](const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); };
  ordered_json j;
  ordered_json map = ordered_json::object();
  ordered_json per_class = ordered_json::object();
  for (const auto& e : report.map) {
    map[e.threshold] = opt(e.map);
    ordered_json arr = ordered_json::array();
    for (const auto& v : e.per_class) arr.push_back(opt(v));
    per_class[e.threshold] = std::move(arr);
  }
  j["map"] = std::move(map);
  j["asr"] = opt(report.asr);
  j["tre"] = opt(report.tre);
  if (report.asr_goal) j["goal"] = *report.asr_goal;
  j["per_class_ap"] = std::move(per_class);
  j["counts"] = {{"images", report.counts.images},
                 {"ground_truth", report.counts.ground_truth},
                 {"predictions", report.counts.predictions}};
  return j.dump(2) + "\n";
}

}  // namespace odp
