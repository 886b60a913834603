#include "odp/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "odp/dataset.hpp"
#include "odp/error.hpp"
#include "odp/eval.hpp"
#include "odp/parallel.hpp"
#include "odp/poison.hpp"
#include "odp/predictions.hpp"
#include "odp/rng.hpp"
#include "odp/trigger.hpp"

namespace odp::cli {

namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
  std::uint64_t seed = 0;
  unsigned jobs = 0;
};

struct PoisonOptions {
  std::string dataset;
  std::string image_root;
  std::string out;
  std::string goal;
  std::optional<int> target_label;
  double rho = 0.1;
  std::string insertion = "rep";
  double coefficient = presets::kSupCoefficientLow;
  double mix = presets::kBlendedMix;
  std::string trigger_dir;
  std::vector<double> trigger_weights;
  std::optional<int> trigger_size;
  std::vector<int> scale_range;
  std::vector<int> u_range;
  std::vector<int> v_range;
  int resolution = 640;
  std::string mask = "silhouette";
  std::string fov_sampling = "per-image";
  int hallucinations = 1;
  int jitter = 0;
};

struct EvaluateOptions {
  std::string dataset;
  std::string predictions;
  std::vector<int> tal;
  std::vector<std::string> map_thresholds{"50", "75", "50:95"};
  std::string goal;
  std::optional<int> target_label;
  double iou_thresh = kDefaultAsrIou;
  std::string asr_mode = "image";
  std::optional<std::size_t> subsample;
  std::string out;
};

struct GridOptions {
  int width = 640;
  int height = 640;
  int trigger_size = presets::kDefaultTriggerSize;
  int stride = 50;
  std::vector<int> origin;
  std::vector<int> region;
  std::string out;
};

struct TreOptions {
  std::string dataset;
  std::string predictions_dir;
  std::string goal;
  std::optional<int> target_label;
  double iou_thresh = kDefaultAsrIou;
  std::optional<int> width;
  std::optional<int> height;
  int trigger_size = presets::kDefaultTriggerSize;
  int stride = 50;
  std::vector<int> origin;
  std::vector<int> region;
  std::optional<std::size_t> subsample;
  int cell = 8;
  std::string out;
};

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw IoError("short write to '" + path.string() + "'");
}

AttackGoal make_goal(const std::string& name, std::optional<int> target) {
  AttackGoal goal;
  goal.kind = parse_goal(name);
  if (needs_target(goal.kind) && !target) {
    throw ValidationError("missing required field 'target-label' for goal " + std::string(goal_name(goal.kind)));
  }
  if (needs_target(goal.kind)) goal.target_label = target;
  return goal;
}

std::pair<int, int> pair_of(const std::vector<int>& v, const char* name) {
  if (v.size() != 2) throw ValidationError(std::string("--") + name + " takes two values");
  return {v[0], v[1]};
}

int cmd_poison(const GlobalOptions& g, const PoisonOptions& o, std::ostream& out) {
  const Dataset d = o.image_root.empty() ? load_dataset(o.dataset) : load_dataset(o.dataset, fs::path(o.image_root));

  PoisonSpec spec;
  spec.goal = make_goal(o.goal, o.target_label);
  spec.goal.hallucinations = o.hallucinations;
  spec.goal.jitter = o.jitter;
  spec.rho = o.rho;
  spec.insertion.kind = parse_insertion(o.insertion);
  spec.insertion.coefficient = o.coefficient;
  spec.insertion.mix = o.mix;
  spec.seed = g.seed;
  spec.jobs = g.jobs;
  spec.resolution = o.resolution;

  if (o.mask == "silhouette") {
    spec.mask = MaskMode::Silhouette;
  } else if (o.mask == "rect" || o.mask == "rectangle") {
    spec.mask = MaskMode::Rectangle;
  } else {
    throw ValidationError("--mask must be 'rect' or 'silhouette'");
  }
  if (o.fov_sampling == "per-image") {
    spec.fov_sampling = FovSampling::PerImage;
  } else if (o.fov_sampling == "per-run") {
    spec.fov_sampling = FovSampling::PerRun;
  } else {
    throw ValidationError("--fov-sampling must be 'per-image' or 'per-run'");
  }

  auto& s = spec.sampling;
  if (!o.scale_range.empty()) {
    std::tie(s.scale_low, s.scale_high) = pair_of(o.scale_range, "scale-range");
  } else {
    s.scale_low = s.scale_high = o.trigger_size.value_or(presets::kDefaultTriggerSize);
  }
  // Default location bounds: every position where the largest trigger fits
  // inside the smallest output image.
  int min_w = spec.resolution;
  int min_h = spec.resolution;
  if (spec.resolution == 0) {
    if (d.images.empty()) throw ValidationError("dataset has no images");
    min_w = min_h = std::numeric_limits<int>::max();
    for (const auto& r : d.images) {
      min_w = std::min(min_w, r.width);
      min_h = std::min(min_h, r.height);
    }
  }
  auto default_high = [&](int full) { return std::clamp(full - s.scale_high + 1, 1, std::max(1, full - 1)); };
  std::tie(s.u_low, s.u_high) =
      o.u_range.empty() ? std::pair{0, default_high(min_w)} : pair_of(o.u_range, "u-range");
  std::tie(s.v_low, s.v_high) =
      o.v_range.empty() ? std::pair{0, default_high(min_h)} : pair_of(o.v_range, "v-range");

  std::optional<std::vector<double>> weights;
  if (!o.trigger_weights.empty()) weights = o.trigger_weights;
  spec.bank = std::make_shared<const TriggerBank>(build_trigger_bank(o.trigger_dir, weights));

  const auto result = write_poisoned_dataset(d, spec, o.out);
  out << "poisoned " << result.poisoned.images.size() << " of " << d.images.size() << " images"
      << " (clean " << result.clean.images.size() << ")"
      << "; goal " << goal_name(spec.goal.kind);
  if (spec.goal.target_label) out << " target " << *spec.goal.target_label;
  out << "; rho " << spec.rho << "; insertion " << insertion_name(spec.insertion.kind)
      << "; views " << spec.bank->views.size() << "; seed " << spec.seed << "\n"
      << "wrote " << (fs::path(o.out) / "annotations.json").string() << " and "
      << (fs::path(o.out) / "manifest.json").string() << "\n";
  return kExitOk;
}

Dataset maybe_subsample(const Dataset& d, std::optional<std::size_t> n, std::uint64_t seed) {
  if (!n) return d;
  auto rng = Rng::derive(seed, "subsample");
  return sample_images(d, *n, rng);
}

int cmd_evaluate(const GlobalOptions& g, const EvaluateOptions& o, std::ostream& out) {
  const Dataset d = maybe_subsample(load_dataset(o.dataset), o.subsample, g.seed);
  const PredictionSet set = load_predictions(o.predictions);

  std::optional<TalPosition> tal;
  if (!o.tal.empty()) {
    auto [u, v] = pair_of(o.tal, "tal");
    tal = TalPosition{u, v};
  } else {
    const auto tals = set.tals();
    if (tals.size() > 1) {
      throw ValidationError("predictions hold " + std::to_string(tals.size()) +
                            " TAL groups; choose one with --tal U V (or use tre-scan)");
    }
    if (tals.size() == 1) tal = tals.front();
  }
  ImagePredictions preds = set.for_tal(tal);
  if (o.subsample) {
    std::erase_if(preds, [&](const auto& kv) { return d.find(kv.first) == nullptr; });
  }

  std::vector<IouThreshold> thresholds;
  for (const auto& t : o.map_thresholds) thresholds.push_back(IouThreshold::parse(t));
  EvalReport report = mean_ap(preds, d, thresholds);
  if (!o.goal.empty()) {
    const AttackGoal goal = make_goal(o.goal, o.target_label);
    AsrMode mode = AsrMode::Image;
    if (o.asr_mode == "object") {
      mode = AsrMode::Object;
    } else if (o.asr_mode != "image") {
      throw ValidationError("--asr-mode must be 'image' or 'object'");
    }
    report.asr = asr(goal, preds, d, o.iou_thresh, mode);
    report.asr_goal = std::string(goal_name(goal.kind)) + (mode == AsrMode::Object ? " (object-level)" : "");
  }
  const auto text = dump_report(report);
  if (o.out.empty()) {
    out << text;
  } else {
    write_file(o.out, text);
    for (const auto& e : report.map) {
      out << "mAP@" << e.threshold << " = ";
      if (e.map) out << *e.map; else out << "n/a";
      out << "\n";
    }
    if (report.asr) out << "ASR = " << *report.asr << "\n";
  }
  return kExitOk;
}

TalGridSpec make_grid_spec(int width, int height, int trigger, int stride, const std::vector<int>& origin,
                           const std::vector<int>& region) {
  TalGridSpec spec;
  spec.width = width;
  spec.height = height;
  spec.trigger = {trigger, trigger};
  spec.stride = stride;
  if (!origin.empty()) {
    auto [x, y] = pair_of(origin, "origin");
    spec.origin = PixelPoint{x, y};
  }
  if (!region.empty()) {
    if (region.size() != 4) throw ValidationError("--region takes four values: x y w h");
    spec.region = Region{region[0], region[1], region[2], region[3]};
  }
  return spec;
}

std::string tal_file_name(const TalPosition& t) {
  return "tal_" + std::to_string(t.u) + "_" + std::to_string(t.v) + ".jsonl";
}

int cmd_grid(const GridOptions& o, std::ostream& out) {
  const auto grid = tal_grid(make_grid_spec(o.width, o.height, o.trigger_size, o.stride, o.origin, o.region));
  std::string text;
  for (const auto& p : grid.positions) text += std::to_string(p.u) + "," + std::to_string(p.v) + "\n";
  if (o.out.empty()) {
    out << text;
  } else {
    write_file(o.out, text);
    out << grid.positions.size() << " positions (" << grid.rows << " x " << grid.cols << ") written to " << o.out
        << "\n";
  }
  return kExitOk;
}

int cmd_tre_scan(const GlobalOptions& g, const TreOptions& o, std::ostream& out) {
  const Dataset d = maybe_subsample(load_dataset(o.dataset), o.subsample, g.seed);
  const AttackGoal goal = make_goal(o.goal, o.target_label);

  int width = o.width.value_or(0);
  int height = o.height.value_or(0);
  if (!o.width || !o.height) {
    if (d.images.empty()) throw ValidationError("empty dataset; pass --width and --height");
    const auto& first = d.images.front();
    for (const auto& r : d.images) {
      if (r.width != first.width || r.height != first.height) {
        throw ValidationError("dataset images differ in size; pass --width and --height");
      }
    }
    if (!o.width) width = first.width;
    if (!o.height) height = first.height;
  }
  const auto spec = make_grid_spec(width, height, o.trigger_size, o.stride, o.origin, o.region);
  const auto grid = tal_grid(spec);

  if (!fs::is_directory(o.predictions_dir)) {
    throw IoError("predictions directory '" + o.predictions_dir + "' does not exist");
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(o.predictions_dir))
    if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  PredictionSet all;
  for (const auto& f : files) all.merge(load_predictions(f));

  std::map<TalPosition, ImagePredictions> per_tal;
  for (auto& [tal, preds] : all.by_tal()) {
    if (!tal) throw ValidationError("tre-scan needs TAL-tagged predictions; found records with \"tal\": null");
    if (o.subsample) std::erase_if(preds, [&](const auto& kv) { return d.find(kv.first) == nullptr; });
    per_tal.emplace(*tal, std::move(preds));
  }
  std::vector<std::string> missing;
  for (const auto& p : grid.positions)
    if (!per_tal.count(p)) missing.push_back(tal_file_name(p));
  if (!missing.empty()) {
    std::string msg = "missing per-TAL predictions for " + std::to_string(missing.size()) + " of " +
                      std::to_string(grid.positions.size()) + " positions:";
    for (const auto& m : missing) msg += " " + m;
    throw ValidationError(msg);
  }

  const TreGrid tre = tre_scan(per_tal, d, goal, o.iou_thresh, spec, g.jobs);
  render_heatmap(tre, o.out, o.cell);

  EvalReport report;
  report.tre = tre.tre;
  report.asr_goal = std::string(goal_name(goal.kind));
  report.counts.images = d.images.size();
  auto json = nlohmann::ordered_json::parse(dump_report(report));
  json.erase("map");
  json.erase("per_class_ap");
  json["grid"] = {{"rows", tre.rows},
                  {"cols", tre.cols},
                  {"stride", tre.stride},
                  {"origin", {tre.origin.x, tre.origin.y}},
                  {"trigger", {tre.trigger.w, tre.trigger.h}}};
  auto report_path = fs::path(o.out);
  report_path += ".json";
  write_file(report_path, json.dump(2) + "\n");

  out << "TRE = " << tre.tre << " over " << tre.positions.size() << " TALs (" << tre.rows << " x " << tre.cols
      << ")\n";
  return kExitOk;
}

int cmd_inspect(const std::string& path_text, std::ostream& out) {
  fs::path path(path_text);
  if (fs::is_directory(path)) {
    int rc = kExitOk;
    if (fs::exists(path / "annotations.json")) rc = cmd_inspect((path / "annotations.json").string(), out);
    if (fs::exists(path / "manifest.json")) rc = cmd_inspect((path / "manifest.json").string(), out);
    if (!fs::exists(path / "annotations.json") && !fs::exists(path / "manifest.json")) {
      throw IoError("'" + path.string() + "' holds neither annotations.json nor manifest.json");
    }
    return rc;
  }
  if (!fs::exists(path)) throw IoError("'" + path.string() + "' does not exist");

  if (path.extension() == ".jsonl") {
    const auto set = load_predictions(path);
    std::size_t dets = 0;
    for (const auto& [_, d] : set.entries()) dets += d.size();
    out << path.string() << ": predictions, " << set.size() << " records, " << set.tals().size()
        << " TAL group(s), " << dets << " detections\n";
    return kExitOk;
  }

  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  nlohmann::json probe;
  try {
    probe = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": malformed JSON at byte " + std::to_string(e.byte), e.byte);
  }
  if (probe.is_array()) {
    const auto manifest = parse_manifest(text, path.string());
    std::map<std::string, std::size_t> goals;
    std::map<int, std::size_t> views;
    for (const auto& e : manifest) {
      ++goals[std::string(goal_name(e.goal))];
      ++views[e.placement.view];
    }
    out << path.string() << ": manifest, " << manifest.size() << " poisoned images\n";
    for (const auto& [goal, n] : goals) out << "  goal " << goal << ": " << n << "\n";
    for (const auto& [view, n] : views) out << "  view " << view << ": " << n << "\n";
    return kExitOk;
  }
  const Dataset d = parse_dataset(text, path.parent_path(), path.string());
  std::size_t anns = 0;
  std::vector<std::size_t> per_class(static_cast<std::size_t>(d.num_classes()), 0);
  for (const auto& r : d.images) {
    anns += r.annotations.size();
    for (const auto& a : r.annotations) ++per_class[static_cast<std::size_t>(a.label)];
  }
  out << path.string() << ": dataset, " << d.images.size() << " images, " << anns << " annotations, "
      << d.num_classes() << " categories\n";
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    if (per_class[c] == 0) continue;
    out << "  [" << c << "] " << d.categories[c].name << " (id " << d.categories[c].id << "): " << per_class[c]
        << "\n";
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Backdoor poisoning and attack evaluation for object detection datasets", "odpoison"};
  app.set_config("--config", "", "TOML config file; command-line flags take precedence");
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions global;
  app.add_option("--seed", global.seed, "Master seed for every random draw")->capture_default_str();
  app.add_option("--jobs", global.jobs, "Worker threads (0 = logical cores)")->capture_default_str();

  PoisonOptions po;
  auto* poison = app.add_subcommand("poison", "Write a poisoned copy of a dataset plus a manifest");
  poison->add_option("--dataset", po.dataset, "COCO annotation JSON")->required();
  poison->add_option("--image-root", po.image_root, "Directory image file_names resolve against");
  poison->add_option("--out", po.out, "Output directory")->required();
  poison->add_option("--goal", po.goal, "Attack goal: TMA, TDA, TGA, UMA, UDA, UGA")->required();
  poison->add_option("--target-label", po.target_label, "Target class index (TMA, TDA, TGA)");
  poison->add_option("--rho", po.rho, "Poison ratio in (0,1]")->capture_default_str();
  poison->add_option("--insertion", po.insertion, "rep, sup or blend")->capture_default_str();
  poison->add_option("--coefficient", po.coefficient, "Superimposition coefficient")->capture_default_str();
  poison->add_option("--mix", po.mix, "Blend coefficient in [0,1]")->capture_default_str();
  poison->add_option("--trigger-dir", po.trigger_dir, "Trigger bank directory (views/*.png)")->required();
  poison->add_option("--trigger-weights", po.trigger_weights, "Sampling weight per view");
  poison->add_option("--trigger-size", po.trigger_size, "Fixed trigger side in pixels (default 50)");
  poison->add_option("--scale-range", po.scale_range, "Trigger side bounds LOW HIGH")->expected(2);
  poison->add_option("--u-range", po.u_range, "Horizontal location bounds LOW HIGH (HIGH exclusive)")->expected(2);
  poison->add_option("--v-range", po.v_range, "Vertical location bounds LOW HIGH (HIGH exclusive)")->expected(2);
  poison->add_option("--resolution", po.resolution, "Square output side (0 keeps source size)")->capture_default_str();
  poison->add_option("--mask", po.mask, "rect or silhouette")->capture_default_str();
  poison->add_option("--fov-sampling", po.fov_sampling, "per-image or per-run")->capture_default_str();
  poison->add_option("--hallucinations", po.hallucinations, "Boxes added per image (TGA, UGA)")->capture_default_str();
  poison->add_option("--jitter", po.jitter, "Max shift of added boxes in pixels")->capture_default_str();

  EvaluateOptions eo;
  auto* evaluate = app.add_subcommand("evaluate", "Compute mAP and optionally ASR for one prediction run");
  evaluate->add_option("--dataset", eo.dataset, "COCO annotation JSON with clean ground truth")->required();
  evaluate->add_option("--predictions", eo.predictions, "Predictions JSONL")->required();
  evaluate->add_option("--tal", eo.tal, "Select the records tagged with TAL U V")->expected(2);
  evaluate->add_option("--map-thresholds", eo.map_thresholds, "mAP thresholds, e.g. 50 75 50:95")
      ->capture_default_str();
  evaluate->add_option("--goal", eo.goal, "Also compute ASR for this goal");
  evaluate->add_option("--target-label", eo.target_label, "Target class index (TMA, TDA, TGA)");
  evaluate->add_option("--iou-thresh", eo.iou_thresh, "IoU threshold for ASR")->capture_default_str();
  evaluate->add_option("--asr-mode", eo.asr_mode, "image (canonical) or object")->capture_default_str();
  evaluate->add_option("--subsample", eo.subsample, "Evaluate a seeded random subset of N images");
  evaluate->add_option("--out", eo.out, "Report JSON path (default: stdout)");

  TreOptions to;
  auto* tre = app.add_subcommand("tre-scan", "Per-TAL ASR heatmap and its mean over a TAL grid");
  tre->add_option("--dataset", to.dataset, "COCO annotation JSON with clean ground truth")->required();
  tre->add_option("--predictions-dir", to.predictions_dir, "Directory of per-TAL predictions (*.jsonl)")->required();
  tre->add_option("--goal", to.goal, "Attack goal")->required();
  tre->add_option("--target-label", to.target_label, "Target class index (TMA, TDA, TGA)");
  tre->add_option("--iou-thresh", to.iou_thresh, "IoU threshold for ASR")->capture_default_str();
  tre->add_option("--width", to.width, "Image width (default: from dataset)");
  tre->add_option("--height", to.height, "Image height (default: from dataset)");
  tre->add_option("--trigger-size", to.trigger_size, "Trigger side in pixels")->capture_default_str();
  tre->add_option("--stride", to.stride, "Grid step in pixels")->capture_default_str();
  tre->add_option("--origin", to.origin, "First TAL X Y")->expected(2);
  tre->add_option("--region", to.region, "Scan sub-rectangle X Y W H")->expected(4);
  tre->add_option("--subsample", to.subsample, "Evaluate a seeded random subset of N images per TAL");
  tre->add_option("--cell", to.cell, "Heatmap pixels per TAL")->capture_default_str();
  tre->add_option("--out", to.out, "Output prefix for .csv, .png and .json")->required();

  GridOptions go;
  auto* grid = app.add_subcommand("grid", "Print TAL positions, one 'u,v' per line");
  grid->add_option("--width", go.width, "Image width")->capture_default_str();
  grid->add_option("--height", go.height, "Image height")->capture_default_str();
  grid->add_option("--trigger-size", go.trigger_size, "Trigger side in pixels")->capture_default_str();
  grid->add_option("--stride", go.stride, "Grid step in pixels")->capture_default_str();
  grid->add_option("--origin", go.origin, "First TAL X Y")->expected(2);
  grid->add_option("--region", go.region, "Scan sub-rectangle X Y W H")->expected(4);
  grid->add_option("--out", go.out, "Write positions to a file instead of stdout");

  std::string inspect_path;
  auto* inspect = app.add_subcommand("inspect", "Summarize a dataset, manifest, predictions file or poison output");
  inspect->add_option("path", inspect_path, "File or directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::FileError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    if (poison->parsed()) return cmd_poison(global, po, out);
    if (evaluate->parsed()) return cmd_evaluate(global, eo, out);
    if (tre->parsed()) return cmd_tre_scan(global, to, out);
    if (grid->parsed()) return cmd_grid(go, out);
    if (inspect->parsed()) return cmd_inspect(inspect_path, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitValidation;
}

}  // namespace odp::cli
