#include "odp/predictions.hpp"

#include <fstream>
#include <istream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "odp/error.hpp"

namespace odp {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

void validate_prediction(const Prediction& p, const std::string& context) {
  if (!(p.score >= 0.0 && p.score <= 1.0)) {
    std::ostringstream os;
    os << context << ": score " << p.score << " outside [0,1]";
    throw ValidationError(os.str());
  }
  if (!(p.box.w > 0.0 && p.box.h > 0.0)) throw ValidationError(context + ": box has non-positive area");
  if (p.label < 0) throw ValidationError(context + ": negative label");
}

void PredictionSet::add(PredictionKey key, std::vector<Prediction> detections) {
  const std::string ctx = "image '" + key.image_id + "'";
  for (const auto& p : detections) validate_prediction(p, ctx);
  auto [it, inserted] = entries_.try_emplace(std::move(key), std::move(detections));
  if (!inserted) {
    std::string tal = it->first.tal ? "[" + std::to_string(it->first.tal->u) + "," +
                                          std::to_string(it->first.tal->v) + "]"
                                    : std::string("null");
    throw ValidationError("duplicate prediction record for image '" + it->first.image_id +
                          "' with tal " + tal);
  }
}

std::vector<std::optional<TalPosition>> PredictionSet::tals() const {
  std::vector<std::optional<TalPosition>> out;
  for (const auto& [key, _] : entries_) {
    if (out.empty() || out.back() != key.tal) out.push_back(key.tal);
  }
  return out;
}

ImagePredictions PredictionSet::for_tal(const std::optional<TalPosition>& tal) const {
  ImagePredictions out;
  for (const auto& [key, dets] : entries_)
    if (key.tal == tal) out.emplace(key.image_id, dets);
  return out;
}

std::map<std::optional<TalPosition>, ImagePredictions> PredictionSet::by_tal() const {
  std::map<std::optional<TalPosition>, ImagePredictions> out;
  for (const auto& [key, dets] : entries_) out[key.tal].emplace(key.image_id, dets);
  return out;
}

void PredictionSet::merge(const PredictionSet& other) {
  for (const auto& [key, dets] : other.entries_) add(key, dets);
}

namespace {

Prediction parse_detection(const json& j, const std::string& ctx) {
  if (!j.is_object()) throw ValidationError(ctx + ": detection must be an object");
  auto bbox = j.find("bbox");
  auto label = j.find("label");
  auto score = j.find("score");
  if (bbox == j.end() || label == j.end() || score == j.end()) {
    throw ValidationError(ctx + ": detection needs bbox, label and score");
  }
  if (!bbox->is_array() || bbox->size() != 4) throw ValidationError(ctx + ": bbox must have 4 numbers");
  for (const auto& v : *bbox)
    if (!v.is_number()) throw ValidationError(ctx + ": bbox must have 4 numbers");
  if (!label->is_number_integer()) throw ValidationError(ctx + ": label must be an integer");
  if (!score->is_number()) throw ValidationError(ctx + ": score must be a number");
  Prediction p;
  p.box = {(*bbox)[0].get<double>(), (*bbox)[1].get<double>(), (*bbox)[2].get<double>(),
           (*bbox)[3].get<double>()};
  p.label = label->get<int>();
  p.score = score->get<double>();
  return p;
}

std::optional<TalPosition> parse_tal(const json& j, const std::string& ctx) {
  if (j.is_null()) return std::nullopt;
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer()) {
    throw ValidationError(ctx + ": tal must be [u,v] integers or null");
  }
  return TalPosition{j[0].get<int>(), j[1].get<int>()};
}

}  // namespace

PredictionSet parse_predictions(std::istream& in, const std::string& source) {
  PredictionSet set;
  std::string line;
  std::size_t line_no = 0;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t line_start = offset;
    offset += line.size() + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string ctx = source + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(ctx + ": malformed JSON at byte " + std::to_string(line_start + e.byte) +
                           ": " + e.what(),
                       line_start + e.byte);
    }
    if (!j.is_object()) throw ValidationError(ctx + ": record must be an object");
    auto id = j.find("image_id");
    if (id == j.end()) throw ValidationError(ctx + ": missing image_id");
    std::string image_id;
    if (id->is_string()) {
      image_id = id->get<std::string>();
    } else if (id->is_number_integer()) {
      image_id = std::to_string(id->get<std::int64_t>());
    } else {
      throw ValidationError(ctx + ": image_id must be a string");
    }
    std::optional<TalPosition> tal;
    if (auto t = j.find("tal"); t != j.end()) tal = parse_tal(*t, ctx);
    auto dets = j.find("detections");
    if (dets == j.end() || !dets->is_array()) throw ValidationError(ctx + ": detections must be an array");
    std::vector<Prediction> preds;
    preds.reserve(dets->size());
    for (const auto& d : *dets) preds.push_back(parse_detection(d, ctx));
    try {
      set.add({std::move(image_id), tal}, std::move(preds));
    } catch (const ValidationError& e) {
      throw ValidationError(ctx + ": " + e.what());
    }
  }
  return set;
}

PredictionSet load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open predictions '" + path.string() + "'");
  return parse_predictions(in, path.string());
}

std::string dump_predictions(const PredictionSet& set) {
  std::string out;
  for (const auto& [key, dets] : set.entries()) {
    ordered_json j;
    j["image_id"] = key.image_id;
    j["tal"] = key.tal ? ordered_json::array({key.tal->u, key.tal->v}) : ordered_json(nullptr);
    ordered_json arr = ordered_json::array();
    for (const auto& p : dets) {
      ordered_json d;
      d["bbox"] = {p.box.u, p.box.v, p.box.w, p.box.h};
      d["label"] = p.label;
      d["score"] = p.score;
      arr.push_back(std::move(d));
    }
    j["detections"] = std::move(arr);
    out += j.dump();
    out += '\n';
  }
  return out;
}

void save_predictions(const PredictionSet& set, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write predictions '" + path.string() + "'");
  out << dump_predictions(set);
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

void validate_against(const ImagePredictions& preds, const Dataset& d) {
  std::unordered_set<std::string> ids;
  for (const auto& rec : d.images) ids.insert(rec.id);
  for (const auto& [image_id, dets] : preds) {
    if (!ids.count(image_id)) {
      throw ValidationError("predictions reference image '" + image_id + "' not in the dataset");
    }
    for (const auto& p : dets) {
      if (p.label >= d.num_classes()) {
        throw ValidationError("image '" + image_id + "': predicted label " + std::to_string(p.label) +
                              " outside [0," + std::to_string(d.num_classes()) + ")");
      }
    }
  }
}

}  // namespace odp
