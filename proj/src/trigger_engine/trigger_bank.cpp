#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "odp/error.hpp"
#include "odp/trigger.hpp"

namespace odp {

namespace fs = std::filesystem;

const FovView& TriggerBank::view(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= views.size()) {
    throw ValidationError("unknown trigger view id " + std::to_string(id) + " (bank has " +
                          std::to_string(views.size()) + " views)");
  }
  return views[static_cast<std::size_t>(id)];
}

namespace {

Image binarized_rgba(const Image& src) {
  if (src.channels != 3 && src.channels != 4) {
    throw ValidationError("trigger views must be RGB or RGBA, got " + std::to_string(src.channels) +
                          " channels");
  }
  Image out(src.width, src.height, 4);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = src.at(x, y, c);
      const float a = src.channels == 4 ? src.at(x, y, 3) : 1.0f;
      out.at(x, y, 3) = a >= 0.5f ? 1.0f : 0.0f;
    }
  }
  return out;
}

std::vector<double> read_weights_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": malformed JSON at byte " + std::to_string(e.byte), e.byte);
  }
  if (j.is_object() && j.contains("weights")) j = j["weights"];
  if (!j.is_array()) throw ValidationError(path.string() + ": expected an array of weights");
  std::vector<double> w;
  for (const auto& v : j) {
    if (!v.is_number()) throw ValidationError(path.string() + ": weights must be numbers");
    w.push_back(v.get<double>());
  }
  return w;
}

}  // namespace

TriggerBank make_trigger_bank(std::vector<Image> views, std::optional<std::vector<double>> weights) {
  if (views.empty()) throw ValidationError("trigger bank needs at least one view");
  TriggerBank bank;
  for (std::size_t i = 0; i < views.size(); ++i) {
    FovView v{static_cast<int>(i), binarized_rgba(views[i])};
    bool opaque = false;
    for (int y = 0; y < v.rgba.height && !opaque; ++y)
      for (int x = 0; x < v.rgba.width && !opaque; ++x) opaque = v.rgba.at(x, y, 3) > 0.0f;
    if (!opaque) throw ValidationError("trigger view " + std::to_string(i) + " has no opaque pixel");
    bank.views.push_back(std::move(v));
  }

  if (!weights) {
    bank.weights.assign(bank.views.size(), 1.0 / static_cast<double>(bank.views.size()));
    return bank;
  }
  if (weights->size() != bank.views.size()) {
    throw ValidationError("got " + std::to_string(weights->size()) + " weights for " +
                          std::to_string(bank.views.size()) + " views");
  }
  for (double w : *weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("trigger weights must be non-negative");
  }
  const double sum = std::accumulate(weights->begin(), weights->end(), 0.0);
  if (std::abs(sum - 1.0) > 1e-9) {
    std::ostringstream os;
    os.precision(17);
    os << "trigger weights sum to " << sum << ", expected 1";
    throw ValidationError(os.str());
  }
  bank.weights = std::move(*weights);
  return bank;
}

TriggerBank build_trigger_bank(const fs::path& dir, std::optional<std::vector<double>> weights) {
  if (!fs::is_directory(dir)) throw IoError("trigger directory '" + dir.string() + "' does not exist");
  fs::path views_dir = fs::is_directory(dir / "views") ? dir / "views" : dir;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(views_dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") files.push_back(entry.path());
  }
  if (files.empty()) throw ValidationError("no trigger views (*.png) in '" + views_dir.string() + "'");
  std::sort(files.begin(), files.end());

  std::vector<Image> images;
  images.reserve(files.size());
  for (const auto& f : files) images.push_back(load_image(f));

  if (!weights && fs::exists(dir / "weights.json")) weights = read_weights_file(dir / "weights.json");
  return make_trigger_bank(std::move(images), std::move(weights));
}

}  // namespace odp
