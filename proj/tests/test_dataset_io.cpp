#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "odp/dataset.hpp"
#include "odp/error.hpp"
#include "odp/image.hpp"
#include "odp/predictions.hpp"
#include "odp/rng.hpp"
#include "support/fixtures.hpp"

using namespace odp;
using fixture::TempDir;

namespace {

std::string minimal_json() {
  return R"({"images":[{"id":1,"file_name":"a.png","width":640,"height":640}],
             "annotations":[{"id":7,"image_id":1,"category_id":1,"bbox":[0,0,50,50]}],
             "categories":[{"id":1,"name":"person"}]})";
}

std::string empty_json_with_categories(int k) {
  nlohmann::json j;
  j["images"] = nlohmann::json::array();
  j["annotations"] = nlohmann::json::array();
  for (int c = 0; c < k; ++c) j["categories"].push_back({{"id", c + 1}, {"name", "c" + std::to_string(c)}});
  return j.dump();
}

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("empty dataset keeps its category count") {
    const auto d = parse_dataset(empty_json_with_categories(80), ".");
    CHECK(d.images.empty());
    CHECK(d.num_classes() == 80);
  }

  TEST_CASE("minimal record") {
    const auto d = parse_dataset(minimal_json(), "/data");
    REQUIRE(d.images.size() == 1);
    const auto& r = d.images[0];
    CHECK(r.id == "1");
    CHECK(r.path == std::filesystem::path("/data/a.png"));
    REQUIRE(r.annotations.size() == 1);
    CHECK(r.annotations[0].box == Box{0, 0, 50, 50});
    CHECK(r.annotations[0].label == 0);
  }

  TEST_CASE("sparse category ids map to dense labels in id order") {
    const auto d = load_dataset(fixture::data_dir() / "coco10" / "annotations.json");
    REQUIRE(d.num_classes() == 5);
    CHECK(d.categories[0].id == 1);
    CHECK(d.categories[2].id == 18);
    CHECK(d.categories[4].id == 90);
    CHECK(d.categories[4].name == "toothbrush");
  }

  TEST_CASE("10-image subset annotation counts match a direct walk of the JSON") {
    const auto path = fixture::data_dir() / "coco10" / "annotations.json";
    const auto j = nlohmann::json::parse(fixture::read_file(path));
    std::map<std::string, std::size_t> expected;
    for (const auto& im : j["images"]) expected[std::to_string(im["id"].get<long>())] = 0;
    for (const auto& an : j["annotations"]) ++expected[std::to_string(an["image_id"].get<long>())];

    const auto d = load_dataset(path);
    REQUIRE(d.images.size() == expected.size());
    for (const auto& r : d.images) CHECK(r.annotations.size() == expected.at(r.id));
    CHECK(d.find("287") != nullptr);
    CHECK(d.find("287")->annotations.empty());
  }

  TEST_CASE("broken boxes are rejected naming the image") {
    auto with_box = [](const std::string& bbox) {
      return R"({"images":[{"id":"img-9","file_name":"a.png","width":100,"height":80}],
                 "annotations":[{"image_id":"img-9","category_id":1,"bbox":)" +
             bbox + R"(}], "categories":[{"id":1,"name":"x"}]})";
    };
    for (const auto* bad : {"[0,0,0,10]", "[0,0,10,-1]", "[95,0,10,10]", "[0,75,10,10]", "[-1,0,10,10]"}) {
      CAPTURE(bad);
      try {
        parse_dataset(with_box(bad), ".");
        FAIL("accepted a broken box");
      } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("img-9") != std::string::npos);
      }
    }
    CHECK_NOTHROW(parse_dataset(with_box("[90,70,10,10]"), "."));
  }

  TEST_CASE("random JSON records: every loaded box lies inside its image") {
    std::mt19937 gen(11);
    std::uniform_int_distribution<int> coord(-20, 120);
    int accepted = 0;
    int rejected = 0;
    for (int trial = 0; trial < 300; ++trial) {
      nlohmann::json j;
      j["images"] = {{{"id", 1}, {"file_name", "x.png"}, {"width", 100}, {"height", 60}}};
      j["categories"] = {{{"id", 3}, {"name", "x"}}};
      j["annotations"] = nlohmann::json::array();
      for (int k = 0; k < 3; ++k)
        j["annotations"].push_back(
            {{"image_id", 1}, {"category_id", 3}, {"bbox", {coord(gen), coord(gen), coord(gen), coord(gen)}}});
      try {
        const auto d = parse_dataset(j.dump(), ".");
        ++accepted;
        for (const auto& a : d.images[0].annotations) {
          CHECK(a.box.w > 0);
          CHECK(a.box.h > 0);
          CHECK(a.box.u >= 0);
          CHECK(a.box.v >= 0);
          CHECK(a.box.x2() <= 100);
          CHECK(a.box.y2() <= 60);
        }
      } catch (const ValidationError&) {
        ++rejected;
      }
    }
    CHECK(rejected > 0);
    CHECK(accepted + rejected == 300);
  }

  TEST_CASE("malformed JSON reports a byte offset") {
    try {
      parse_dataset(R"({"images": [}, )", ".");
      FAIL("accepted malformed JSON");
    } catch (const ParseError& e) {
      CHECK(e.byte_offset() > 0);
      CHECK(e.byte_offset() <= 13);
    }
  }

  TEST_CASE("unknown category and unknown image are rejected") {
    CHECK_THROWS_AS(parse_dataset(R"({"images":[{"id":1,"file_name":"a","width":9,"height":9}],
        "annotations":[{"image_id":1,"category_id":2,"bbox":[0,0,1,1]}],"categories":[{"id":1}]})", "."),
                    ValidationError);
    CHECK_THROWS_AS(parse_dataset(R"({"images":[],
        "annotations":[{"image_id":1,"category_id":1,"bbox":[0,0,1,1]}],"categories":[{"id":1}]})", "."),
                    ValidationError);
  }

  TEST_CASE("round trip of the minimal dataset is structurally equal") {
    TempDir tmp;
    const auto d = parse_dataset(minimal_json(), tmp.path());
    write_annotations(d, tmp / "out.json");
    const auto back = load_dataset(tmp / "out.json");
    CHECK(structurally_equal(d, back));
    CHECK(back.images[0].annotations[0].instance_id == 7);
  }

  TEST_CASE("an image without annotations keeps an empty list") {
    TempDir tmp;
    auto d = parse_dataset(minimal_json(), tmp.path());
    d.images.push_back({"2", "b.png", tmp / "b.png", 10, 10, {}});
    write_annotations(d, tmp / "out.json");
    const auto back = load_dataset(tmp / "out.json");
    REQUIRE(back.images.size() == 2);
    CHECK(back.images[1].annotations.empty());
    CHECK(structurally_equal(d, back));
  }

  TEST_CASE("save_dataset twice emits identical bytes and round-trips") {
    TempDir tmp;
    const auto d = load_dataset(fixture::data_dir() / "coco10" / "annotations.json");
    save_dataset(d, tmp / "a");
    save_dataset(d, tmp / "b");
    CHECK(fixture::read_tree(tmp / "a") == fixture::read_tree(tmp / "b"));
    const auto back = load_dataset(tmp / "a" / "annotations.json");
    CHECK(structurally_equal(d, back));
    CHECK(back.categories == d.categories);
    for (const auto& r : back.images) CHECK(std::filesystem::exists(r.path));
  }

  TEST_CASE("sample_images keeps dataset order and is seeded") {
    const auto d = load_dataset(fixture::data_dir() / "coco10" / "annotations.json");
    Rng a(5), b(5);
    const auto s1 = sample_images(d, 4, a);
    const auto s2 = sample_images(d, 4, b);
    REQUIRE(s1.images.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(s1.images[i].id == s2.images[i].id);
    for (std::size_t i = 1; i < 4; ++i) CHECK(std::stoi(s1.images[i - 1].id) < std::stoi(s1.images[i].id));
  }
}

TEST_SUITE("image") {
  TEST_CASE("all-black PNG decodes to zeros") {
    TempDir tmp;
    save_image(Image(2, 2, 3, 0.0f), tmp / "black.png");
    const auto img = load_image(tmp / "black.png");
    CHECK(img.width == 2);
    CHECK(img.height == 2);
    CHECK(img.channels == 3);
    for (float v : img.data) CHECK(v == 0.0f);
  }

  TEST_CASE("all-0.5 buffer survives save/load within one level") {
    TempDir tmp;
    save_image(Image(5, 3, 3, 0.5f), tmp / "half.png");
    const auto img = load_image(tmp / "half.png");
    for (float v : img.data) CHECK(std::abs(v - 0.5f) <= 1.0f / 255.0f);
  }

  TEST_CASE("random buffer round-trip error is at most half a quantization step") {
    TempDir tmp;
    std::mt19937 gen(3);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (int channels : {3, 4}) {
      Image img(17, 9, channels);
      for (auto& v : img.data) v = u(gen);
      save_image(img, tmp / "r.png");
      const auto back = load_image(tmp / "r.png");
      REQUIRE(back.data.size() == img.data.size());
      double worst = 0.0;
      for (std::size_t i = 0; i < img.data.size(); ++i) {
        // Direct quantization: nearest of the 256 levels.
        const double expected = std::floor(double(img.data[i]) * 255.0 + 0.5) / 255.0;
        CHECK(std::abs(double(back.data[i]) - expected) < 1e-6);
        worst = std::max(worst, std::abs(double(back.data[i]) - double(img.data[i])));
      }
      CHECK(worst <= 1.0 / (2.0 * 255.0) + 1e-7);
    }
  }

  TEST_CASE("grayscale PNG decodes with the level repeated over RGB") {
    TempDir tmp;
    Image gray(3, 2, 1, 0.25f);
    save_image(gray, tmp / "g.png");
    const auto back = load_image(tmp / "g.png");
    REQUIRE(back.channels == 3);
    for (float v : back.data) CHECK(v == quantize(0.25f) / 255.0f);
  }

  TEST_CASE("PNG encoding is deterministic") {
    const auto img = fixture::noise_image(20, 10, 3, 1);
    CHECK(encode_png(img) == encode_png(img));
  }

  TEST_CASE("JPEG decodes to RGB") {
    const auto img = load_image(fixture::data_dir() / "tiny.jpg");
    CHECK(img.width == 6);
    CHECK(img.height == 4);
    CHECK(img.channels == 3);
    CHECK(std::abs(img.at(2, 2, 0) - 200.0f / 255.0f) < 0.03f);
  }

  TEST_CASE("missing or unsupported files are I/O errors") {
    TempDir tmp;
    CHECK_THROWS_AS(load_image(tmp / "nope.png"), IoError);
    fixture::write_file(tmp / "junk.png", "not an image");
    CHECK_THROWS_AS(load_image(tmp / "junk.png"), Error);
    CHECK_THROWS_AS(save_image(Image(2, 2, 3), tmp / "x.bmp"), IoError);
  }

  TEST_CASE("identity resize returns the source") {
    const auto img = fixture::noise_image(13, 7, 4, 9);
    CHECK(resize_bilinear(img, 13, 7) == img);
  }

  TEST_CASE("halving a checkerboard preserves the mean") {
    Image board(100, 100, 1);
    double mean = 0.0;
    for (int y = 0; y < 100; ++y)
      for (int x = 0; x < 100; ++x) {
        board.at(x, y, 0) = ((x + y) % 2) ? 1.0f : 0.0f;
        mean += board.at(x, y, 0);
      }
    mean /= 10000.0;
    const auto small = resize_bilinear(board, 50, 50);
    double m = 0.0;
    for (float v : small.data) m += v;
    CHECK(std::abs(m / 2500.0 - mean) < 1e-6);
  }
}

TEST_SUITE("predictions") {
  TEST_CASE("one record with score 1.0 is a singleton set") {
    std::istringstream in(R"({"image_id":"1","tal":null,"detections":[{"bbox":[0,0,5,5],"label":0,"score":1.0}]})");
    const auto set = parse_predictions(in);
    CHECK(set.size() == 1);
    const auto preds = set.for_tal(std::nullopt);
    REQUIRE(preds.count("1"));
    CHECK(preds.at("1").size() == 1);
    CHECK(preds.at("1")[0].score == 1.0);
  }

  TEST_CASE("score above 1 is rejected") {
    std::istringstream in(R"({"image_id":"1","detections":[{"bbox":[0,0,5,5],"label":0,"score":1.5}]})");
    CHECK_THROWS_AS(parse_predictions(in), ValidationError);
  }

  TEST_CASE("integer image ids, duplicates and malformed lines") {
    std::istringstream ints(R"({"image_id":42,"detections":[]})");
    CHECK(parse_predictions(ints).for_tal(std::nullopt).count("42") == 1);

    std::istringstream dup("{\"image_id\":\"a\",\"detections\":[]}\n{\"image_id\":\"a\",\"detections\":[]}\n");
    CHECK_THROWS_AS(parse_predictions(dup), ValidationError);

    const std::string first = "{\"image_id\":\"a\",\"detections\":[]}\n";
    std::istringstream bad(first + "{\"image_id\": oops}\n");
    try {
      parse_predictions(bad);
      FAIL("accepted a malformed line");
    } catch (const ParseError& e) {
      CHECK(e.byte_offset() > first.size());
      CHECK(e.byte_offset() < first.size() + 20);
    }
  }

  TEST_CASE("144-TAL scan output for one image gives 144 tagged entries") {
    std::ostringstream out;
    for (int v = 0; v < 12; ++v)
      for (int u = 0; u < 12; ++u)
        out << R"({"image_id":"7","tal":[)" << u * 50 << "," << v * 50
            << R"(],"detections":[{"bbox":[1,1,4,4],"label":0,"score":0.5}]})" << "\n";
    std::istringstream in(out.str());
    const auto set = parse_predictions(in);
    CHECK(set.size() == 144);
    CHECK(set.tals().size() == 144);
    CHECK(set.by_tal().size() == 144);
    CHECK(set.for_tal(TalPosition{550, 550}).at("7").size() == 1);
  }

  TEST_CASE("save/load round trip") {
    TempDir tmp;
    PredictionSet set;
    set.add({"x", std::nullopt}, {{{1, 2, 3, 4}, 1, 0.25}});
    set.add({"x", TalPosition{50, 0}}, {{{1.5, 2, 3, 4}, 0, 0.75}, {{0, 0, 1, 1}, 2, 0.0}});
    save_predictions(set, tmp / "p.jsonl");
    const auto back = load_predictions(tmp / "p.jsonl");
    CHECK(back.entries() == set.entries());
    CHECK(dump_predictions(back) == dump_predictions(set));
  }

  TEST_CASE("validate_against checks ids and labels") {
    const auto d = parse_dataset(minimal_json(), ".");
    ImagePredictions ok{{"1", {{{0, 0, 5, 5}, 0, 0.5}}}};
    CHECK_NOTHROW(validate_against(ok, d));
    ImagePredictions unknown{{"2", {}}};
    CHECK_THROWS_AS(validate_against(unknown, d), ValidationError);
    ImagePredictions label{{"1", {{{0, 0, 5, 5}, 1, 0.5}}}};
    CHECK_THROWS_AS(validate_against(label, d), ValidationError);
  }

  TEST_CASE("missing file is an I/O error") {
    CHECK_THROWS_AS(load_predictions("/nonexistent/p.jsonl"), IoError);
  }
}
