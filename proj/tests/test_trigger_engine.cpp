#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <boost/math/distributions/chi_squared.hpp>

#include "odp/error.hpp"
#include "odp/image.hpp"
#include "odp/rng.hpp"
#include "odp/trigger.hpp"
#include "support/fixtures.hpp"

using namespace odp;
using fixture::TempDir;

namespace {

Image solid(int w, int h, int c, float v) { return Image(w, h, c, v); }

// Upper-tail probability of Pearson's statistic against a uniform expectation.
double uniformity_p_value(const std::vector<long>& counts) {
  long total = 0;
  for (long c : counts) total += c;
  const double expected = static_cast<double>(total) / static_cast<double>(counts.size());
  double stat = 0.0;
  for (long c : counts) stat += (c - expected) * (c - expected) / expected;
  boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

TriggerBank four_view_bank() {
  std::vector<Image> views;
  for (int i = 0; i < 4; ++i) views.push_back(solid(10, 10, 3, 0.2f * static_cast<float>(i + 1)));
  return make_trigger_bank(std::move(views));
}

}  // namespace

TEST_SUITE("trigger bank") {
  TEST_CASE("one view without weights gets weight 1") {
    const auto bank = make_trigger_bank({solid(4, 4, 3, 1.0f)});
    REQUIRE(bank.weights.size() == 1);
    CHECK(bank.weights[0] == 1.0);
    CHECK(bank.views[0].rgba.channels == 4);
  }

  TEST_CASE("eight uniform views weigh 0.125 each") {
    std::vector<Image> views(8, solid(4, 4, 4, 1.0f));
    const auto bank = make_trigger_bank(views);
    for (double w : bank.weights) CHECK(w == 0.125);
  }

  TEST_CASE("weights must sum to one, match the view count and be non-negative") {
    std::vector<Image> views(3, solid(4, 4, 3, 1.0f));
    CHECK_THROWS_AS(make_trigger_bank(views, std::vector<double>{0.5, 0.5, 0.1}), ValidationError);
    CHECK_THROWS_AS(make_trigger_bank(views, std::vector<double>{0.5, 0.5}), ValidationError);
    CHECK_THROWS_AS(make_trigger_bank(views, std::vector<double>{1.2, -0.2, 0.0}), ValidationError);
    CHECK_NOTHROW(make_trigger_bank(views, std::vector<double>{0.2, 0.3, 0.5}));
    CHECK_THROWS_AS(make_trigger_bank({}), ValidationError);
  }

  TEST_CASE("fully transparent view is rejected") {
    CHECK_THROWS_AS(make_trigger_bank({solid(4, 4, 4, 0.0f)}), ValidationError);
  }

  TEST_CASE("alpha is binarized at one half") {
    Image v(2, 1, 4, 1.0f);
    v.at(0, 0, 3) = 0.49f;
    v.at(1, 0, 3) = 0.51f;
    const auto bank = make_trigger_bank({v});
    CHECK(bank.views[0].rgba.at(0, 0, 3) == 0.0f);
    CHECK(bank.views[0].rgba.at(1, 0, 3) == 1.0f);
  }

  TEST_CASE("bank directory loads views in name order plus weights.json") {
    const auto bank = build_trigger_bank(fixture::data_dir() / "trigger");
    REQUIRE(bank.views.size() == 2);
    CHECK(bank.views[0].rgba.width == 16);
    CHECK(bank.views[1].rgba.height == 12);
    CHECK(bank.views[1].rgba.at(0, 0, 3) == 0.0f);

    TempDir tmp;
    std::filesystem::copy(fixture::data_dir() / "trigger", tmp.path(), std::filesystem::copy_options::recursive);
    fixture::write_file(tmp / "weights.json", R"({"weights": [0.25, 0.75]})");
    CHECK(build_trigger_bank(tmp.path()).weights == std::vector<double>{0.25, 0.75});
    CHECK(build_trigger_bank(tmp.path(), std::vector<double>{0.5, 0.5}).weights == std::vector<double>{0.5, 0.5});
    CHECK_THROWS_AS(build_trigger_bank(tmp / "missing"), IoError);
  }
}

TEST_SUITE("placement sampling") {
  TEST_CASE("degenerate bounds give s=(50,50), p=(0,0)") {
    const auto bank = make_trigger_bank({solid(8, 8, 3, 1.0f)});
    Rng rng(1);
    const auto pl = sample_placement(rng, bank, SamplingSpec{}, 640, 640);
    CHECK(pl.s == PixelSize{50, 50});
    CHECK(pl.p == PixelPoint{0, 0});
    CHECK(pl.view == 0);
  }

  TEST_CASE("invalid specs are rejected") {
    const auto bank = make_trigger_bank({solid(8, 8, 3, 1.0f)});
    Rng rng(1);
    SamplingSpec zero;
    zero.scale_low = zero.scale_high = 0;
    CHECK_THROWS_AS(sample_placement(rng, bank, zero, 64, 64), ValidationError);
    SamplingSpec inverted;
    inverted.scale_low = 20;
    inverted.scale_high = 10;
    CHECK_THROWS_AS(sample_placement(rng, bank, inverted, 64, 64), ValidationError);
    SamplingSpec wide;
    wide.u_high = 64;
    CHECK_THROWS_AS(sample_placement(rng, bank, wide, 64, 64), ValidationError);
    SamplingSpec empty_range;
    empty_range.v_low = empty_range.v_high = 3;
    CHECK_THROWS_AS(sample_placement(rng, bank, empty_range, 64, 64), ValidationError);
  }

  TEST_CASE("view frequencies stay within 3 sigma of the weights") {
    const auto bank = four_view_bank();
    Rng rng(123);
    const int n = 100000;
    std::vector<long> counts(4, 0);
    for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(sample_placement(rng, bank, SamplingSpec{}, 64, 64).view)];
    const double sigma = std::sqrt(0.25 * 0.75 / n);
    for (long c : counts) CHECK(std::abs(static_cast<double>(c) / n - 0.25) <= 3 * sigma);
  }

  TEST_CASE("scale and location marginals are uniform") {
    const auto bank = make_trigger_bank({solid(8, 8, 3, 1.0f)});
    SamplingSpec spec;
    spec.scale_low = 30;
    spec.scale_high = 70;
    spec.u_low = 0;
    spec.u_high = 100;
    spec.v_low = 200;
    spec.v_high = 260;
    Rng rng(42);
    std::vector<long> scale(41, 0), u(100, 0), v(60, 0);
    for (int i = 0; i < 100000; ++i) {
      const auto pl = sample_placement(rng, bank, spec, 640, 640);
      REQUIRE(pl.s.w == pl.s.h);
      ++scale[static_cast<std::size_t>(pl.s.w - 30)];
      ++u[static_cast<std::size_t>(pl.p.x)];
      ++v[static_cast<std::size_t>(pl.p.y - 200)];
    }
    CHECK(uniformity_p_value(scale) > 0.01);
    CHECK(uniformity_p_value(u) > 0.01);
    CHECK(uniformity_p_value(v) > 0.01);
  }

  TEST_CASE("location is pulled in so the trigger fits") {
    const auto bank = make_trigger_bank({solid(8, 8, 3, 1.0f)});
    SamplingSpec spec;
    spec.scale_low = spec.scale_high = 20;
    spec.u_high = 63;
    spec.v_high = 63;
    Rng rng(9);
    for (int i = 0; i < 2000; ++i) {
      const auto pl = sample_placement(rng, bank, spec, 64, 64);
      CHECK(pl.p.x + pl.s.w <= 64);
      CHECK(pl.p.y + pl.s.h <= 64);
    }
  }

  TEST_CASE("aspect ratio follows the view") {
    const auto bank = make_trigger_bank({solid(20, 10, 3, 1.0f), solid(10, 40, 3, 1.0f)});
    CHECK(trigger_size_for(bank.views[0], 50, true) == PixelSize{50, 25});
    CHECK(trigger_size_for(bank.views[1], 50, true) == PixelSize{13, 50});
    CHECK(trigger_size_for(bank.views[1], 50, false) == PixelSize{50, 50});
  }

  TEST_CASE("fixed seed gives identical placement sequences") {
    const auto bank = four_view_bank();
    SamplingSpec spec;
    spec.scale_low = 10;
    spec.scale_high = 60;
    spec.u_high = 500;
    spec.v_high = 500;
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) CHECK(sample_placement(a, bank, spec, 640, 640) == sample_placement(b, bank, spec, 640, 640));
  }
}

TEST_SUITE("masks") {
  TEST_CASE("rectangle at the origin covers s_x * s_y pixels") {
    const auto m = make_mask(TriggerPlacement{{0, 0}, {50, 50}, 0}, 640, 640);
    CHECK(m.count() == 2500);
  }

  TEST_CASE("clipped rectangle matches direct enumeration") {
    auto enumerate = [](PixelPoint p, PixelSize s, int w, int h) {
      std::size_t n = 0;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) n += x >= p.x && x < p.x + s.w && y >= p.y && y < p.y + s.h;
      return n;
    };
    CHECK(make_mask(TriggerPlacement{{639, 639}, {50, 50}, 0}, 640, 640).count() == 1);
    std::mt19937 gen(4);
    std::uniform_int_distribution<int> pos(-30, 90), side(1, 40);
    for (int i = 0; i < 200; ++i) {
      const PixelPoint p{pos(gen), pos(gen)};
      const PixelSize s{side(gen), side(gen)};
      CHECK(make_mask(TriggerPlacement{p, s, 0}, 64, 48).count() == enumerate(p, s, 64, 48));
    }
  }

  TEST_CASE("unclipped rectangles always have area s_x * s_y") {
    std::mt19937 gen(8);
    for (int i = 0; i < 300; ++i) {
      const int w = std::uniform_int_distribution<int>(1, 60)(gen);
      const int h = std::uniform_int_distribution<int>(1, 60)(gen);
      const int x = std::uniform_int_distribution<int>(0, 100 - w)(gen);
      const int y = std::uniform_int_distribution<int>(0, 80 - h)(gen);
      CHECK(make_mask(TriggerPlacement{{x, y}, {w, h}, 0}, 100, 80).count() == static_cast<std::size_t>(w * h));
    }
  }

  TEST_CASE("silhouette mode keeps only opaque trigger pixels") {
    const auto bank = build_trigger_bank(fixture::data_dir() / "trigger");
    const auto t = transform_trigger(bank, TriggerPlacement{{5, 5}, {16, 12}, 1});
    std::size_t opaque = 0;
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 16; ++x) opaque += t.pixels.at(x, y, 3) == 1.0f;
    const auto sil = make_mask(t, 40, 40, MaskMode::Silhouette);
    CHECK(sil.count() == opaque);
    CHECK(sil.count() < 16 * 12);
    CHECK(make_mask(t, 40, 40, MaskMode::Rectangle).count() == 16 * 12);
  }
}

TEST_SUITE("trigger transform") {
  TEST_CASE("native size leaves the view unchanged") {
    const auto bank = build_trigger_bank(fixture::data_dir() / "trigger");
    const auto t = transform_trigger(bank, TriggerPlacement{{0, 0}, {16, 16}, 0});
    CHECK(t.pixels == bank.views[0].rgba);
  }

  TEST_CASE("default trigger size is 50x50") {
    const auto bank = build_trigger_bank(fixture::data_dir() / "trigger");
    const int side = presets::kDefaultTriggerSize;
    const auto t = transform_trigger(bank, TriggerPlacement{{0, 0}, trigger_size_for(bank.views[0], side, true), 0});
    CHECK(t.pixels.width == 50);
    CHECK(t.pixels.height == 50);
    for (int y = 0; y < 50; ++y)
      for (int x = 0; x < 50; ++x) {
        const float a = t.pixels.at(x, y, 3);
        CHECK((a == 0.0f || a == 1.0f));
      }
  }
}

TEST_SUITE("insertion") {
  TEST_CASE("REP on a 4x4 black image touches exactly the 2x2 region") {
    const auto bank = make_trigger_bank({solid(2, 2, 3, 1.0f)});
    const auto t = transform_trigger(bank, TriggerPlacement{{0, 0}, {2, 2}, 0});
    const auto out = insert_rep(solid(4, 4, 3, 0.0f), t);
    int ones = 0;
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) ones += out.at(x, y, 0) == 1.0f && out.at(x, y, 1) == 1.0f && out.at(x, y, 2) == 1.0f;
    CHECK(ones == 4);
    CHECK(out.at(1, 1, 0) == 1.0f);
    CHECK(out.at(2, 2, 0) == 0.0f);
  }

  TEST_CASE("REP is idempotent") {
    const auto bank = build_trigger_bank(fixture::data_dir() / "trigger");
    const auto img = fixture::noise_image(40, 30, 3, 2);
    for (int view : {0, 1})
      for (auto mode : {MaskMode::Rectangle, MaskMode::Silhouette}) {
        const auto t = transform_trigger(bank, TriggerPlacement{{30, 20}, {16, 16}, view});
        const auto once = insert_rep(img, t, mode);
        CHECK(insert_rep(once, t, mode) == once);
      }
  }

  TEST_CASE("REP and SUP leave unmasked pixels bitwise equal and stay in range") {
    std::mt19937 gen(17);
    const auto bank = build_trigger_bank(fixture::data_dir() / "trigger");
    for (int trial = 0; trial < 40; ++trial) {
      const auto img = fixture::noise_image(48, 40, 3, static_cast<unsigned>(trial));
      const TriggerPlacement pl{{std::uniform_int_distribution<int>(-10, 45)(gen), std::uniform_int_distribution<int>(-10, 35)(gen)},
                                {std::uniform_int_distribution<int>(3, 30)(gen), std::uniform_int_distribution<int>(3, 30)(gen)},
                                trial % 2};
      const auto t = transform_trigger(bank, pl);
      const auto mode = trial % 3 ? MaskMode::Silhouette : MaskMode::Rectangle;
      const auto mask = make_mask(t, img.width, img.height, mode);
      const double coeff = trial % 2 ? presets::kSupCoefficientLow : presets::kSupCoefficientHigh;
      for (const auto& out : {insert_rep(img, t, mode), insert_sup(img, t, coeff, mode)}) {
        for (int y = 0; y < img.height; ++y)
          for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
              if (!mask.at(x, y)) CHECK(out.at(x, y, c) == img.at(x, y, c));
              CHECK(out.at(x, y, c) >= 0.0f);
              CHECK(out.at(x, y, c) <= 1.0f);
            }
      }
    }
  }

  TEST_CASE("SUP with coefficient 0 is the identity") {
    const auto bank = build_trigger_bank(fixture::data_dir() / "trigger");
    const auto img = fixture::noise_image(20, 20, 3, 5);
    const auto t = transform_trigger(bank, TriggerPlacement{{2, 2}, {16, 16}, 0});
    CHECK(insert_sup(img, t, 0.0) == img);
  }

  TEST_CASE("SUP of 0.5 on 0.5 with coefficient 2 clamps to 1") {
    const auto bank = make_trigger_bank({solid(4, 4, 3, 0.5f)});
    const auto t = transform_trigger(bank, TriggerPlacement{{1, 1}, {4, 4}, 0});
    const auto out = insert_sup(solid(8, 8, 3, 0.5f), t, presets::kSupCoefficientLow, MaskMode::Rectangle);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        const bool inside = x >= 1 && x < 5 && y >= 1 && y < 5;
        for (int c = 0; c < 3; ++c) CHECK(out.at(x, y, c) == (inside ? 1.0f : 0.5f));
      }
  }

  TEST_CASE("superimposition presets") {
    CHECK(presets::kSupCoefficientLow == 2.0);
    CHECK(presets::kSupCoefficientHigh == 8.0);
    CHECK(presets::kBlendedMix == 0.5);
    const auto bank = make_trigger_bank({solid(4, 4, 3, 0.05f)});
    const auto t = transform_trigger(bank, TriggerPlacement{{0, 0}, {4, 4}, 0});
    const auto img = solid(4, 4, 3, 0.1f);
    CHECK(insert_sup(img, t, 2.0).at(0, 0, 0) == doctest::Approx(0.2f));
    CHECK(insert_sup(img, t, 8.0).at(0, 0, 0) == doctest::Approx(0.5f));
  }

  TEST_CASE("blend endpoints and midpoint") {
    const auto img = fixture::noise_image(12, 9, 3, 1);
    const auto trig = fixture::noise_image(12, 9, 4, 2);
    CHECK(insert_blend(img, trig, 0.0) == img);
    CHECK(insert_blend(img, trig, 1.0) == take_channels(trig, 3));
    const auto mid = insert_blend(img, trig, presets::kBlendedMix);
    CHECK(mid.at(3, 4, 1) == doctest::Approx(0.5 * (img.at(3, 4, 1) + trig.at(3, 4, 1))));
    CHECK_THROWS_AS(insert_blend(img, trig, 1.5), ValidationError);
    CHECK_THROWS_AS(insert_blend(img, fixture::noise_image(5, 5, 3, 1), 0.5), ValidationError);
  }

  TEST_CASE("fixed seed insertion is byte-identical across runs") {
    const auto bank = build_trigger_bank(fixture::data_dir() / "trigger");
    SamplingSpec spec;
    spec.scale_low = 8;
    spec.scale_high = 24;
    spec.u_high = 40;
    spec.v_high = 30;
    auto run = [&] {
      Rng rng = Rng::derive(42, "insertion");
      std::vector<std::vector<std::uint8_t>> out;
      for (int i = 0; i < 10; ++i) {
        const auto img = fixture::noise_image(64, 48, 3, static_cast<unsigned>(i));
        const auto t = transform_trigger(bank, sample_placement(rng, bank, spec, 64, 48));
        out.push_back(encode_png(insert_sup(insert_rep(img, t), t, 2.0)));
      }
      return out;
    };
    CHECK(run() == run());
  }
}

TEST_SUITE("sinusoidal pattern") {
  TEST_CASE("column 0 is zero for frequency 1") {
    const auto p = make_sig_pattern(8, 64, 0.1, 1.0);
    for (int y = 0; y < 8; ++y) CHECK(p.at(0, y, 0) == 0.0f);
  }

  TEST_CASE("every column is constant down the rows") {
    const auto p = make_sig_pattern(10, 37, 0.3, 3.0);
    for (int x = 0; x < 37; ++x)
      for (int y = 1; y < 10; ++y)
        for (int c = 0; c < 3; ++c) CHECK(p.at(x, y, c) == p.at(x, 0, c));
  }

  TEST_CASE("mean over one full period vanishes") {
    const int w = 640;
    const auto p = make_sig_pattern(1, w, 0.2, 1.0, 1);
    double sum = 0.0;
    for (int x = 0; x < w; ++x) sum += p.at(x, 0, 0);
    // The integral of sin over a full period is 0.
    CHECK(std::abs(sum / w) < 1e-6);
    const int x = 160;
    CHECK(p.at(x, 0, 0) == doctest::Approx(0.2 * std::sin(2.0 * std::numbers::pi * x / w)));
  }

  TEST_CASE("superimposing the pattern clamps to [0,1]") {
    const auto img = solid(16, 4, 3, 0.95f);
    const auto out = superimpose(img, make_sig_pattern(4, 16, 0.5, 1.0));
    for (float v : out.data) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
    CHECK(out.at(4, 0, 0) == 1.0f);
    CHECK_THROWS_AS(superimpose(img, make_sig_pattern(4, 15, 0.5, 1.0)), ValidationError);
  }
}
