#include <doctest.h>

#include <fstream>

#include <json.hpp>

#include "derender/datagen.hpp"
#include "derender/decompose.hpp"
#include "derender/document.hpp"
#include "derender/png_io.hpp"
#include "derender/recovery_suite.hpp"
#include "test_support.hpp"

using namespace derender;
namespace dt = derender::testing;

TEST_CASE("samples render bit-identically and regenerate identically") {
  GenConfig gc;
  gc.count = 20;
  const auto a = generate(gc, dt::atlas());
  const auto b = generate(gc, dt::atlas());
  REQUIRE(a.size() == 20);
  for (int i = 0; i < 20; ++i) {
    CHECK(render_document(a[i].truth, dt::atlas()) == a[i].image);
    CHECK(a[i].image == b[i].image);
    CHECK(serialize_document(a[i].truth) == serialize_document(b[i].truth));
    // Any sample can be produced on its own.
    CHECK(generate_sample(gc, dt::atlas(), i).image == a[i].image);
  }
  gc.seed = 43;
  CHECK_FALSE(generate_sample(gc, dt::atlas(), 0).image == a[0].image);
}

TEST_CASE("ground truth satisfies the document invariants and keeps the fill observable") {
  GenConfig gc;
  gc.seed = 5;
  gc.count = 60;
  gc.words_per_sample = 2;
  gc.backgrounds = {BackgroundKind::flat, BackgroundKind::linear_gradient, BackgroundKind::noise_texture};
  for (const auto& s : generate(gc, dt::atlas())) {
    CHECK_NOTHROW(validate_document(s.truth, dt::atlas()));
    REQUIRE(s.truth.elements.size() == 2);
    REQUIRE(s.word_boxes.size() == 2);
    for (std::size_t k = 0; k < 2; ++k) {
      const auto& e = s.truth.elements[k];
      CHECK(e.font_size == std::round(e.font_size));
      CHECK(e.font_size >= gc.min_font_size);
      CHECK(e.font_size <= gc.max_font_size);
      const auto& b = s.word_boxes[k];
      CHECK(b == word_pixel_box(e, dt::atlas(), s.truth.canvas_width, s.truth.canvas_height));
      // The fill is invertible on its own against the background.
      const auto fx = render_effect_alphas(e, dt::atlas(), s.truth.canvas_width, s.truth.canvas_height);
      CHECK_NOTHROW(invert_layer(composite_element(s.truth.background, fx, e.effects), s.truth.background, fx.fill,
                                 b));
    }
  }
}

TEST_CASE("border incidence over 1000 samples matches the configured probability") {
  GenConfig gc;
  gc.seed = 99;
  gc.count = 1000;
  gc.canvas_min_width = gc.canvas_max_width = 200;
  gc.canvas_min_height = gc.canvas_max_height = 100;
  gc.max_font_size = 40;
  int borders = 0, shadows = 0;
  for (int i = 0; i < gc.count; ++i) {
    const auto s = generate_sample(gc, dt::atlas(), i);
    borders += s.truth.elements[0].effects.border.visible;
    shadows += s.truth.elements[0].effects.shadow.visible;
  }
  CHECK(borders >= 450);
  CHECK(borders <= 550);
  CHECK(shadows >= 450);
  CHECK(shadows <= 550);
}

TEST_CASE("background kinds") {
  CHECK(background_kind_from_string("linear-gradient") == BackgroundKind::linear_gradient);
  CHECK(to_string(BackgroundKind::noise_texture) == "noise-texture");
  CHECK_THROWS_AS(background_kind_from_string("plaid"), Error);

  GenConfig gc;
  gc.count = 3;
  gc.backgrounds = {BackgroundKind::user_image};
  gc.user_background_dir = dt::scratch_dir() / "empty_backgrounds";
  std::filesystem::create_directories(gc.user_background_dir);
  CHECK_THROWS_WITH_AS(generate(gc, dt::atlas()), doctest::Contains("empty_backgrounds"), Error);

  std::mt19937_64 rng(61);
  write_png(gc.user_background_dir / "photo.png", quantize_8bit(dt::random_image(rng, 64, 48)));
  for (const auto& s : generate(gc, dt::atlas())) CHECK(render_document(s.truth, dt::atlas()) == s.image);
}

TEST_CASE("invalid configs are rejected") {
  auto bad = [](auto mutate) {
    GenConfig gc;
    mutate(gc);
    return gc;
  };
  CHECK_THROWS_AS(validate(bad([](GenConfig& c) { c.words.clear(); }), dt::atlas()), Error);
  CHECK_THROWS_AS(validate(bad([](GenConfig& c) { c.words = {"a b"}; }), dt::atlas()), Error);
  CHECK_THROWS_AS(validate(bad([](GenConfig& c) { c.border_probability = 1.5; }), dt::atlas()), Error);
  CHECK_THROWS_AS(validate(bad([](GenConfig& c) { c.min_font_size = 70; }), dt::atlas()), Error);
  CHECK_THROWS_AS(validate(bad([](GenConfig& c) { c.font_indices = {20}; }), dt::atlas()), Error);
  CHECK_THROWS_AS(validate(bad([](GenConfig& c) { c.backgrounds.clear(); }), dt::atlas()), Error);
  CHECK_NOTHROW(validate(GenConfig{}, dt::atlas()));
}

TEST_CASE("write_corpus and load_corpus round trip") {
  GenConfig gc;
  gc.count = 4;
  gc.seed = 77;
  const auto dir = dt::scratch_dir() / "corpus";
  int seen = 0;
  write_corpus(gc, dt::atlas(), dir, [&](int) { ++seen; });
  CHECK(seen == 4);
  const auto manifest = nlohmann::json::parse(std::ifstream(dir / "manifest.json"));
  CHECK(manifest["samples"].size() == 4);
  CHECK(manifest["config"]["seed"] == 77);

  const auto loaded = load_corpus(dir, dt::atlas());
  const auto fresh = generate(gc, dt::atlas());
  REQUIRE(loaded.size() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(loaded[i].image == quantize_8bit(fresh[i].image));
    CHECK(loaded[i].word_boxes == fresh[i].word_boxes);
    CHECK(read_file_bytes(dir / fmt::format("{:04}.png", i)) == encode_png(fresh[i].image));
  }
}
