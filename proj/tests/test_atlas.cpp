#include <doctest.h>

#include <fstream>

#include "derender/atlas.hpp"
#include "test_support.hpp"

using namespace derender;
namespace dt = derender::testing;

namespace {

GlyphAtlas toy_atlas() {
  const std::filesystem::path dir = DERENDER_TEST_FONT_DIR;
  const std::vector<std::filesystem::path> files = {dir / "DejaVuSans.ttf", dir / "DejaVuSerif.ttf"};
  return build_atlas(files, "AM.g", 32);
}

double support(const AlphaMap& a) { return (a.plane() > 0.0f).cast<double>().sum(); }

}  // namespace

TEST_CASE("shared atlas has the expected shape") {
  const auto& a = dt::atlas();
  CHECK(a.font_count() == 20);
  CHECK(a.glyph_count() == 94);
  CHECK(a.glyphs() == default_glyph_set());
  CHECK(a.cell_resolution() == 64);
  CHECK(a.query(0, 'A', GlyphVariant::fill()).width() == 64);
}

TEST_CASE("every entry is opaque at its core and borders grow with the bin") {
  const auto& a = dt::atlas();
  for (int f = 0; f < a.font_count(); ++f) {
    for (int g = 0; g < a.glyph_count(); ++g) {
      const auto& e = a.entry(f, g);
      CHECK(e.fill.plane().maxCoeff() > 0.5f);
      CHECK(e.fill.in_unit_range());
      CHECK(support(e.border[kBorderBins - 1]) >= support(e.border[0]));
      // Stroke maps include the interior.
      CHECK((e.border[0].plane() >= e.fill.plane() - 1e-6f).all());
    }
  }
}

TEST_CASE("'.' covers less than 'M'") {
  const auto& a = dt::atlas();
  for (int f = 0; f < a.font_count(); ++f) {
    CHECK(support(a.query(f, '.', GlyphVariant::fill())) < support(a.query(f, 'M', GlyphVariant::fill())));
  }
}

TEST_CASE("query returns the stored maps") {
  const auto& a = dt::atlas();
  const int g = a.glyph_index('A');
  CHECK(&a.query(0, 'A', GlyphVariant::fill()) == &a.entry(0, g).fill);
  CHECK(&a.query(0, 'A', GlyphVariant::border(3)) == &a.entry(0, g).border[2]);
  CHECK_THROWS_AS(a.query(0, ' ', GlyphVariant::fill()), Error);
  CHECK_THROWS_AS(a.query(0, 'A', GlyphVariant::border(6)), Error);
  CHECK_THROWS_AS(a.query(20, 'A', GlyphVariant::fill()), Error);
}

TEST_CASE("save/load round trip is bit-identical") {
  const auto toy = toy_atlas();
  CHECK(toy.font_count() == 2);
  const auto path = dt::scratch_dir() / "toy.atlas";
  save_atlas(toy, path);
  CHECK(load_atlas(path) == toy);

  const auto shards = dt::scratch_dir() / "toy_shards";
  save_atlas_sharded(toy, shards);
  CHECK(load_atlas(shards) == toy);
  const auto sub = load_atlas(shards, std::vector<int>{1});
  CHECK(sub.font_count() == 1);
  CHECK(sub == toy.subset(std::vector<int>{1}));
  CHECK(sub.entry(0, 0).fill == toy.entry(1, 0).fill);
}

TEST_CASE("bad atlas files are rejected") {
  const auto path = dt::scratch_dir() / "bad.atlas";
  std::ofstream(path) << "NOTATLAS and some more bytes";
  CHECK_THROWS_WITH_AS(load_atlas(path), doctest::Contains("bad magic"), Error);

  const auto toy = toy_atlas();
  const auto good = dt::scratch_dir() / "trunc.atlas";
  save_atlas(toy, good);
  std::filesystem::resize_file(good, std::filesystem::file_size(good) / 2);
  CHECK_THROWS_WITH_AS(load_atlas(good), doctest::Contains("truncated"), Error);
}

TEST_CASE("build_atlas rejects missing fonts and empty glyph sets") {
  const std::filesystem::path dir = DERENDER_TEST_FONT_DIR;
  const std::vector<std::filesystem::path> missing = {dir / "NoSuchFont.ttf"};
  CHECK_THROWS_WITH_AS(build_atlas(missing, "A"), doctest::Contains("NoSuchFont"), Error);
  const std::vector<std::filesystem::path> cm = {dir / "cmr10.ttf"};
  CHECK_NOTHROW(build_atlas(cm, "AZaz09", 16));
  CHECK_THROWS_AS(build_atlas(cm, "", 16), Error);
}
