#include <doctest.h>

#include <fstream>
#include <random>

#include "derender/document.hpp"
#include "derender/png_io.hpp"
#include "test_support.hpp"

using namespace derender;
namespace dt = derender::testing;

namespace {

Document two_element_doc() {
  Document d;
  d.canvas_width = 160;
  d.canvas_height = 90;
  d.background = RasterImage::filled(160, 90, Color(20 / 255.0, 40 / 255.0, 60 / 255.0));
  auto a = dt::make_element("One", 0, 24, 10, 40);
  a.effects.fill.color = Color(1, 128 / 255.0, 0);
  a.effects.border = {true, 2, Color(0, 0, 1)};
  auto b = dt::make_element("Two", 7, 30, 60, 80);
  b.char_offsets = {{0, 0}, {0.25, -1.5}, {0, 0}};
  b.effects.shadow = {true, 1.25, 2, -1, Color(10 / 255.0, 10 / 255.0, 10 / 255.0)};
  b.effects.fill.color = Color(200 / 255.0, 1, 1);
  d.elements = {a, b};
  return d;
}

bool same_element(const TextElement& a, const TextElement& b) {
  return a.text == b.text && a.font_index == b.font_index && a.font_size == b.font_size && a.origin == b.origin &&
         a.char_offsets == b.char_offsets && a.effects == b.effects;
}

}  // namespace

TEST_CASE("two-element document round trips") {
  const auto doc = two_element_doc();
  const auto path = dt::scratch_dir() / "two.json";
  save_document(doc, path);
  const auto back = load_document(path);
  CHECK(back.canvas_width == doc.canvas_width);
  CHECK(back.canvas_height == doc.canvas_height);
  CHECK(back.background == doc.background);
  REQUIRE(back.elements.size() == 2);
  CHECK(same_element(back.elements[0], doc.elements[0]));
  CHECK(same_element(back.elements[1], doc.elements[1]));
  CHECK(serialize_document(back) == serialize_document(doc));
}

TEST_CASE("colours are stored as 8-bit integers") {
  auto doc = two_element_doc();
  doc.elements[0].effects.fill.color = Color(0.5, 0.5, 0.5);
  const auto j = document_to_json(doc);
  CHECK(j["elements"][0]["effects"]["fill"]["color"][0] == 128);
  const auto back = document_from_json(j);
  CHECK(back.elements[0].effects.fill.color[0] == doctest::Approx(0.50196).epsilon(1e-5));
}

TEST_CASE("non-uniform backgrounds are embedded losslessly at 8 bits") {
  std::mt19937_64 rng(81);
  auto doc = two_element_doc();
  doc.background = quantize_8bit(dt::random_image(rng, 160, 90));
  const auto j = document_to_json(doc);
  CHECK(j["background"].contains("png_base64"));
  CHECK(document_from_json(j).background == doc.background);
  CHECK(document_to_json(two_element_doc(), BackgroundEncoding::inline_png)["background"].contains("png_base64"));
}

TEST_CASE("schema violations name the field") {
  auto j = document_to_json(two_element_doc());
  auto bad = j;
  bad["elements"][1]["effects"]["fill"]["sparkle"] = true;
  CHECK_THROWS_WITH_AS(document_from_json(bad), doctest::Contains("sparkle"), Error);
  bad = j;
  bad["elements"][0].erase("font_size");
  CHECK_THROWS_WITH_AS(document_from_json(bad), doctest::Contains("font_size"), Error);
  bad = j;
  bad["version"] = 2;
  CHECK_THROWS_WITH_AS(document_from_json(bad), doctest::Contains("version"), Error);
  bad = j;
  bad["elements"][0]["effects"]["border"]["color"] = {1, 2};
  CHECK_THROWS_WITH_AS(document_from_json(bad), doctest::Contains("color"), Error);
  CHECK_THROWS_AS(parse_document("{not json"), Error);
}

TEST_CASE("apply_patch edits existing fields with type checks") {
  const auto j = document_to_json(two_element_doc());
  auto k = apply_patch(j, "elements[0].text", "\"NEW\"");
  CHECK(k["elements"][0]["text"] == "NEW");
  k = apply_patch(j, "elements[1].text", "bare");
  CHECK(k["elements"][1]["text"] == "bare");
  k = apply_patch(j, "elements[0].effects.border.visible", "false");
  CHECK(k["elements"][0]["effects"]["border"]["visible"] == false);
  k = apply_patch(j, "elements[0].font_size", "-3");
  CHECK(k["elements"][0]["font_size"] == -3);
  CHECK_THROWS_WITH_AS(apply_patch(j, "elements[0].nope", "1"), doctest::Contains("elements[0].nope"), Error);
  CHECK_THROWS_WITH_AS(apply_patch(j, "elements[5].text", "\"x\""), doctest::Contains("elements[5]"), Error);
  CHECK_THROWS_WITH_AS(apply_patch(j, "elements[0].effects.border.visible", "3"),
                       doctest::Contains("type mismatch"), Error);
  CHECK_THROWS_AS(apply_patch(j, "elements[0].effects.fill.color", "[1,2]"), Error);
}

TEST_CASE("background paths resolve relative to the document") {
  std::mt19937_64 rng(82);
  const auto dir = dt::scratch_dir() / "relbg";
  std::filesystem::create_directories(dir);
  const auto bg = quantize_8bit(dt::random_image(rng, 160, 90));
  write_png(dir / "bg.png", bg);
  auto j = document_to_json(two_element_doc());
  j["background"] = {{"png", "bg.png"}};
  std::ofstream(dir / "doc.json") << j.dump();
  CHECK(load_document(dir / "doc.json").background == bg);
}

TEST_CASE("base64 round trip") {
  const std::vector<std::uint8_t> bytes = {0, 1, 2, 250, 255, 17, 99};
  CHECK(base64_decode(base64_encode(bytes)) == bytes);
  CHECK(base64_encode(std::vector<std::uint8_t>{'M', 'a'}) == "TWE=");
  CHECK_THROWS_AS(base64_decode("@@@@"), Error);
}
