#include <doctest.h>

#include <random>

#include "derender/datagen.hpp"
#include "derender/export.hpp"
#include "test_support.hpp"

using namespace derender;
namespace dt = derender::testing;

namespace {

std::vector<Box> layout_boxes(const TextElement& e) {
  std::vector<Box> out;
  for (const auto& c : layout(e, dt::atlas()).chars) out.push_back(c.box);
  return out;
}

}  // namespace

TEST_CASE("harden reads discrete values off one-hot parameters") {
  std::mt19937_64 rng(71);
  for (int t = 0; t < 20; ++t) {
    auto e = dt::random_element(rng, 200, 110);
    e.effects.border.visible = rng() % 2;
    e.effects.shadow.visible = rng() % 2;
    const auto p = params_from_element(e, dt::atlas(), 200, 110, {});
    const HardStyle h = harden(p);
    CHECK(h.font_index == e.font_index);
    CHECK(h.effects.border.visible == e.effects.border.visible);
    CHECK(h.effects.shadow.visible == e.effects.shadow.visible);
    CHECK(h.effects.border.width_bin == e.effects.border.width_bin);
    CHECK((h.effects.fill.color - e.effects.fill.color).abs().maxCoeff() < 1e-9);
    CHECK(h.effects.shadow.blur == doctest::Approx(e.effects.shadow.blur));
    CHECK(h.effects.shadow.offset_x == e.effects.shadow.offset_x);
  }
}

TEST_CASE("visibility logit exactly 0 hardens to invisible") {
  auto e = dt::make_element("Zero", 2, 30, 10, 40);
  auto p = params_from_element(e, dt::atlas(), 120, 60, {});
  p.border_visibility_logit = 0;
  p.shadow_visibility_logit = 0;
  const auto h = harden(p);
  CHECK_FALSE(h.effects.border.visible);
  CHECK_FALSE(h.effects.shadow.visible);
  p.border_visibility_logit = 1e-9;
  CHECK(harden(p).effects.border.visible);
}

TEST_CASE("harden of datagen truth reproduces the document fields") {
  GenConfig gc;
  gc.count = 30;
  gc.seed = 3;
  for (const auto& s : generate(gc, dt::atlas())) {
    const auto& e = s.truth.elements[0];
    const auto p = params_from_element(e, dt::atlas(), s.truth.canvas_width, s.truth.canvas_height, {});
    const auto h = harden(p);
    CHECK(h.font_index == e.font_index);
    CHECK(h.effects.border.visible == e.effects.border.visible);
    CHECK(h.effects.shadow.visible == e.effects.shadow.visible);
    if (e.effects.border.visible) CHECK(h.effects.border.width_bin == e.effects.border.width_bin);
    const auto x = export_element(p, dt::atlas(), std::nullopt);
    CHECK(x.font_size == e.font_size);
    CHECK(x.origin == e.origin);
    CHECK(x.char_offsets.empty());
    CHECK(x.effects.border.visible == e.effects.border.visible);
  }
}

TEST_CASE("char_boxes of identity parameters match layout") {
  std::mt19937_64 rng(72);
  for (int t = 0; t < 10; ++t) {
    const auto e = dt::random_element(rng, 200, 110);
    const auto p = params_from_element(e, dt::atlas(), 200, 110, {});
    const auto got = char_boxes(p, e.font_index, dt::atlas());
    const auto want = layout_boxes(e);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].x0 == doctest::Approx(want[i].x0).epsilon(1e-9));
      CHECK(got[i].y1 == doctest::Approx(want[i].y1).epsilon(1e-9));
    }
  }
}

TEST_CASE("fit_geometry recovers size and origin from a size-40 render") {
  for (int font : {0, 4, 8, 12, 16, 19}) {
    auto e = dt::make_element("Geometry", font, 40, 17, 63);
    const auto fit = fit_geometry(layout_boxes(e), std::nullopt, font, e.text, dt::atlas());
    CHECK(std::abs(fit.font_size - 40) <= 1);
    CHECK(std::abs(fit.origin.x() - 17) <= 1);
    CHECK(std::abs(fit.origin.y() - 63) <= 1);
  }
}

TEST_CASE("fit_geometry on a single character") {
  auto e = dt::make_element("Q", 9, 33, 40, 50);
  const auto boxes = layout_boxes(e);
  const auto fit = fit_geometry(boxes, std::nullopt, 9, "Q", dt::atlas());
  CHECK(fit.font_size == 33);
  CHECK(fit.origin == Eigen::Vector2d(40, 50));
  CHECK(fit.word_box.x0 == boxes[0].x0);
  CHECK(fit.word_box.y1 == boxes[0].y1);
}

TEST_CASE("fit_geometry follows a 1.1x scale") {
  auto e = dt::make_element("Scaled", 1, 30, 20, 60);
  auto boxes = layout_boxes(e);
  // Scale every box about the origin by 1.1.
  for (auto& b : boxes) {
    b = {20 + 1.1 * (b.x0 - 20), 60 + 1.1 * (b.y0 - 60), 20 + 1.1 * (b.x1 - 20), 60 + 1.1 * (b.y1 - 60)};
  }
  const auto fit = fit_geometry(boxes, std::nullopt, 1, e.text, dt::atlas());
  CHECK(std::abs(fit.font_size - 33) <= 1);
}

TEST_CASE("fit_geometry errors") {
  auto e = dt::make_element("Ab", 0, 20, 5, 30);
  auto boxes = layout_boxes(e);
  CHECK_THROWS_AS(fit_geometry({}, std::nullopt, 0, "", dt::atlas()), Error);
  CHECK_THROWS_AS(fit_geometry({boxes[0]}, std::nullopt, 0, "Ab", dt::atlas()), Error);
  boxes[1].x1 = boxes[1].x0;
  CHECK_THROWS_AS(fit_geometry(boxes, std::nullopt, 0, "Ab", dt::atlas()), Error);
}

TEST_CASE("exported documents reproduce datagen images") {
  GenConfig gc;
  gc.count = 10;
  gc.seed = 8;
  const auto samples = generate(gc, dt::atlas());
  std::vector<RefinableParams> params;
  for (const auto& s : samples) {
    const auto p = params_from_element(s.truth.elements[0], dt::atlas(), s.truth.canvas_width,
                                       s.truth.canvas_height, {});
    const Document d = export_document(s.truth.background, {p}, dt::atlas());
    CHECK(l1_error(render_document(d, dt::atlas()), s.image) < 0.01);
  }
}

TEST_CASE("displaced characters get explicit offsets") {
  auto e = dt::make_element("Shift", 3, 36, 20, 60);
  auto p = params_from_element(e, dt::atlas(), 200, 100, {});
  p.char_affines[2][5] = 4;  // third character moves 4 px down
  const auto x = export_element(p, dt::atlas());
  REQUIRE(x.char_offsets.size() == 5);
  // The integer origin absorbs part of the move; the relative offset is exact.
  CHECK(x.char_offsets[2].y() - x.char_offsets[0].y() == doctest::Approx(4).epsilon(0.05));
  CHECK(std::abs(x.char_offsets[0].y()) <= 1);
  const auto lay = layout(x, dt::atlas());
  const auto want = char_boxes(p, 3, dt::atlas());
  for (int i = 0; i < 5; ++i) CHECK((lay.chars[i].center - want[i].center()).norm() < 1e-9);
}
