#include <doctest.h>

#include <random>

#include "derender/diffrender.hpp"
#include "test_support.hpp"

using namespace derender;
namespace dt = derender::testing;

namespace {

struct Scene {
  TextElement element;
  RefinableParams params;
  RasterImage background;  // crop
  RasterImage target;      // crisp render, crop
};

Scene crisp_scene(std::mt19937_64& rng) {
  const Index w = 200, h = 110;
  Scene s;
  s.element = dt::random_element(rng, w, h);
  Document d;
  d.canvas_width = w;
  d.canvas_height = h;
  d.background = RasterImage::filled(w, h, Color(dt::uniform(rng, 0, 1), dt::uniform(rng, 0, 1), dt::uniform(rng, 0, 1)));
  d.elements = {s.element};
  s.params = params_from_element(s.element, dt::atlas(), w, h, DiffConfig{});
  s.background = d.background.crop(s.params.crop);
  s.target = render_document(d, dt::atlas()).crop(s.params.crop);
  return s;
}

}  // namespace

TEST_CASE("font_attention examples") {
  Eigen::VectorXd l = Eigen::VectorXd::Zero(20);
  l[7] = 40;
  CHECK(font_attention(l, 20)[7] == doctest::Approx(1.0));

  const auto p = font_attention(Eigen::VectorXd::Zero(100), 20);
  for (int i = 0; i < 100; ++i) CHECK(p[i] == doctest::Approx(i < 20 ? 0.05 : 0.0));
  CHECK(p.sum() == doctest::Approx(1.0));

  std::mt19937_64 rng(31);
  Eigen::VectorXd r(12);
  for (Index i = 0; i < 12; ++i) r[i] = dt::uniform(rng, -3, 3);
  CHECK((font_attention(r, 12) - softmax(r)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS(font_attention(r, 0), Error);
}

TEST_CASE("blended_glyph examples and linearity") {
  const auto& a = dt::atlas();
  const int g = a.glyph_index('R');
  Eigen::VectorXd one = Eigen::VectorXd::Zero(a.font_count());
  one[5] = 1;
  CHECK((blended_glyph(a, one, g, GlyphVariant::fill()).plane() -
         a.cell(5, g, GlyphVariant::fill()).plane().cast<double>())
            .abs()
            .maxCoeff() == 0.0);

  Eigen::VectorXd half = Eigen::VectorXd::Zero(a.font_count());
  half[2] = half[9] = 0.5;
  const auto avg = blended_glyph(a, half, g, GlyphVariant::border(2));
  const Plane<double> expect = 0.5 * (a.cell(2, g, GlyphVariant::border(2)).plane().cast<double>() +
                                      a.cell(9, g, GlyphVariant::border(2)).plane().cast<double>());
  CHECK((avg.plane() - expect).abs().maxCoeff() < 1e-12);

  std::mt19937_64 rng(32);
  Eigen::VectorXd p1 = Eigen::VectorXd::Zero(a.font_count()), p2 = p1;
  for (int i : {0, 4, 8, 12}) {
    p1[i] = dt::uniform(rng, 0, 1);
    p2[i] = dt::uniform(rng, 0, 1);
  }
  p1 /= p1.sum();
  p2 /= p2.sum();
  const double t = 0.3;
  const auto mix = blended_glyph(a, t * p1 + (1 - t) * p2, g, GlyphVariant::fill());
  const Plane<double> lin = t * blended_glyph(a, p1, g, GlyphVariant::fill()).plane() +
                            (1 - t) * blended_glyph(a, p2, g, GlyphVariant::fill()).plane();
  CHECK((mix.plane() - lin).abs().maxCoeff() < 1e-6);
}

TEST_CASE("soft_visibility examples") {
  CHECK(soft_visibility(0, 50) == 0.5);
  CHECK(soft_visibility(6, 50) > 0.999);
  CHECK(soft_visibility(-6, 50) < 0.001);
}

TEST_CASE("decoded quantities stay in range for any raw values") {
  for (double x : {-1e6, -50.0, -1.0, 0.0, 1.0, 50.0, 1e6}) {
    const double s = sigmoid(x);
    CHECK(s >= 0);
    CHECK(s <= 1);
    CHECK(softplus(x) >= 0);
    const double v = soft_visibility(x, 50);
    CHECK(v >= 0);
    CHECK(v <= 1);
  }
  Eigen::VectorXd big(3);
  big << 1e6, -1e6, 0;
  CHECK(softmax(big).allFinite());
  CHECK(softmax(big).sum() == doctest::Approx(1.0));
  CHECK(inverse_softplus(softplus(1.7)) == doctest::Approx(1.7));
}

TEST_CASE("pack/unpack round trip and disjoint exhaustive layout") {
  std::mt19937_64 rng(33);
  auto s = crisp_scene(rng);
  RefinableParams p = s.params;
  Eigen::VectorXd v = pack(p);
  for (Index i = 0; i < v.size(); ++i) v[i] = dt::uniform(rng, -2, 2);
  unpack(v, p);
  CHECK(pack(p) == v);

  const auto spans = param_layout(p);
  Index next = 0;
  for (const auto& sp : spans) {
    CHECK(sp.offset == next);
    CHECK(sp.size > 0);
    next += sp.size;
  }
  CHECK(next == v.size());
  CHECK_THROWS_AS(unpack(Eigen::VectorXd::Zero(3), p), Error);
}

TEST_CASE("one-hot reconstruction matches the compositor") {
  std::mt19937_64 rng(34);
  for (int t = 0; t < 5; ++t) {
    const auto s = crisp_scene(rng);
    CHECK(l1_error(reconstruct(s.params, dt::atlas(), s.background, {}), s.target.cast<double>()) < 0.02);
  }
}

TEST_CASE("shadow logit -6 suppresses the shadow") {
  std::mt19937_64 rng(35);
  auto s = crisp_scene(rng);
  s.params.shadow_visibility_logit = -6;
  const auto weak = reconstruct(s.params, dt::atlas(), s.background, {});
  s.params.shadow_visibility_logit = -1e3;
  const auto none = reconstruct(s.params, dt::atlas(), s.background, {});
  for (int c = 0; c < 3; ++c) CHECK((weak.channel(c) - none.channel(c)).abs().maxCoeff() < 1e-3);
}

TEST_CASE("identity affines place characters at their layout centres") {
  std::mt19937_64 rng(36);
  const auto s = crisp_scene(rng);
  const auto lay = layout(s.element, dt::atlas());
  const int r = dt::atlas().cell_resolution();
  for (int i = 0; i < s.params.char_count(); ++i) {
    const Eigen::Matrix3d f = char_transform(s.params, i, r);
    // Cell centre in index coordinates -> crop index coordinates.
    const Eigen::Vector3d c = f * Eigen::Vector3d(0.5 * r - 0.5, 0.5 * r - 0.5, 1);
    const Eigen::Vector2d expect = lay.chars[i].center - Eigen::Vector2d(s.params.crop.x0 + 0.5, s.params.crop.y0 + 0.5);
    CHECK((c.head<2>() - expect).norm() < 0.5);
  }
}

TEST_CASE("gradient at a perturbed state points back toward the truth") {
  std::mt19937_64 rng(37);
  for (int t = 0; t < 3; ++t) {
    const auto s = crisp_scene(rng);
    const auto at_truth = loss_and_gradients(s.params, dt::atlas(), s.background, s.target, {});
    CHECK(at_truth.loss < 0.02);
    RefinableParams off = s.params;
    off.fill_color_logits += Eigen::Vector3d(0.8, -0.8, 0.8);
    off.word_affine[4] += 2.5;
    off.word_affine[5] -= 1.5;
    const auto perturbed = loss_and_gradients(off, dt::atlas(), s.background, s.target, {});
    CHECK(perturbed.loss > at_truth.loss);
    const Eigen::VectorXd away = pack(off) - pack(s.params);
    CHECK(perturbed.grads.values.dot(away) > 0);
    // Each group alone.
    RefinableParams fill_only = s.params, move_only = s.params;
    fill_only.fill_color_logits = off.fill_color_logits;
    move_only.word_affine = off.word_affine;
    for (const auto* q : {&fill_only, &move_only}) {
      const auto lg = loss_and_gradients(*q, dt::atlas(), s.background, s.target, {});
      CHECK(lg.grads.values.dot(pack(*q) - pack(s.params)) > 0);
    }
  }
}

// A small step keeps the steep visibility sigmoid and L1 sign changes out of
// the stencil; the acceptance binary runs the h = 1e-3 check.
TEST_CASE("gradients match central differences on one configuration") {
  std::mt19937_64 rng(38);
  auto s = crisp_scene(rng);
  RefinableParams p = s.params;
  std::normal_distribution<double> n(0, 1);
  for (Index i = 0; i < p.font_logits.size(); ++i) p.font_logits[i] = n(rng);
  p.word_affine << 0.3, -0.2, 0.1, 0.2, 0.4, -0.3;
  p.border_visibility_logit = 0.02;
  p.shadow_visibility_logit = -0.03;
  p.border_bin_logits.setRandom();
  p.shadow_offset = {1.37, -0.61};
  p.shadow_blur_raw = inverse_softplus(1.2);
  const auto target = dt::random_image(rng, p.crop.width, p.crop.height);
  const auto lg = loss_and_gradients(p, dt::atlas(), s.background, target, {});
  const Eigen::VectorXd th = pack(p);
  for (Index i = 0; i < th.size(); ++i) {
    const double g = lg.grads.values[i];
    if (std::abs(g) <= 1e-6) continue;
    RefinableParams a = p, b = p;
    Eigen::VectorXd ta = th, tb = th;
    ta[i] += 1e-4;
    tb[i] -= 1e-4;
    unpack(ta, a);
    unpack(tb, b);
    const double fd = (evaluate_loss(a, dt::atlas(), s.background, target, {}) -
                       evaluate_loss(b, dt::atlas(), s.background, target, {})) /
                      2e-4;
    std::string name;
    for (const auto& sp : lg.grads.index_map) {
      if (i >= sp.offset && i < sp.offset + sp.size) name = sp.name + "[" + std::to_string(i - sp.offset) + "]";
    }
    INFO(name, " g=", g, " fd=", fd);
    CHECK(std::abs(g - fd) / std::max(std::abs(g), std::abs(fd)) < 1e-3);
  }
}

TEST_CASE("errors") {
  std::mt19937_64 rng(39);
  auto s = crisp_scene(rng);
  RefinableParams p = s.params;
  p.fill_color_logits[1] = std::nan("");
  CHECK_THROWS_WITH_AS(loss_and_gradients(p, dt::atlas(), s.background, s.target, {}),
                       doctest::Contains("fill_color"), Error);
  p = s.params;
  p.char_affines[0] << -p.anchors[0].ref_length, 0, 0, -p.anchors[0].ref_length, 0, 0;  // M = 0
  CHECK_THROWS_WITH_AS(reconstruct(p, dt::atlas(), s.background, {}), doctest::Contains("degenerate"), Error);
  CHECK_THROWS_AS(loss_and_gradients(s.params, dt::atlas(), s.background, RasterImage(3, 3), {}), Error);
  GradientVector g;
  CHECK_THROWS_AS(g.span("nope"), Error);
}
