#pragma once

#include <Eigen/Core>

#include <span>
#include <string>
#include <vector>

#include "derender/atlas.hpp"
#include "derender/imaging.hpp"

namespace derender {

inline constexpr Index kMaxCanvasSide = 16384;

struct FillStyle {
  Color color = Color::Zero();
};

struct BorderStyle {
  bool visible = false;
  int width_bin = 1;  // 1..kBorderBins
  Color color = Color::Zero();
};

struct ShadowStyle {
  bool visible = false;
  double blur = 0;  // sigma in px
  double offset_x = 0;
  double offset_y = 0;
  Color color = Color::Zero();
};

/// Effect layers of one word, composited shadow -> fill -> border.
struct EffectSet {
  FillStyle fill;
  BorderStyle border;
  ShadowStyle shadow;
};

struct TextElement {
  std::string text;
  int font_index = 0;
  double font_size = 0;                           // px per em
  Eigen::Vector2d origin = Eigen::Vector2d::Zero();  // baseline-left pen position
  std::vector<Eigen::Vector2d> char_offsets;      // empty or one per character
  EffectSet effects;
};

struct Document {
  Index canvas_width = 0;
  Index canvas_height = 0;
  RasterImage background;
  std::vector<TextElement> elements;
};

bool operator==(const EffectSet& a, const EffectSet& b);
bool operator==(const TextElement& a, const TextElement& b);
bool operator==(const Document& a, const Document& b);

/// Axis-aligned box in continuous canvas coordinates.
struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  Eigen::Vector2d center() const { return {0.5 * (x0 + x1), 0.5 * (y0 + y1)}; }
  Box hull(const Box& o) const {
    return {std::min(x0, o.x0), std::min(y0, o.y0), std::max(x1, o.x1), std::max(y1, o.y1)};
  }
};

/// Where one character's atlas cell lands on the canvas. The cell center maps
/// to `center` and one cell pixel spans `cell_scale` canvas pixels.
struct CharPlacement {
  char glyph = 0;
  int glyph_index = 0;
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double cell_scale = 1;
  Box box;  // ink box
};

struct Layout {
  std::vector<CharPlacement> chars;
  Box word_box;
};

/// Throws an Error naming the offending field if `element` is inconsistent
/// with itself or with the atlas.
void validate_element(const TextElement& element, const GlyphAtlas& atlas);
void validate_document(const Document& doc, const GlyphAtlas& atlas);

Layout layout(const TextElement& element, const GlyphAtlas& atlas);

/// Index-space transform (canvas pixel -> cell pixel) for a placed character.
AffineCoeffs cell_sampling_transform(const CharPlacement& placement, int cell_resolution);

/// Canvas pixels that can receive ink from a placed cell, clipped to the
/// canvas. `margin` extends the footprint by whole pixels.
PixelRect cell_footprint(const CharPlacement& placement, int cell_resolution, Index canvas_width,
                         Index canvas_height, Index margin = 2);

struct EffectAlphas {
  AlphaMap shadow;
  AlphaMap fill;
  AlphaMap border;  // the stroke ring outside the fill
};

EffectAlphas render_effect_alphas(const TextElement& element, const GlyphAtlas& atlas,
                                  Index canvas_width, Index canvas_height);

/// Shifts `src` by (dx, dy) pixels with bilinear sampling; uncovered pixels read 0.
AlphaMap translate(const AlphaMap& src, double dx, double dy);

template <typename Scalar>
struct LayerT {
  const AlphaMapT<Scalar>* alpha;
  Color color;
};
using Layer = LayerT<float>;

/// Source-over compositing of `layers` onto `background`, first layer lowest.
template <typename Scalar>
RasterImageT<Scalar> composite(const RasterImageT<Scalar>& background,
                               std::span<const LayerT<Scalar>> layers) {
  RasterImageT<Scalar> out = background;
  for (const auto& layer : layers) {
    const auto& a = layer.alpha->plane();
    if (a.cols() != out.width() || a.rows() != out.height()) {
      throw Error("compositor", "composite: layer and background dimensions differ");
    }
    for (int c = 0; c < 3; ++c) {
      const auto col = static_cast<Scalar>(layer.color[c]);
      auto& ch = out.channel(c);
      ch = ((Scalar(1) - a) * ch + a * col).max(Scalar(0)).min(Scalar(1));
    }
  }
  return out;
}

/// Composites one element's layers onto `canvas` in shadow, fill, border order.
RasterImage composite_element(const RasterImage& canvas, const EffectAlphas& alphas,
                              const EffectSet& effects);

/// Copy of `element` with every geometric quantity multiplied by `scale`.
TextElement scale_element(const TextElement& element, double scale);

RasterImage render_document(const Document& doc, const GlyphAtlas& atlas, double scale = 1.0);

}  // namespace derender
