#include "derender/compositor.hpp"

#include <cmath>

#include <fmt/format.h>

namespace derender {

namespace {

bool same_color(const Color& a, const Color& b) { return (a == b).all(); }

bool finite_color(const Color& c) { return c.allFinite() && (c >= 0).all() && (c <= 1).all(); }

}  // namespace

bool operator==(const EffectSet& a, const EffectSet& b) {
  return same_color(a.fill.color, b.fill.color) && a.border.visible == b.border.visible &&
         a.border.width_bin == b.border.width_bin && same_color(a.border.color, b.border.color) &&
         a.shadow.visible == b.shadow.visible && a.shadow.blur == b.shadow.blur &&
         a.shadow.offset_x == b.shadow.offset_x && a.shadow.offset_y == b.shadow.offset_y &&
         same_color(a.shadow.color, b.shadow.color);
}

bool operator==(const TextElement& a, const TextElement& b) {
  return a.text == b.text && a.font_index == b.font_index && a.font_size == b.font_size &&
         a.origin == b.origin && a.char_offsets == b.char_offsets && a.effects == b.effects;
}

bool operator==(const Document& a, const Document& b) {
  return a.canvas_width == b.canvas_width && a.canvas_height == b.canvas_height &&
         a.background == b.background && a.elements == b.elements;
}

void validate_element(const TextElement& e, const GlyphAtlas& atlas) {
  if (e.text.empty()) throw Error("compositor", "text: must not be empty");
  for (char c : e.text) {
    if (!atlas.has_glyph(c)) throw Error("compositor", fmt::format("text: glyph '{}' not in atlas", c));
  }
  if (e.font_index < 0 || e.font_index >= atlas.font_count()) {
    throw Error("compositor", fmt::format("font_index: {} out of range [0, {})", e.font_index,
                                          atlas.font_count()));
  }
  if (!(e.font_size > 0) || !std::isfinite(e.font_size)) {
    throw Error("compositor", "font_size: must be a positive number");
  }
  if (!e.origin.allFinite()) throw Error("compositor", "origin: must be finite");
  if (!e.char_offsets.empty() && e.char_offsets.size() != e.text.size()) {
    throw Error("compositor", "char_offsets: need one offset per character");
  }
  for (const auto& o : e.char_offsets) {
    if (!o.allFinite()) throw Error("compositor", "char_offsets: must be finite");
  }
  const auto& fx = e.effects;
  if (!finite_color(fx.fill.color)) throw Error("compositor", "effects.fill.color: out of range");
  if (fx.border.width_bin < 1 || fx.border.width_bin > kBorderBins) {
    throw Error("compositor", fmt::format("effects.border.width_bin: must be in 1..{}", kBorderBins));
  }
  if (!finite_color(fx.border.color)) throw Error("compositor", "effects.border.color: out of range");
  if (!(fx.shadow.blur >= 0) || !std::isfinite(fx.shadow.blur)) {
    throw Error("compositor", "effects.shadow.blur: must be >= 0");
  }
  if (!std::isfinite(fx.shadow.offset_x) || !std::isfinite(fx.shadow.offset_y)) {
    throw Error("compositor", "effects.shadow.offset: must be finite");
  }
  if (!finite_color(fx.shadow.color)) throw Error("compositor", "effects.shadow.color: out of range");
}

void validate_document(const Document& doc, const GlyphAtlas& atlas) {
  if (doc.canvas_width <= 0 || doc.canvas_height <= 0) {
    throw Error("compositor", "canvas: width and height must be positive");
  }
  if (doc.canvas_width > kMaxCanvasSide || doc.canvas_height > kMaxCanvasSide) {
    throw Error("compositor", fmt::format("canvas: exceeds {} px per side", kMaxCanvasSide));
  }
  if (doc.background.width() != doc.canvas_width || doc.background.height() != doc.canvas_height) {
    throw Error("compositor", "background: dimensions differ from canvas");
  }
  if (!doc.background.in_unit_range()) throw Error("compositor", "background: values outside [0,1]");
  for (std::size_t i = 0; i < doc.elements.size(); ++i) {
    try {
      validate_element(doc.elements[i], atlas);
    } catch (const Error& err) {
      // Prefix the element index so the message names a full field path.
      const std::string what = err.what();
      const auto pos = what.find(": ");
      throw Error("compositor", fmt::format("elements[{}].{}", i, what.substr(pos + 2)));
    }
  }
}

Layout layout(const TextElement& element, const GlyphAtlas& atlas) {
  Layout out;
  const double size = element.font_size;
  const double cell_scale = size / atlas.em_px();
  double pen = element.origin.x();
  const double baseline = element.origin.y();
  bool first = true;
  for (std::size_t k = 0; k < element.text.size(); ++k) {
    const char c = element.text[k];
    const int g = atlas.glyph_index(c);
    const auto& m = atlas.entry(element.font_index, g).metrics;
    const Eigen::Vector2d off =
        element.char_offsets.empty() ? Eigen::Vector2d::Zero() : element.char_offsets[k];
    CharPlacement p;
    p.glyph = c;
    p.glyph_index = g;
    p.cell_scale = cell_scale;
    p.box.x0 = pen + size * m.bearing_x + off.x();
    p.box.x1 = p.box.x0 + size * m.width;
    p.box.y0 = baseline - size * m.bearing_y + off.y();
    p.box.y1 = p.box.y0 + size * m.height;
    p.center = p.box.center();
    out.word_box = first ? p.box : out.word_box.hull(p.box);
    first = false;
    out.chars.push_back(p);
    pen += size * m.advance;
  }
  return out;
}

AffineCoeffs cell_sampling_transform(const CharPlacement& p, int cell_resolution) {
  const double inv = 1.0 / p.cell_scale;
  const double half = 0.5 * cell_resolution - 0.5;
  AffineCoeffs t;
  t << inv, 0, (0.5 - p.center.x()) * inv + half,  //
      0, inv, (0.5 - p.center.y()) * inv + half;
  return t;
}

PixelRect cell_footprint(const CharPlacement& p, int cell_resolution, Index canvas_width,
                         Index canvas_height, Index margin) {
  const double half = 0.5 * cell_resolution * p.cell_scale;
  const Index x0 = static_cast<Index>(std::floor(p.center.x() - half)) - margin;
  const Index y0 = static_cast<Index>(std::floor(p.center.y() - half)) - margin;
  const Index x1 = static_cast<Index>(std::ceil(p.center.x() + half)) + margin;
  const Index y1 = static_cast<Index>(std::ceil(p.center.y() + half)) + margin;
  return PixelRect{x0, y0, x1 - x0, y1 - y0}.intersect({0, 0, canvas_width, canvas_height});
}

namespace {

// Probabilistic union of one placed cell into `acc`: acc = 1 - (1-acc)(1-a).
void union_cell(const AlphaMap& cell, const CharPlacement& p, const PixelRect& win, AlphaMap& acc) {
  AffineCoeffs t = cell_sampling_transform(p, static_cast<int>(cell.width()));
  t(0, 2) += t(0, 0) * static_cast<double>(win.x0);
  t(1, 2) += t(1, 1) * static_cast<double>(win.y0);
  const AlphaMap placed = affine_sample(cell, t, win.width, win.height);
  for (Index y = 0; y < win.height; ++y) {
    for (Index x = 0; x < win.width; ++x) {
      float& u = acc(win.x0 + x, win.y0 + y);
      u += placed(x, y) * (1.0f - u);
    }
  }
}

}  // namespace

AlphaMap translate(const AlphaMap& src, double dx, double dy) {
  AffineCoeffs t;
  t << 1, 0, -dx, 0, 1, -dy;
  return affine_sample(src, t, src.width(), src.height());
}

EffectAlphas render_effect_alphas(const TextElement& element, const GlyphAtlas& atlas,
                                  Index canvas_width, Index canvas_height) {
  validate_element(element, atlas);
  EffectAlphas out{AlphaMap(canvas_width, canvas_height), AlphaMap(canvas_width, canvas_height),
                   AlphaMap(canvas_width, canvas_height)};
  const auto& fx = element.effects;
  AlphaMap border_union(canvas_width, canvas_height);
  const int res = atlas.cell_resolution();
  for (const auto& p : layout(element, atlas).chars) {
    const PixelRect win = cell_footprint(p, res, canvas_width, canvas_height);
    if (win.empty()) continue;
    union_cell(atlas.cell(element.font_index, p.glyph_index, GlyphVariant::fill()), p, win, out.fill);
    if (fx.border.visible) {
      union_cell(atlas.cell(element.font_index, p.glyph_index, GlyphVariant::border(fx.border.width_bin)),
                 p, win, border_union);
    }
  }
  if (fx.border.visible) {
    out.border.plane() = (border_union.plane() - out.fill.plane()).max(0.0f);
  }
  if (fx.shadow.visible) {
    out.shadow = gaussian_blur(translate(out.fill, fx.shadow.offset_x, fx.shadow.offset_y), fx.shadow.blur);
  }
  return out;
}

RasterImage composite_element(const RasterImage& canvas, const EffectAlphas& alphas,
                              const EffectSet& effects) {
  const Layer layers[] = {{&alphas.shadow, effects.shadow.color},
                          {&alphas.fill, effects.fill.color},
                          {&alphas.border, effects.border.color}};
  return composite<float>(canvas, layers);
}

TextElement scale_element(const TextElement& element, double scale) {
  TextElement e = element;
  e.font_size *= scale;
  e.origin *= scale;
  for (auto& o : e.char_offsets) o *= scale;
  e.effects.shadow.blur *= scale;
  e.effects.shadow.offset_x *= scale;
  e.effects.shadow.offset_y *= scale;
  return e;
}

RasterImage render_document(const Document& doc, const GlyphAtlas& atlas, double scale) {
  if (!(scale > 0) || !std::isfinite(scale)) throw Error("compositor", "scale must be > 0");
  validate_document(doc, atlas);
  const double w = std::round(static_cast<double>(doc.canvas_width) * scale);
  const double h = std::round(static_cast<double>(doc.canvas_height) * scale);
  if (w > kMaxCanvasSide || h > kMaxCanvasSide) {
    throw Error("compositor", fmt::format("scaled canvas {}x{} exceeds {} px per side", w, h, kMaxCanvasSide));
  }
  if (w < 1 || h < 1) throw Error("compositor", "scaled canvas is empty");
  const auto width = static_cast<Index>(w);
  const auto height = static_cast<Index>(h);
  RasterImage canvas = scale == 1.0 ? doc.background : resize_bilinear(doc.background, width, height);
  for (const auto& element : doc.elements) {
    const TextElement e = scale == 1.0 ? element : scale_element(element, scale);
    canvas = composite_element(canvas, render_effect_alphas(e, atlas, width, height), e.effects);
  }
  return canvas;
}

}  // namespace derender
