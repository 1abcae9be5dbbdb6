#include "derender/export.hpp"

#include <fmt/format.h>

namespace derender {

namespace {

int argmax(const Eigen::VectorXd& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace

HardStyle harden(const RefinableParams& p, const DiffConfig& config) {
  HardStyle h;
  h.font_index = argmax(font_attention(p.font_logits, config.top_k_fonts));
  auto& fx = h.effects;
  fx.fill.color = decode_color(p.fill_color_logits);
  fx.border.visible = soft_visibility(p.border_visibility_logit, config.db_steepness) > 0.5;
  fx.border.width_bin = argmax(softmax(p.border_bin_logits)) + 1;
  fx.border.color = decode_color(p.border_color_logits);
  fx.shadow.visible = soft_visibility(p.shadow_visibility_logit, config.db_steepness) > 0.5;
  fx.shadow.blur = softplus(p.shadow_blur_raw);
  fx.shadow.offset_x = p.shadow_offset.x();
  fx.shadow.offset_y = p.shadow_offset.y();
  fx.shadow.color = decode_color(p.shadow_color_logits);
  return h;
}

std::vector<Box> char_boxes(const RefinableParams& p, int font_index, const GlyphAtlas& atlas) {
  const int res = atlas.cell_resolution();
  const double half = 0.5 * res;
  std::vector<Box> out;
  for (int i = 0; i < p.char_count(); ++i) {
    const auto& m = atlas.entry(font_index, p.anchors[i].glyph_index).metrics;
    const double hw = 0.5 * m.width * atlas.em_px(), hh = 0.5 * m.height * atlas.em_px();
    const Eigen::Matrix3d f = char_transform(p, i, res);
    Box b{1e300, 1e300, -1e300, -1e300};
    for (double cx : {half - hw, half + hw}) {
      for (double cy : {half - hh, half + hh}) {
        // char_transform works on index coordinates (continuous - 0.5).
        const Eigen::Vector3d q = f * Eigen::Vector3d(cx - 0.5, cy - 0.5, 1.0);
        const double x = q.x() + 0.5 + static_cast<double>(p.crop.x0);
        const double y = q.y() + 0.5 + static_cast<double>(p.crop.y0);
        b = {std::min(b.x0, x), std::min(b.y0, y), std::max(b.x1, x), std::max(b.y1, y)};
      }
    }
    out.push_back(b);
  }
  return out;
}

GeometryFit fit_geometry(const std::vector<Box>& boxes, const std::optional<Box>& word_box, int font_index,
                         const std::string& text, const GlyphAtlas& atlas) {
  if (boxes.empty()) throw Error("export", "fit_geometry needs at least one character box");
  if (boxes.size() != text.size()) {
    throw Error("export", fmt::format("fit_geometry: {} boxes for {} characters", boxes.size(), text.size()));
  }
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    if (!(boxes[i].width() > 0 && boxes[i].height() > 0)) {
      throw Error("export", fmt::format("fit_geometry: character box {} has zero area", i));
    }
  }
  if (word_box && !(word_box->width() > 0 && word_box->height() > 0)) {
    throw Error("export", "fit_geometry: word box has zero area");
  }

  // layout() is affine in (size, origin): box = origin + size * unit.
  TextElement probe;
  probe.text = text;
  probe.font_index = font_index;
  probe.font_size = 1.0;
  const Layout unit = layout(probe, atlas);

  GeometryFit fit;
  for (std::size_t i = 1; i < unit.chars.size(); ++i) {
    if (unit.chars[i].box.height() > unit.chars[fit.anchor_char].box.height()) fit.anchor_char = static_cast<int>(i);
  }
  const Box& ua = unit.chars[fit.anchor_char].box;
  const Box& oa = boxes[fit.anchor_char];
  if (!(ua.height() > 0)) throw Error("export", "fit_geometry: anchor glyph has no ink");
  const double implied = oa.height() / ua.height();
  const int s_lo = std::max(1, static_cast<int>(std::lround((1.0 - kSizeWindow) * implied)));
  const int s_hi = std::max(s_lo, static_cast<int>(std::lround((1.0 + kSizeWindow) * implied)));

  double best = std::numeric_limits<double>::infinity();
  for (int s = s_lo; s <= s_hi; ++s) {
    const double ox0 = std::round(oa.x0 - s * ua.x0), oy0 = std::round(oa.y0 - s * ua.y0);
    for (int dx = -kOriginWindow; dx <= kOriginWindow; ++dx) {
      for (int dy = -kOriginWindow; dy <= kOriginWindow; ++dy) {
        const double ox = ox0 + dx, oy = oy0 + dy;
        double cost = 0;
        for (std::size_t i = 0; i < boxes.size(); ++i) {
          const Box& u = unit.chars[i].box;
          const double ex0 = ox + s * u.x0 - boxes[i].x0, ex1 = ox + s * u.x1 - boxes[i].x1;
          const double ey0 = oy + s * u.y0 - boxes[i].y0, ey1 = oy + s * u.y1 - boxes[i].y1;
          // Four corners; each coordinate error appears in two of them.
          cost += 2.0 * (ex0 * ex0 + ex1 * ex1 + ey0 * ey0 + ey1 * ey1);
        }
        // Loops run in (size, x, y) ascending order, so strict < keeps the
        // documented tie-break.
        if (cost < best) {
          best = cost;
          fit.font_size = s;
          fit.origin = {ox, oy};
        }
      }
    }
  }
  fit.cost = best;
  fit.word_box = word_box ? *word_box : boxes.front();
  for (const auto& b : boxes) fit.word_box = fit.word_box.hull(b);
  return fit;
}

TextElement export_element(const RefinableParams& params, const GlyphAtlas& atlas, const std::optional<Box>& word_box,
                           const DiffConfig& config) {
  const HardStyle h = harden(params, config);
  const auto boxes = char_boxes(params, h.font_index, atlas);
  const GeometryFit fit = fit_geometry(boxes, word_box, h.font_index, params.text, atlas);

  TextElement e;
  e.text = params.text;
  e.font_index = h.font_index;
  e.font_size = fit.font_size;
  e.origin = fit.origin;
  e.effects = h.effects;

  const Layout lay = layout(e, atlas);
  std::vector<Eigen::Vector2d> offsets;
  bool needed = false;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    offsets.push_back(boxes[i].center() - lay.chars[i].center);
    needed |= offsets.back().cwiseAbs().maxCoeff() > kOffsetTolerance;
  }
  if (needed) e.char_offsets = std::move(offsets);
  return e;
}

Document export_document(const RasterImage& background, const std::vector<RefinableParams>& words,
                         const GlyphAtlas& atlas, const DiffConfig& config) {
  Document doc;
  doc.canvas_width = background.width();
  doc.canvas_height = background.height();
  doc.background = background;
  for (const auto& p : words) doc.elements.push_back(export_element(p, atlas, std::nullopt, config));
  validate_document(doc, atlas);
  return doc;
}

}  // namespace derender
