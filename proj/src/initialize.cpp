#include "derender/initialize.hpp"

#include <Eigen/Dense>

#include <queue>

#include <fmt/format.h>

#include "derender/compositor.hpp"
#include "derender/decompose.hpp"

namespace derender {

namespace {

constexpr double kMinSeparation = 0.12;

struct MaskEstimate {
  AlphaMap mask;
  double separation = 0;
};

// Least-squares plane c(x, y) = a + b x + c y per channel through the ring
// pixels around `box`. Falls back to the box border when no ring exists.
Eigen::Matrix<double, 3, 3> fit_background_plane(const RasterImage& image, const PixelRect& box) {
  const PixelRect canvas{0, 0, image.width(), image.height()};
  const PixelRect outer = PixelRect{box.x0 - 2, box.y0 - 2, box.width + 4, box.height + 4}.intersect(canvas);
  std::vector<std::pair<Index, Index>> ring;
  for (Index y = outer.y0; y < outer.y1(); ++y) {
    for (Index x = outer.x0; x < outer.x1(); ++x) {
      if (!box.contains(x, y)) ring.emplace_back(x, y);
    }
  }
  if (ring.size() < 8) {
    for (Index y = box.y0; y < box.y1(); ++y) {
      for (Index x = box.x0; x < box.x1(); ++x) {
        if (x == box.x0 || y == box.y0 || x == box.x1() - 1 || y == box.y1() - 1) ring.emplace_back(x, y);
      }
    }
  }
  Eigen::MatrixXd a(ring.size(), 3);
  Eigen::MatrixXd b(ring.size(), 3);
  const double cx = box.x0 + 0.5 * box.width, cy = box.y0 + 0.5 * box.height;
  for (std::size_t i = 0; i < ring.size(); ++i) {
    const auto [x, y] = ring[i];
    a.row(i) << 1.0, (x - cx) / box.width, (y - cy) / box.height;
    for (int c = 0; c < 3; ++c) b(i, c) = image(x, y, c);
  }
  // Rank-deficient rings (one side only) still give a least-squares answer.
  Eigen::Matrix<double, 3, 3> coef = a.completeOrthogonalDecomposition().solve(b);
  return coef;  // column c: [offset, slope x, slope y] for channel c
}

MaskEstimate estimate_mask_impl(const RasterImage& image, const PixelRect& box) {
  if (box.width < 4 || box.height < 4) throw Error("initialize", "word box must be at least 4x4 px");
  if (box.intersect({0, 0, image.width(), image.height()}) != box) {
    throw Error("initialize", "word box lies outside the image");
  }
  const auto plane = fit_background_plane(image, box);
  const double cx = box.x0 + 0.5 * box.width, cy = box.y0 + 0.5 * box.height;
  const Index n = box.width * box.height;
  Eigen::MatrixXd r(n, 3);  // residual from the fitted background
  for (Index y = box.y0, i = 0; y < box.y1(); ++y) {
    for (Index x = box.x0; x < box.x1(); ++x, ++i) {
      const Eigen::RowVector3d basis(1.0, (x - cx) / box.width, (y - cy) / box.height);
      for (int c = 0; c < 3; ++c) r(i, c) = image(x, y, c) - basis.dot(plane.col(c));
    }
  }

  // Two-means: seeds at the background (zero residual) and the farthest pixel.
  Index far = 0;
  r.rowwise().squaredNorm().maxCoeff(&far);
  Eigen::RowVector3d centers[2] = {Eigen::RowVector3d::Zero(), r.row(far)};
  std::vector<int> label(n, 0);
  for (int iter = 0; iter < 20; ++iter) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      const int l = (r.row(i) - centers[1]).squaredNorm() < (r.row(i) - centers[0]).squaredNorm() ? 1 : 0;
      changed |= l != label[i];
      label[i] = l;
    }
    Eigen::RowVector3d sum[2] = {Eigen::RowVector3d::Zero(), Eigen::RowVector3d::Zero()};
    Index count[2] = {0, 0};
    for (Index i = 0; i < n; ++i) {
      sum[label[i]] += r.row(i);
      ++count[label[i]];
    }
    for (int k = 0; k < 2; ++k) {
      if (count[k] > 0) centers[k] = sum[k] / static_cast<double>(count[k]);
    }
    if (!changed && iter > 0) break;
  }
  const int fg = centers[1].norm() >= centers[0].norm() ? 1 : 0;
  const Eigen::RowVector3d bg_center = centers[1 - fg];
  MaskEstimate out{AlphaMap(image.width(), image.height()), (centers[fg] - bg_center).norm()};
  if (out.separation < kMinSeparation) return out;
  for (Index y = box.y0, i = 0; y < box.y1(); ++y) {
    for (Index x = box.x0; x < box.x1(); ++x, ++i) {
      out.mask(x, y) = static_cast<float>(std::clamp((r.row(i) - bg_center).norm() / out.separation, 0.0, 1.0));
    }
  }
  return out;
}

}  // namespace

AlphaMap estimate_mask(const RasterImage& image, const PixelRect& word_box) {
  return estimate_mask_impl(image, word_box).mask;
}

// ---------------------------------------------------------------------------
// Telea fast-marching inpainting

Plane<bool> inpaint_hole(const AlphaMap& mask) {
  AlphaMap binary(mask.width(), mask.height());
  binary.plane() = (mask.plane() > static_cast<float>(kHoleThreshold)).cast<float>();
  return (dilate_disk(binary, kHoleDilation).plane() > 0.5f).eval();
}

RasterImage inpaint(const RasterImage& image, const AlphaMap& mask, double radius) {
  if (mask.width() != image.width() || mask.height() != image.height()) {
    throw Error("initialize", "inpaint: mask and image dimensions differ");
  }
  const Plane<bool> hole = inpaint_hole(mask);
  if (!hole.any()) return image;
  if (hole.all()) throw Error("initialize", "inpaint: hole covers the entire image");

  const Index w = image.width(), h = image.height();
  enum : std::uint8_t { kKnown, kBand, kInside };
  constexpr double kInf = 1e6;
  Plane<std::uint8_t> flag(h, w);
  Plane<double> dist(h, w);
  RasterImageT<double> out = image.cast<double>();

  using Item = std::pair<double, Index>;  // (T, linear index)
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  const int nx[4] = {1, -1, 0, 0}, ny[4] = {0, 0, 1, -1};
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      flag(y, x) = hole(y, x) ? kInside : kKnown;
      dist(y, x) = hole(y, x) ? kInf : 0.0;
    }
  }
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      if (flag(y, x) != kKnown) continue;
      for (int k = 0; k < 4; ++k) {
        const Index xx = x + nx[k], yy = y + ny[k];
        if (xx >= 0 && yy >= 0 && xx < w && yy < h && flag(yy, xx) == kInside) {
          flag(y, x) = kBand;
          heap.emplace(0.0, y * w + x);
          break;
        }
      }
    }
  }

  auto valid = [&](Index x, Index y) { return x >= 0 && y >= 0 && x < w && y < h && flag(y, x) != kInside; };
  auto solve = [&](Index x1, Index y1, Index x2, Index y2) {
    const double t1 = valid(x1, y1) ? dist(y1, x1) : kInf;
    const double t2 = valid(x2, y2) ? dist(y2, x2) : kInf;
    const double lo = std::min(t1, t2);
    if (t1 < kInf && t2 < kInf) {
      const double d = 2.0 - (t1 - t2) * (t1 - t2);
      if (d > 0) {
        const double s = 0.5 * (t1 + t2 + std::sqrt(d));
        if (s >= std::max(t1, t2)) return s;
      }
    }
    return lo + 1.0;
  };
  auto eikonal = [&](Index x, Index y) {
    return std::min({solve(x - 1, y, x, y - 1), solve(x + 1, y, x, y - 1), solve(x - 1, y, x, y + 1),
                     solve(x + 1, y, x, y + 1)});
  };
  auto image_gradient = [&](Index x, Index y, int c) -> Eigen::Vector2d {
    Eigen::Vector2d g = Eigen::Vector2d::Zero();
    if (valid(x + 1, y) && valid(x - 1, y)) {
      g.x() = 0.5 * (out(x + 1, y, c) - out(x - 1, y, c));
    } else if (valid(x + 1, y)) {
      g.x() = out(x + 1, y, c) - out(x, y, c);
    } else if (valid(x - 1, y)) {
      g.x() = out(x, y, c) - out(x - 1, y, c);
    }
    if (valid(x, y + 1) && valid(x, y - 1)) {
      g.y() = 0.5 * (out(x, y + 1, c) - out(x, y - 1, c));
    } else if (valid(x, y + 1)) {
      g.y() = out(x, y + 1, c) - out(x, y, c);
    } else if (valid(x, y - 1)) {
      g.y() = out(x, y, c) - out(x, y - 1, c);
    }
    return g;
  };
  auto level_gradient = [&](Index x, Index y) -> Eigen::Vector2d {
    auto t = [&](Index xx, Index yy) { return valid(xx, yy) ? dist(yy, xx) : kInf; };
    Eigen::Vector2d g = Eigen::Vector2d::Zero();
    const double tx1 = t(x + 1, y), tx0 = t(x - 1, y), ty1 = t(x, y + 1), ty0 = t(x, y - 1);
    if (tx1 < kInf && tx0 < kInf) {
      g.x() = 0.5 * (tx1 - tx0);
    } else if (tx1 < kInf) {
      g.x() = tx1 - dist(y, x);
    } else if (tx0 < kInf) {
      g.x() = dist(y, x) - tx0;
    }
    if (ty1 < kInf && ty0 < kInf) {
      g.y() = 0.5 * (ty1 - ty0);
    } else if (ty1 < kInf) {
      g.y() = ty1 - dist(y, x);
    } else if (ty0 < kInf) {
      g.y() = dist(y, x) - ty0;
    }
    return g;
  };
  const int r = static_cast<int>(std::ceil(radius));
  auto fill_pixel = [&](Index x, Index y) {
    const Eigen::Vector2d n = level_gradient(x, y);
    Eigen::Vector3d acc = Eigen::Vector3d::Zero();
    double wsum = 0;
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        const Index qx = x + dx, qy = y + dy;
        if ((dx == 0 && dy == 0) || !valid(qx, qy) || dx * dx + dy * dy > radius * radius) continue;
        const Eigen::Vector2d rv(static_cast<double>(x - qx), static_cast<double>(y - qy));
        const double len2 = rv.squaredNorm();
        const double dir = std::max(std::abs(rv.dot(n)) / std::sqrt(len2), 1e-6);
        const double dst = 1.0 / len2;
        const double lev = 1.0 / (1.0 + std::abs(dist(qy, qx) - dist(y, x)));
        const double wgt = dir * dst * lev;
        for (int c = 0; c < 3; ++c) acc[c] += wgt * (out(qx, qy, c) + image_gradient(qx, qy, c).dot(rv));
        wsum += wgt;
      }
    }
    if (wsum > 0) {
      for (int c = 0; c < 3; ++c) out(x, y, c) = std::clamp(acc[c] / wsum, 0.0, 1.0);
    }
  };

  while (!heap.empty()) {
    const auto [t, idx] = heap.top();
    heap.pop();
    const Index x = idx % w, y = idx / w;
    if (flag(y, x) == kKnown && t > 0) continue;  // stale entry
    flag(y, x) = kKnown;
    for (int k = 0; k < 4; ++k) {
      const Index xx = x + nx[k], yy = y + ny[k];
      if (xx < 0 || yy < 0 || xx >= w || yy >= h || flag(yy, xx) != kInside) continue;
      // Still flagged inside while filling so its stale value feeds no gradient.
      dist(yy, xx) = eikonal(xx, yy);
      fill_pixel(xx, yy);
      flag(yy, xx) = kBand;
      heap.emplace(dist(yy, xx), yy * w + xx);
    }
  }

  RasterImage result = out.cast<float>();
  // Bit-identical outside the hole.
  for (int c = 0; c < 3; ++c) result.channel(c) = hole.select(result.channel(c), image.channel(c));
  return result;
}

// ---------------------------------------------------------------------------

namespace {

double ncc(const Plane<float>& a, const Plane<float>& b) {
  const Eigen::ArrayXXd x = a.cast<double>() - a.cast<double>().mean();
  const Eigen::ArrayXXd y = b.cast<double>() - b.cast<double>().mean();
  const double den = std::sqrt((x * x).sum() * (y * y).sum());
  return den > 0 ? (x * y).sum() / den : 0.0;
}

// Lloyd k-means with farthest-point seeding from the first point; labels in
// [0, k). Deterministic.
std::vector<int> color_clusters(const std::vector<Eigen::Vector3d>& pts, int k) {
  std::vector<Eigen::Vector3d> centers{pts.front()};
  while (static_cast<int>(centers.size()) < k) {
    double far = -1;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      double d = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) d = std::min(d, (pts[i] - c).squaredNorm());
      if (d > far) {
        far = d;
        arg = i;
      }
    }
    if (far <= 1e-12) break;
    centers.push_back(pts[arg]);
  }
  std::vector<int> label(pts.size(), 0);
  for (int iter = 0; iter < 30; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      int best = 0;
      for (std::size_t c = 1; c < centers.size(); ++c) {
        if ((pts[i] - centers[c]).squaredNorm() < (pts[i] - centers[best]).squaredNorm()) best = static_cast<int>(c);
      }
      changed |= best != label[i];
      label[i] = best;
    }
    std::vector<Eigen::Vector3d> sum(centers.size(), Eigen::Vector3d::Zero());
    std::vector<int> count(centers.size(), 0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      sum[label[i]] += pts[i];
      ++count[label[i]];
    }
    for (std::size_t c = 0; c < centers.size(); ++c) {
      if (count[c] > 0) centers[c] = sum[c] / count[c];
    }
    if (!changed && iter > 0) break;
  }
  return label;
}

// Element of `font` whose layout ink box has the box's height and top-left.
TextElement fit_to_box(const std::string& text, int font, const PixelRect& box, const GlyphAtlas& atlas) {
  TextElement e;
  e.text = text;
  e.font_index = font;
  e.font_size = 1.0;
  const Box unit = layout(e, atlas).word_box;
  e.font_size = static_cast<double>(box.height) / std::max(unit.height(), 1e-6);
  e.origin = Eigen::Vector2d(box.x0 - e.font_size * unit.x0, box.y0 - e.font_size * unit.y0);
  return e;
}

}  // namespace

InitGuess initial_guess(const RasterImage& image, const PixelRect& word_box, const std::string& text,
                        const GlyphAtlas& atlas, const DiffConfig& config) {
  const auto mask = estimate_mask(image, word_box);
  return initial_guess(image, inpaint(image, mask), word_box, text, atlas, config);
}

InitGuess initial_guess(const RasterImage& image, const RasterImage& background, const PixelRect& word_box,
                        const std::string& text, const GlyphAtlas& atlas, const DiffConfig& config) {
  if (text.empty()) throw Error("initialize", "text must not be empty");
  for (char c : text) {
    if (!atlas.has_glyph(c)) throw Error("initialize", fmt::format("glyph '{}' not in atlas", c));
  }
  require_same_size(image, background, "initial_guess");
  const MaskEstimate est = estimate_mask_impl(image, word_box);
  const Plane<float> mask_box =
      est.mask.plane().block(word_box.y0, word_box.x0, word_box.height, word_box.width);

  // Rank fonts by correlation of their box-fitted fill with the mask.
  InitGuess out;
  const int nf = atlas.font_count();
  out.font_scores.assign(nf, 0.0);
  std::vector<AlphaMap> fills(nf);
  for (int f = 0; f < nf; ++f) {
    TextElement e = fit_to_box(text, f, word_box, atlas);
    e.origin -= Eigen::Vector2d(static_cast<double>(word_box.x0), static_cast<double>(word_box.y0));
    fills[f] = render_effect_alphas(e, atlas, word_box.width, word_box.height).fill;
    out.font_scores[f] = ncc(fills[f].plane(), mask_box);
  }
  const int best = static_cast<int>(std::max_element(out.font_scores.begin(), out.font_scores.end()) -
                                    out.font_scores.begin());
  const double top = out.font_scores[best];

  TextElement element = fit_to_box(text, best, word_box, atlas);
  const Box fitted = layout(element, atlas).word_box;
  const Box box{static_cast<double>(word_box.x0), static_cast<double>(word_box.y0),
                static_cast<double>(word_box.x1()), static_cast<double>(word_box.y1())};

  // Fill colour. Foreground pixels are split into up to three colour
  // clusters (fill, border ring, shadow); the fill cluster is the one lying
  // deepest inside the fitted glyphs. Its pixels are decomposed at alpha 1.
  std::vector<Eigen::Vector3d> fg;
  std::vector<double> depth;
  std::vector<std::pair<Index, Index>> where;
  for (Index y = 0; y < word_box.height; ++y) {
    for (Index x = 0; x < word_box.width; ++x) {
      if (mask_box(y, x) < 0.5f) continue;
      fg.push_back(image.pixel(word_box.x0 + x, word_box.y0 + y).cast<double>().matrix());
      depth.push_back(fills[best](x, y));
      where.emplace_back(word_box.x0 + x, word_box.y0 + y);
    }
  }
  AlphaMap fill_alpha(image.width(), image.height());
  if (!fg.empty()) {
    const auto labels = color_clusters(fg, 3);
    std::array<double, 3> sum{}, count{};
    for (std::size_t i = 0; i < fg.size(); ++i) {
      sum[labels[i]] += depth[i];
      ++count[labels[i]];
    }
    int pick = 0;
    for (int k = 1; k < 3; ++k) {
      if (count[k] > 0 && (count[pick] == 0 || sum[k] / count[k] > sum[pick] / count[pick])) pick = k;
    }
    for (std::size_t i = 0; i < fg.size(); ++i) {
      if (labels[i] == pick) fill_alpha(where[i].first, where[i].second) = 1.0f;
    }
  }
  Color fill;
  double fill_conf = 0;
  try {
    const auto c = modal_color(invert_layer(image, background, fill_alpha, word_box));
    fill = c.color;
    fill_conf = c.histogram_peak_mass;
  } catch (const NotObservableError&) {
    try {
      fill = modal_color(invert_layer(image, background, est.mask, word_box)).color;
    } catch (const NotObservableError&) {
      Color mean = Color::Zero();
      for (int c = 0; c < 3; ++c) {
        mean[c] = background.channel(c).block(word_box.y0, word_box.x0, word_box.height, word_box.width)
                      .cast<double>()
                      .mean();
      }
      fill = 1.0 - mean;
    }
  }

  element.effects.fill.color = fill;
  element.effects.border = {false, 3, (1.0 - fill).eval()};
  element.effects.shadow = {false, 1.0, 0.0, 0.0, (0.3 * fill).eval()};
  const PixelRect crop = word_crop(box, image.width(), image.height(), config);
  RefinableParams p = params_from_element(element, atlas, crop);

  for (int f = 0; f < nf; ++f) p.font_logits[f] = 8.0 * (out.font_scores[f] - top);
  p.font_logits[best] += 1.0;
  // Stretch horizontally so the fitted ink box spans the word box.
  const double sx = box.width() / std::max(fitted.width(), 1e-6);
  p.word_affine[0] = (sx - 1.0) * p.word_ref_length;
  p.border_visibility_logit = 0;
  p.shadow_visibility_logit = 0;
  p.border_bin_logits.setZero();
  p.border_bin_logits[2] = 1.0;
  p.shadow_blur_raw = inverse_softplus(1.0);
  p.shadow_offset.setZero();

  out.params = std::move(p);
  out.background = background;
  const Eigen::VectorXd att = font_attention(out.params.font_logits, config.top_k_fonts);
  out.confidence["font"] = att.maxCoeff();
  out.confidence["mask"] = std::clamp(est.separation, 0.0, 1.0);
  out.confidence["fill_color"] = fill_conf;
  return out;
}

}  // namespace derender
