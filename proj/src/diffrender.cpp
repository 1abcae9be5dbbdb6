#include "derender/diffrender.hpp"

#include <Eigen/LU>

#include <map>
#include <numeric>

#include <fmt/format.h>

namespace derender {

std::string_view group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::font: return "font";
    case ParamGroup::placement: return "placement";
    case ParamGroup::color: return "color";
    case ParamGroup::border: return "border";
    case ParamGroup::shadow: return "shadow";
  }
  return "?";
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

double softplus(double x) { return x > 30 ? x : std::log1p(std::exp(x)); }

double inverse_softplus(double y) {
  if (y <= 0) throw Error("diffrender", "inverse_softplus: argument must be > 0");
  return y > 30 ? y : std::log(std::expm1(y));
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const Eigen::ArrayXd e = (logits.array() - logits.maxCoeff()).exp();
  return (e / e.sum()).matrix();
}

Eigen::VectorXd font_attention(const Eigen::VectorXd& logits, int top_k) {
  if (top_k < 1) throw Error("diffrender", "font_attention: top_k must be >= 1");
  const Index n = logits.size();
  if (n == 0) throw Error("diffrender", "font_attention: no fonts");
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  const Index keep = std::min<Index>(top_k, n);
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return logits[a] > logits[b]; });
  double max_kept = logits[order[0]];
  Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
  double sum = 0;
  for (Index k = 0; k < keep; ++k) {
    p[order[k]] = std::exp(logits[order[k]] - max_kept);
    sum += p[order[k]];
  }
  return p / sum;
}

double soft_visibility(double logit_value, double k) {
  return sigmoid(k * (sigmoid(logit_value) - 0.5));
}

Color decode_color(const Eigen::Vector3d& logits) {
  return {sigmoid(logits[0]), sigmoid(logits[1]), sigmoid(logits[2])};
}

Eigen::Vector3d encode_color(const Color& color) {
  Eigen::Vector3d out;
  for (int c = 0; c < 3; ++c) out[c] = logit(std::clamp(color[c], 1e-4, 1.0 - 1e-4));
  return out;
}

// ---------------------------------------------------------------------------
// Flat parameter layout

std::vector<ParamSpan> param_layout(const RefinableParams& p) {
  std::vector<ParamSpan> spans;
  Index offset = 0;
  auto add = [&](const char* name, Index size, ParamGroup group) {
    spans.push_back({name, offset, size, group});
    offset += size;
  };
  add("font_logits", p.font_logits.size(), ParamGroup::font);
  add("word_affine", 6, ParamGroup::placement);
  add("char_affines", 6 * static_cast<Index>(p.char_affines.size()), ParamGroup::placement);
  add("fill_color", 3, ParamGroup::color);
  add("border_visibility", 1, ParamGroup::border);
  add("shadow_visibility", 1, ParamGroup::shadow);
  add("border_bins", kBorderBins, ParamGroup::border);
  add("border_color", 3, ParamGroup::color);
  add("shadow_color", 3, ParamGroup::color);
  add("shadow_blur", 1, ParamGroup::shadow);
  add("shadow_offset", 2, ParamGroup::shadow);
  return spans;
}

Eigen::VectorXd pack(const RefinableParams& p) {
  const auto spans = param_layout(p);
  Eigen::VectorXd v(spans.back().offset + spans.back().size);
  Index o = 0;
  auto put = [&](const auto& x) {
    v.segment(o, x.size()) = x;
    o += x.size();
  };
  put(p.font_logits);
  put(p.word_affine);
  for (const auto& a : p.char_affines) put(a);
  put(p.fill_color_logits);
  v[o++] = p.border_visibility_logit;
  v[o++] = p.shadow_visibility_logit;
  put(p.border_bin_logits);
  put(p.border_color_logits);
  put(p.shadow_color_logits);
  v[o++] = p.shadow_blur_raw;
  put(p.shadow_offset);
  return v;
}

void unpack(const Eigen::VectorXd& v, RefinableParams& p) {
  const auto spans = param_layout(p);
  if (v.size() != spans.back().offset + spans.back().size) {
    throw Error("diffrender", "unpack: parameter vector has the wrong length");
  }
  Index o = 0;
  auto take = [&](auto& x) {
    x = v.segment(o, x.size());
    o += x.size();
  };
  take(p.font_logits);
  take(p.word_affine);
  for (auto& a : p.char_affines) take(a);
  take(p.fill_color_logits);
  p.border_visibility_logit = v[o++];
  p.shadow_visibility_logit = v[o++];
  take(p.border_bin_logits);
  take(p.border_color_logits);
  take(p.shadow_color_logits);
  p.shadow_blur_raw = v[o++];
  take(p.shadow_offset);
}

const ParamSpan& GradientVector::span(std::string_view name) const {
  for (const auto& s : index_map) {
    if (s.name == name) return s;
  }
  throw Error("diffrender", fmt::format("no parameter span named '{}'", name));
}

Eigen::VectorXd GradientVector::segment(std::string_view name) const {
  const auto& s = span(name);
  return values.segment(s.offset, s.size);
}

// ---------------------------------------------------------------------------
// Blending

AlphaMapT<double> blended_glyph(const GlyphAtlas& atlas, const Eigen::VectorXd& attention, int glyph_index,
                                GlyphVariant variant) {
  if (attention.size() != atlas.font_count()) throw Error("diffrender", "attention size != font count");
  const int r = atlas.cell_resolution();
  AlphaMapT<double> out(r, r);
  for (int f = 0; f < atlas.font_count(); ++f) {
    if (attention[f] == 0) continue;
    out.plane() += attention[f] * atlas.cell(f, glyph_index, variant).plane().cast<double>();
  }
  return out;
}

AlphaMapT<double> blended_border(const GlyphAtlas& atlas, const Eigen::VectorXd& attention,
                                 const Eigen::VectorXd& bin_weights, int glyph_index) {
  if (attention.size() != atlas.font_count()) throw Error("diffrender", "attention size != font count");
  const int r = atlas.cell_resolution();
  AlphaMapT<double> out(r, r);
  for (int f = 0; f < atlas.font_count(); ++f) {
    if (attention[f] == 0) continue;
    for (int b = 0; b < kBorderBins; ++b) {
      out.plane() += (attention[f] * bin_weights[b]) *
                     atlas.cell(f, glyph_index, GlyphVariant::border(b + 1)).plane().cast<double>();
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Geometry

namespace {

Eigen::Matrix3d translation(double x, double y) {
  Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
  t(0, 2) = x;
  t(1, 2) = y;
  return t;
}

Eigen::Matrix2d linear_part(const Affine6& a, double ref_length) {
  Eigen::Matrix2d m;
  m << 1 + a[0] / ref_length, a[1] / ref_length, a[2] / ref_length, 1 + a[3] / ref_length;
  return m;
}

// [M, c + t - M c] as a homogeneous matrix.
Eigen::Matrix3d about_center(const Affine6& a, double ref_length, const Eigen::Vector2d& c) {
  const Eigen::Matrix2d m = linear_part(a, ref_length);
  Eigen::Matrix3d out = Eigen::Matrix3d::Identity();
  out.topLeftCorner<2, 2>() = m;
  out.topRightCorner<2, 1>() = c + a.tail<2>() - m * c;
  return out;
}

// Raw-parameter gradient from the adjoint of about_center's matrix.
Affine6 about_center_adjoint(const Eigen::Matrix3d& bar, double ref_length, const Eigen::Vector2d& c) {
  const Eigen::Matrix2d e = bar.topLeftCorner<2, 2>();
  const Eigen::Vector2d t = bar.topRightCorner<2, 1>();
  const Eigen::Matrix2d m_bar = e - t * c.transpose();
  Affine6 out;
  out << m_bar(0, 0) / ref_length, m_bar(0, 1) / ref_length, m_bar(1, 0) / ref_length,
      m_bar(1, 1) / ref_length, t[0], t[1];
  return out;
}

Eigen::Matrix3d base_matrix(const CharAnchor& a, int cell_resolution) {
  const double s = a.cell_scale;
  const double half = 0.5 * cell_resolution;
  Eigen::Matrix3d b = Eigen::Matrix3d::Identity();
  b(0, 0) = s;
  b(1, 1) = s;
  b(0, 2) = a.center.x() - s * half;
  b(1, 2) = a.center.y() - s * half;
  return b;
}

}  // namespace

Eigen::Matrix3d char_transform(const RefinableParams& p, int i, int cell_resolution) {
  const auto& anchor = p.anchors.at(i);
  const Eigen::Matrix3d w = about_center(p.word_affine, p.word_ref_length, p.word_center);
  const Eigen::Matrix3d a = about_center(p.char_affines.at(i), anchor.ref_length, anchor.center);
  return translation(-0.5, -0.5) * w * a * base_matrix(anchor, cell_resolution) * translation(0.5, 0.5);
}

// ---------------------------------------------------------------------------
// Forward / reverse evaluation

namespace {

struct SplineTaps {
  Index x0 = 0, y0 = 0;
  double wx[4], wy[4], dx[4], dy[4];

  void set(double u, double v) {
    x0 = CubicBSplineKernel::first(u);
    y0 = CubicBSplineKernel::first(v);
    const double tx = u - std::floor(u);
    const double ty = v - std::floor(v);
    CubicBSplineKernel::weights(tx, wx);
    CubicBSplineKernel::weights(ty, wy);
    CubicBSplineKernel::derivatives(tx, dx);
    CubicBSplineKernel::derivatives(ty, dy);
  }
};

std::vector<double> gaussian_dtaps(double sigma, const std::vector<double>& taps) {
  const int r = static_cast<int>(taps.size() / 2);
  const double s3 = sigma * sigma * sigma;
  double mean_k2 = 0;
  for (int k = -r; k <= r; ++k) mean_k2 += taps[k + r] * k * k;
  std::vector<double> d(taps.size());
  for (int k = -r; k <= r; ++k) d[k + r] = taps[k + r] * (k * k - mean_k2) / s3;
  return d;
}

class Evaluator {
 public:
  Evaluator(const RefinableParams& p, const GlyphAtlas& atlas, const RasterImage& bg, const DiffConfig& cfg)
      : p_(p), atlas_(atlas), cfg_(cfg), res_(atlas.cell_resolution()), w_(bg.width()), h_(bg.height()) {
    if (bg.empty()) throw Error("diffrender", "empty background crop");
    if (p.font_logits.size() != atlas.font_count()) {
      throw Error("diffrender", "font_logits size does not match the atlas");
    }
    if (p.char_affines.size() != p.anchors.size() || p.anchors.empty()) {
      throw Error("diffrender", "char_affines and anchors must be nonempty and equal in count");
    }
    const Eigen::VectorXd flat = pack(p);
    for (const auto& span : param_layout(p)) {
      if (!flat.segment(span.offset, span.size).allFinite()) {
        throw Error("diffrender", fmt::format("non-finite value in '{}'", span.name));
      }
    }
    bg_ = bg.cast<double>();
  }

  void forward();
  double loss(const RasterImage& target);
  GradientVector backward(const RasterImage& target);

  Reconstruction layers() const { return {out_, AlphaMapT<double>(as_), AlphaMapT<double>(uf_), AlphaMapT<double>(ab_)}; }

 private:
  struct CharState {
    Eigen::Matrix3d f;  // cell index -> crop index
    Eigen::Matrix3d g;  // inverse
    PixelRect win;
    int slot = 0;
    Plane<double> fill, border;  // full crop
  };

  void sample_char(CharState& c);

  const RefinableParams& p_;
  const GlyphAtlas& atlas_;
  const DiffConfig& cfg_;
  const int res_;
  const Index w_, h_;
  RasterImageT<double> bg_;

  Eigen::VectorXd attention_, bins_;
  std::vector<int> slot_glyph_;
  std::vector<Plane<double>> zf_, zb_;
  std::vector<CharState> chars_;
  Plane<double> uf_, ub_, s0_, hpass_, t_, as_, ab_;
  std::vector<double> taps_;
  double sigma_ = 0, vb_ = 0, vs_ = 0;
  Color cf_, cb_, cs_;
  RasterImageT<double> c1_, c2_, out_;
};

void Evaluator::sample_char(CharState& c) {
  c.fill = Plane<double>::Zero(h_, w_);
  c.border = Plane<double>::Zero(h_, w_);
  if (c.win.empty()) return;
  const auto& zf = zf_[c.slot];
  const auto& zb = zb_[c.slot];
  SplineTaps t;
  for (Index y = c.win.y0; y < c.win.y1(); ++y) {
    for (Index x = c.win.x0; x < c.win.x1(); ++x) {
      t.set(c.g(0, 0) * x + c.g(0, 1) * y + c.g(0, 2), c.g(1, 0) * x + c.g(1, 1) * y + c.g(1, 2));
      double vf = 0, vb = 0;
      for (int j = 0; j < 4; ++j) {
        const Index sy = t.y0 + j;
        if (sy < 0 || sy >= res_) continue;
        double rf = 0, rb = 0;
        for (int i = 0; i < 4; ++i) {
          const Index sx = t.x0 + i;
          if (sx < 0 || sx >= res_) continue;
          rf += t.wx[i] * zf(sy, sx);
          rb += t.wx[i] * zb(sy, sx);
        }
        vf += t.wy[j] * rf;
        vb += t.wy[j] * rb;
      }
      c.fill(y, x) = vf;
      c.border(y, x) = vb;
    }
  }
}

void Evaluator::forward() {
  attention_ = font_attention(p_.font_logits, cfg_.top_k_fonts);
  bins_ = softmax(p_.border_bin_logits);

  std::map<int, int> slots;
  chars_.resize(p_.anchors.size());
  for (std::size_t i = 0; i < p_.anchors.size(); ++i) {
    const int g = p_.anchors[i].glyph_index;
    auto [it, inserted] = slots.emplace(g, static_cast<int>(slot_glyph_.size()));
    if (inserted) {
      slot_glyph_.push_back(g);
      zf_.push_back(blended_glyph(atlas_, attention_, g, GlyphVariant::fill()).plane());
      zb_.push_back(blended_border(atlas_, attention_, bins_, g).plane());
    }
    auto& c = chars_[i];
    c.slot = it->second;
    c.f = char_transform(p_, static_cast<int>(i), res_);
    const double det = c.f.topLeftCorner<2, 2>().determinant();
    if (!std::isfinite(det) || std::abs(det) < 1e-9) {
      throw Error("diffrender", fmt::format("char_affines: degenerate transform for character {}", i));
    }
    c.g = c.f.inverse();
    // Footprint of the kernel support (-2, R+1) of the cell.
    double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
    for (double cu : {-2.0, res_ + 1.0}) {
      for (double cv : {-2.0, res_ + 1.0}) {
        const Eigen::Vector3d q = c.f * Eigen::Vector3d(cu, cv, 1);
        x0 = std::min(x0, q.x());
        x1 = std::max(x1, q.x());
        y0 = std::min(y0, q.y());
        y1 = std::max(y1, q.y());
      }
    }
    const PixelRect crop{0, 0, w_, h_};
    if (x1 < -1 || y1 < -1 || x0 > w_ + 1 || y0 > h_ + 1) {
      c.win = {};
    } else {
      const Index ix0 = static_cast<Index>(std::floor(std::max(x0, -2.0))) - 1;
      const Index iy0 = static_cast<Index>(std::floor(std::max(y0, -2.0))) - 1;
      const Index ix1 = static_cast<Index>(std::ceil(std::min(x1, w_ + 2.0))) + 2;
      const Index iy1 = static_cast<Index>(std::ceil(std::min(y1, h_ + 2.0))) + 2;
      c.win = PixelRect{ix0, iy0, ix1 - ix0, iy1 - iy0}.intersect(crop);
    }
    sample_char(c);
  }

  // Probabilistic unions.
  Plane<double> keep_f = Plane<double>::Ones(h_, w_);
  Plane<double> keep_b = Plane<double>::Ones(h_, w_);
  for (const auto& c : chars_) {
    keep_f *= 1.0 - c.fill;
    keep_b *= 1.0 - c.border;
  }
  uf_ = 1.0 - keep_f;
  ub_ = 1.0 - keep_b;

  vb_ = soft_visibility(p_.border_visibility_logit, cfg_.db_steepness);
  vs_ = soft_visibility(p_.shadow_visibility_logit, cfg_.db_steepness);
  ab_ = vb_ * (ub_ - uf_);

  // Shadow: bilinear shift of the fill union, then blur.
  s0_ = Plane<double>::Zero(h_, w_);
  const double dx = p_.shadow_offset.x();
  const double dy = p_.shadow_offset.y();
  for (Index y = 0; y < h_; ++y) {
    for (Index x = 0; x < w_; ++x) s0_(y, x) = sample<BilinearKernel>(uf_, x - dx, y - dy);
  }
  sigma_ = softplus(p_.shadow_blur_raw);
  taps_ = gaussian_kernel(sigma_);
  convolve_pass<double>(s0_, taps_, true, hpass_);
  convolve_pass<double>(hpass_, taps_, false, t_);
  as_ = vs_ * t_;

  cf_ = decode_color(p_.fill_color_logits);
  cb_ = decode_color(p_.border_color_logits);
  cs_ = decode_color(p_.shadow_color_logits);
  c1_ = RasterImageT<double>(w_, h_);
  c2_ = RasterImageT<double>(w_, h_);
  out_ = RasterImageT<double>(w_, h_);
  for (int ch = 0; ch < 3; ++ch) {
    c1_.channel(ch) = (1.0 - as_) * bg_.channel(ch) + as_ * cs_[ch];
    c2_.channel(ch) = (1.0 - uf_) * c1_.channel(ch) + uf_ * cf_[ch];
    out_.channel(ch) = (1.0 - ab_) * c2_.channel(ch) + ab_ * cb_[ch];
  }
}

double Evaluator::loss(const RasterImage& target) {
  if (target.width() != w_ || target.height() != h_) {
    throw Error("diffrender", "target and reconstruction dimensions differ");
  }
  double sum = 0;
  for (int ch = 0; ch < 3; ++ch) {
    sum += (out_.channel(ch) - target.channel(ch).cast<double>()).abs().sum();
  }
  const double l = sum / (3.0 * static_cast<double>(w_ * h_));
  if (!std::isfinite(l)) throw Error("diffrender", "non-finite loss");
  return l;
}

GradientVector Evaluator::backward(const RasterImage& target) {
  const double norm = 1.0 / (3.0 * static_cast<double>(w_ * h_));
  Plane<double> ab_bar = Plane<double>::Zero(h_, w_);
  Plane<double> af_bar = Plane<double>::Zero(h_, w_);
  Plane<double> as_bar = Plane<double>::Zero(h_, w_);
  Eigen::Vector3d cf_bar = Eigen::Vector3d::Zero(), cb_bar = Eigen::Vector3d::Zero(),
                  cs_bar = Eigen::Vector3d::Zero();
  for (int ch = 0; ch < 3; ++ch) {
    const Plane<double> r = out_.channel(ch) - target.channel(ch).cast<double>();
    const Plane<double> g3 = norm * ((r > 0).cast<double>() - (r < 0).cast<double>());
    ab_bar += g3 * (cb_[ch] - c2_.channel(ch));
    cb_bar[ch] = (g3 * ab_).sum();
    const Plane<double> g2 = g3 * (1.0 - ab_);
    af_bar += g2 * (cf_[ch] - c1_.channel(ch));
    cf_bar[ch] = (g2 * uf_).sum();
    const Plane<double> g1 = g2 * (1.0 - uf_);
    as_bar += g1 * (cs_[ch] - bg_.channel(ch));
    cs_bar[ch] = (g1 * as_).sum();
  }

  const double vb_bar = (ab_bar * (ub_ - uf_)).sum();
  const double vs_bar = (as_bar * t_).sum();
  Plane<double> ub_bar = vb_ * ab_bar;
  Plane<double> uf_bar = af_bar - vb_ * ab_bar;

  // Blur: adjoint and sigma derivative.
  const Plane<double> t_bar = vs_ * as_bar;
  Plane<double> h_bar = Plane<double>::Zero(h_, w_);
  convolve_pass_adjoint<double>(t_bar, taps_, false, h_bar);
  Plane<double> s0_bar = Plane<double>::Zero(h_, w_);
  convolve_pass_adjoint<double>(h_bar, taps_, true, s0_bar);
  double sigma_bar = 0;
  if (taps_.size() > 1) {
    const auto dtaps = gaussian_dtaps(sigma_, taps_);
    Plane<double> dh, dt1, dt2;
    convolve_pass<double>(s0_, dtaps, true, dh);
    convolve_pass<double>(dh, taps_, false, dt1);
    convolve_pass<double>(hpass_, dtaps, false, dt2);
    sigma_bar = (t_bar * (dt1 + dt2)).sum();
  }

  // Shift: adjoint into the fill union and offset derivatives.
  double dx_bar = 0, dy_bar = 0;
  {
    const double dx = p_.shadow_offset.x();
    const double dy = p_.shadow_offset.y();
    for (Index y = 0; y < h_; ++y) {
      for (Index x = 0; x < w_; ++x) {
        const double g = s0_bar(y, x);
        if (g == 0) continue;
        const double u = x - dx, v = y - dy;
        const Index ix = static_cast<Index>(std::floor(u));
        const Index iy = static_cast<Index>(std::floor(v));
        const double tx = u - ix, ty = v - iy;
        const double wx[2] = {1 - tx, tx}, wy[2] = {1 - ty, ty};
        const double dwx[2] = {-1, 1}, dwy[2] = {-1, 1};
        for (int j = 0; j < 2; ++j) {
          const Index sy = iy + j;
          if (sy < 0 || sy >= h_) continue;
          for (int i = 0; i < 2; ++i) {
            const Index sx = ix + i;
            if (sx < 0 || sx >= w_) continue;
            const double val = uf_(sy, sx);
            uf_bar(sy, sx) += g * wx[i] * wy[j];
            dx_bar -= g * dwx[i] * wy[j] * val;
            dy_bar -= g * wx[i] * dwy[j] * val;
          }
        }
      }
    }
  }

  // Unions -> per-character maps -> blended cells and transforms.
  std::vector<Plane<double>> zf_bar(zf_.size(), Plane<double>::Zero(res_, res_));
  std::vector<Plane<double>> zb_bar(zb_.size(), Plane<double>::Zero(res_, res_));
  Eigen::Matrix3d w_bar = Eigen::Matrix3d::Zero();
  std::vector<Affine6> char_grads(chars_.size(), Affine6::Zero());
  const Eigen::Matrix3d wm = about_center(p_.word_affine, p_.word_ref_length, p_.word_center);
  const Eigen::Matrix3d shift_in = translation(0.5, 0.5), shift_out = translation(-0.5, -0.5);

  for (std::size_t i = 0; i < chars_.size(); ++i) {
    auto& c = chars_[i];
    if (c.win.empty()) continue;
    const auto& zf = zf_[c.slot];
    const auto& zb = zb_[c.slot];
    auto& zfb = zf_bar[c.slot];
    auto& zbb = zb_bar[c.slot];
    Eigen::Matrix3d g_bar = Eigen::Matrix3d::Zero();
    SplineTaps t;
    for (Index y = c.win.y0; y < c.win.y1(); ++y) {
      for (Index x = c.win.x0; x < c.win.x1(); ++x) {
        double other_f = 1, other_b = 1;
        for (std::size_t j = 0; j < chars_.size(); ++j) {
          if (j == i) continue;
          other_f *= 1.0 - chars_[j].fill(y, x);
          other_b *= 1.0 - chars_[j].border(y, x);
        }
        const double fb = uf_bar(y, x) * other_f;
        const double bb = ub_bar(y, x) * other_b;
        if (fb == 0 && bb == 0) continue;
        t.set(c.g(0, 0) * x + c.g(0, 1) * y + c.g(0, 2), c.g(1, 0) * x + c.g(1, 1) * y + c.g(1, 2));
        double u_bar = 0, v_bar = 0;
        for (int j = 0; j < 4; ++j) {
          const Index sy = t.y0 + j;
          if (sy < 0 || sy >= res_) continue;
          for (int k = 0; k < 4; ++k) {
            const Index sx = t.x0 + k;
            if (sx < 0 || sx >= res_) continue;
            const double w = t.wx[k] * t.wy[j];
            zfb(sy, sx) += fb * w;
            zbb(sy, sx) += bb * w;
            const double val = fb * zf(sy, sx) + bb * zb(sy, sx);
            u_bar += val * t.dx[k] * t.wy[j];
            v_bar += val * t.wx[k] * t.dy[j];
          }
        }
        g_bar(0, 0) += u_bar * x;
        g_bar(0, 1) += u_bar * y;
        g_bar(0, 2) += u_bar;
        g_bar(1, 0) += v_bar * x;
        g_bar(1, 1) += v_bar * y;
        g_bar(1, 2) += v_bar;
      }
    }
    // G = F^-1  =>  F_bar = -G^T G_bar G^T, then peel the index shifts.
    const Eigen::Matrix3d f_idx_bar = -c.g.transpose() * g_bar * c.g.transpose();
    const Eigen::Matrix3d f_bar = shift_out.transpose() * f_idx_bar * shift_in.transpose();
    const auto& anchor = p_.anchors[i];
    const Eigen::Matrix3d am = about_center(p_.char_affines[i], anchor.ref_length, anchor.center);
    const Eigen::Matrix3d bm = base_matrix(anchor, res_);
    w_bar += f_bar * (am * bm).transpose();
    const Eigen::Matrix3d a_bar = wm.transpose() * f_bar * bm.transpose();
    char_grads[i] = about_center_adjoint(a_bar, anchor.ref_length, anchor.center);
  }

  // Blended cells -> attention and bin weights.
  const int nf = atlas_.font_count();
  Eigen::VectorXd p_bar = Eigen::VectorXd::Zero(nf);
  Eigen::VectorXd q_bar = Eigen::VectorXd::Zero(kBorderBins);
  for (std::size_t s = 0; s < slot_glyph_.size(); ++s) {
    const int g = slot_glyph_[s];
    for (int f = 0; f < nf; ++f) {
      if (attention_[f] == 0) continue;
      p_bar[f] += (zf_bar[s] * atlas_.cell(f, g, GlyphVariant::fill()).plane().cast<double>()).sum();
      for (int b = 0; b < kBorderBins; ++b) {
        const double d =
            (zb_bar[s] * atlas_.cell(f, g, GlyphVariant::border(b + 1)).plane().cast<double>()).sum();
        p_bar[f] += bins_[b] * d;
        q_bar[b] += attention_[f] * d;
      }
    }
  }
  const double pp = attention_.dot(p_bar);
  Eigen::VectorXd font_grad = Eigen::VectorXd::Zero(nf);
  for (int f = 0; f < nf; ++f) {
    if (attention_[f] != 0) font_grad[f] = attention_[f] * (p_bar[f] - pp);
  }
  const Eigen::VectorXd bin_grad = (bins_.array() * (q_bar.array() - bins_.dot(q_bar))).matrix();

  auto color_grad = [](const Color& c, const Eigen::Vector3d& bar) {
    return Eigen::Vector3d((bar.array() * c * (1.0 - c)).matrix());
  };
  auto vis_grad = [&](double logit_value, double v) {
    const double s = sigmoid(logit_value);
    return cfg_.db_steepness * v * (1 - v) * s * (1 - s);
  };

  RefinableParams g = p_;
  g.font_logits = font_grad;
  g.word_affine = about_center_adjoint(w_bar, p_.word_ref_length, p_.word_center);
  g.char_affines = char_grads;
  g.fill_color_logits = color_grad(cf_, cf_bar);
  g.border_visibility_logit = vb_bar * vis_grad(p_.border_visibility_logit, vb_);
  g.shadow_visibility_logit = vs_bar * vis_grad(p_.shadow_visibility_logit, vs_);
  g.border_bin_logits = bin_grad;
  g.border_color_logits = color_grad(cb_, cb_bar);
  g.shadow_color_logits = color_grad(cs_, cs_bar);
  g.shadow_blur_raw = sigma_bar * sigmoid(p_.shadow_blur_raw);
  g.shadow_offset = Eigen::Vector2d(dx_bar, dy_bar);

  GradientVector out{pack(g), param_layout(p_)};
  for (const auto& span : out.index_map) {
    if (!out.values.segment(span.offset, span.size).allFinite()) {
      throw Error("diffrender", fmt::format("non-finite gradient in '{}'", span.name));
    }
  }
  return out;
}

}  // namespace

Reconstruction reconstruct_layers(const RefinableParams& params, const GlyphAtlas& atlas,
                                  const RasterImage& background_crop, const DiffConfig& config) {
  Evaluator e(params, atlas, background_crop, config);
  e.forward();
  return e.layers();
}

RasterImageT<double> reconstruct(const RefinableParams& params, const GlyphAtlas& atlas,
                                 const RasterImage& background_crop, const DiffConfig& config) {
  return reconstruct_layers(params, atlas, background_crop, config).image;
}

LossAndGradients loss_and_gradients(const RefinableParams& params, const GlyphAtlas& atlas,
                                    const RasterImage& background_crop, const RasterImage& target,
                                    const DiffConfig& config) {
  Evaluator e(params, atlas, background_crop, config);
  e.forward();
  LossAndGradients out;
  out.loss = e.loss(target);
  out.grads = e.backward(target);
  return out;
}

double evaluate_loss(const RefinableParams& params, const GlyphAtlas& atlas, const RasterImage& background_crop,
                     const RasterImage& target, const DiffConfig& config) {
  Evaluator e(params, atlas, background_crop, config);
  e.forward();
  return e.loss(target);
}

// ---------------------------------------------------------------------------

PixelRect word_crop(const Box& box, Index canvas_width, Index canvas_height, const DiffConfig& config) {
  const double px = std::max(config.crop_padding * box.width(), static_cast<double>(config.min_crop_padding));
  const double py = std::max(config.crop_padding * box.height(), static_cast<double>(config.min_crop_padding));
  const Index x0 = static_cast<Index>(std::floor(box.x0 - px));
  const Index y0 = static_cast<Index>(std::floor(box.y0 - py));
  const Index x1 = static_cast<Index>(std::ceil(box.x1 + px));
  const Index y1 = static_cast<Index>(std::ceil(box.y1 + py));
  const PixelRect r = PixelRect{x0, y0, x1 - x0, y1 - y0}.intersect({0, 0, canvas_width, canvas_height});
  if (r.empty()) throw Error("diffrender", "word box lies outside the canvas");
  return r;
}

RefinableParams params_from_element(const TextElement& element, const GlyphAtlas& atlas, const PixelRect& crop) {
  validate_element(element, atlas);
  const Layout lay = layout(element, atlas);
  RefinableParams p;
  p.text = element.text;
  p.crop = crop;
  const Eigen::Vector2d origin(static_cast<double>(crop.x0), static_cast<double>(crop.y0));
  for (const auto& c : lay.chars) {
    p.anchors.push_back({c.glyph_index, c.center - origin, c.cell_scale, 0.5 * element.font_size});
  }
  p.char_affines.assign(p.anchors.size(), Affine6::Zero());
  p.word_center = lay.word_box.center() - origin;
  p.word_ref_length = 0.5 * std::max({lay.word_box.width(), lay.word_box.height(), 1.0});

  p.font_logits = Eigen::VectorXd::Constant(atlas.font_count(), -30.0);
  p.font_logits[element.font_index] = 0;
  const auto& fx = element.effects;
  p.fill_color_logits = encode_color(fx.fill.color);
  p.border_visibility_logit = fx.border.visible ? 8.0 : -8.0;
  p.shadow_visibility_logit = fx.shadow.visible ? 8.0 : -8.0;
  p.border_bin_logits.setConstant(-30.0);
  p.border_bin_logits[fx.border.width_bin - 1] = 0;
  p.border_color_logits = encode_color(fx.border.color);
  p.shadow_color_logits = encode_color(fx.shadow.color);
  p.shadow_blur_raw = fx.shadow.blur > 0 ? inverse_softplus(fx.shadow.blur) : -30.0;
  p.shadow_offset = {fx.shadow.offset_x, fx.shadow.offset_y};
  return p;
}

RefinableParams params_from_element(const TextElement& element, const GlyphAtlas& atlas, Index canvas_width,
                                    Index canvas_height, const DiffConfig& config) {
  const Box box = layout(element, atlas).word_box;
  return params_from_element(element, atlas, word_crop(box, canvas_width, canvas_height, config));
}

}  // namespace derender
