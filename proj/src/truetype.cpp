#include "derender/truetype.hpp"

#include <algorithm>
#include <cstring>

#include <fmt/format.h>

#include "derender/png_io.hpp"

namespace derender {
namespace {

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& d) : d_(d) {}

  void require(std::size_t off, std::size_t len) const {
    if (off + len > d_.size() || off + len < off) throw Error("atlas", "truncated font data");
  }
  std::uint8_t u8(std::size_t off) const {
    require(off, 1);
    return d_[off];
  }
  std::uint16_t u16(std::size_t off) const {
    require(off, 2);
    return static_cast<std::uint16_t>((d_[off] << 8) | d_[off + 1]);
  }
  std::int16_t i16(std::size_t off) const { return static_cast<std::int16_t>(u16(off)); }
  std::uint32_t u32(std::size_t off) const {
    require(off, 4);
    return (std::uint32_t(d_[off]) << 24) | (std::uint32_t(d_[off + 1]) << 16) |
           (std::uint32_t(d_[off + 2]) << 8) | std::uint32_t(d_[off + 3]);
  }
  double f2dot14(std::size_t off) const { return i16(off) / 16384.0; }

 private:
  const std::vector<std::uint8_t>& d_;
};

struct TableRecord {
  std::size_t offset = 0;
  std::size_t length = 0;
};

std::optional<TableRecord> find_table(const Reader& r, const char* tag) {
  const int n = r.u16(4);
  for (int i = 0; i < n; ++i) {
    const std::size_t rec = 12 + 16 * static_cast<std::size_t>(i);
    r.require(rec, 16);
    std::uint32_t t = r.u32(rec);
    const std::uint32_t want = (std::uint32_t(std::uint8_t(tag[0])) << 24) |
                               (std::uint32_t(std::uint8_t(tag[1])) << 16) |
                               (std::uint32_t(std::uint8_t(tag[2])) << 8) |
                               std::uint32_t(std::uint8_t(tag[3]));
    if (t == want) {
      TableRecord out{r.u32(rec + 8), r.u32(rec + 12)};
      r.require(out.offset, out.length);
      return out;
    }
  }
  return std::nullopt;
}

std::string read_name(const Reader& r, const TableRecord& table, int name_id) {
  const std::size_t base = table.offset;
  const int count = r.u16(base + 2);
  const std::size_t strings = base + r.u16(base + 4);
  std::string mac;
  for (int i = 0; i < count; ++i) {
    const std::size_t rec = base + 6 + 12 * static_cast<std::size_t>(i);
    const int platform = r.u16(rec);
    const int id = r.u16(rec + 6);
    const std::size_t len = r.u16(rec + 8);
    const std::size_t off = strings + r.u16(rec + 10);
    if (id != name_id) continue;
    r.require(off, len);
    if (platform == 3 || platform == 0) {
      std::string s;
      for (std::size_t k = 0; k + 1 < len; k += 2) {
        const std::uint16_t ch = r.u16(off + k);
        s.push_back(ch < 128 ? static_cast<char>(ch) : '?');
      }
      if (!s.empty()) return s;
    } else if (platform == 1 && mac.empty()) {
      for (std::size_t k = 0; k < len; ++k) {
        const auto ch = r.u8(off + k);
        mac.push_back(ch < 128 ? static_cast<char>(ch) : '?');
      }
    }
  }
  return mac;
}

void flatten_quadratic(const Eigen::Vector2d& p0, const Eigen::Vector2d& c, const Eigen::Vector2d& p1,
                       std::vector<Eigen::Vector2d>& out) {
  constexpr int kSegments = 8;
  for (int i = 1; i <= kSegments; ++i) {
    const double t = static_cast<double>(i) / kSegments;
    const double u = 1.0 - t;
    out.push_back(u * u * p0 + 2 * u * t * c + t * t * p1);
  }
}

}  // namespace

TrueTypeFont TrueTypeFont::load(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const Error&) {
    throw Error("atlas", fmt::format("unreadable font file '{}'", path.string()));
  }
  try {
    return parse(std::move(bytes), path.stem().string());
  } catch (const Error& e) {
    throw Error("atlas", fmt::format("font '{}': {}", path.string(), e.what()));
  }
}

TrueTypeFont TrueTypeFont::parse(std::vector<std::uint8_t> bytes, std::string fallback_name) {
  TrueTypeFont font;
  font.data_ = std::move(bytes);
  const Reader r(font.data_);
  const std::uint32_t version = r.u32(0);
  if (version != 0x00010000u && version != 0x74727565u /* 'true' */) {
    throw Error("atlas", "not a TrueType outline font");
  }
  const auto head = find_table(r, "head");
  const auto hhea = find_table(r, "hhea");
  const auto hmtx = find_table(r, "hmtx");
  const auto maxp = find_table(r, "maxp");
  const auto loca = find_table(r, "loca");
  const auto glyf = find_table(r, "glyf");
  const auto cmap = find_table(r, "cmap");
  if (!head || !hhea || !hmtx || !maxp || !loca || !glyf || !cmap) {
    throw Error("atlas", "missing required sfnt table");
  }
  font.units_per_em_ = r.u16(head->offset + 18);
  if (font.units_per_em_ <= 0) throw Error("atlas", "invalid unitsPerEm");
  font.long_loca_ = r.i16(head->offset + 50) != 0;
  font.ascent_ = r.i16(hhea->offset + 4) / font.units_per_em_;
  font.descent_ = r.i16(hhea->offset + 6) / font.units_per_em_;
  font.num_hmetrics_ = r.u16(hhea->offset + 34);
  font.num_glyphs_ = r.u16(maxp->offset + 4);
  font.glyf_ = glyf->offset;
  font.loca_ = loca->offset;
  font.hmtx_ = hmtx->offset;

  // Pick the most useful character map subtable.
  const int n_sub = r.u16(cmap->offset + 2);
  int best_rank = -1;
  for (int i = 0; i < n_sub; ++i) {
    const std::size_t rec = cmap->offset + 4 + 8 * static_cast<std::size_t>(i);
    const int platform = r.u16(rec);
    const int encoding = r.u16(rec + 2);
    const std::size_t off = cmap->offset + r.u32(rec + 4);
    const int format = r.u16(off);
    int rank = -1;
    std::uint32_t bias = 0;
    if (platform == 3 && encoding == 10 && format == 12) rank = 6;
    else if (platform == 3 && encoding == 1 && format == 4) rank = 5;
    else if (platform == 0 && (format == 4 || format == 12)) rank = 4;
    else if (platform == 3 && encoding == 0 && format == 4) rank = 3, bias = 0xF000;
    else if (platform == 1 && encoding == 0 && (format == 0 || format == 6)) rank = 2;
    if (rank > best_rank) {
      best_rank = rank;
      font.cmap_subtable_ = off;
      font.cmap_offset_bias_ = bias;
    }
  }
  if (best_rank < 0) throw Error("atlas", "no supported character map");

  if (const auto name = find_table(r, "name")) {
    font.name_ = read_name(r, *name, 4);
  }
  if (font.name_.empty()) font.name_ = std::move(fallback_name);
  return font;
}

std::optional<int> TrueTypeFont::lookup_cmap(std::uint32_t cp) const {
  const Reader r(data_);
  const std::size_t sub = cmap_subtable_;
  const int format = r.u16(sub);
  if (format == 0) {
    if (cp > 255) return std::nullopt;
    const int g = r.u8(sub + 6 + cp);
    return g ? std::optional<int>(g) : std::nullopt;
  }
  if (format == 6) {
    const std::uint32_t first = r.u16(sub + 6);
    const std::uint32_t count = r.u16(sub + 8);
    if (cp < first || cp >= first + count) return std::nullopt;
    const int g = r.u16(sub + 10 + 2 * (cp - first));
    return g ? std::optional<int>(g) : std::nullopt;
  }
  if (format == 4) {
    if (cp > 0xFFFF) return std::nullopt;
    const int seg_x2 = r.u16(sub + 6);
    const std::size_t ends = sub + 14;
    const std::size_t starts = ends + seg_x2 + 2;
    const std::size_t deltas = starts + seg_x2;
    const std::size_t ranges = deltas + seg_x2;
    for (int s = 0; s < seg_x2; s += 2) {
      const std::uint32_t end = r.u16(ends + s);
      if (cp > end) continue;
      const std::uint32_t start = r.u16(starts + s);
      if (cp < start) return std::nullopt;
      const int delta = r.i16(deltas + s);
      const std::uint32_t range = r.u16(ranges + s);
      int g = 0;
      if (range == 0) {
        g = static_cast<int>((cp + delta) & 0xFFFF);
      } else {
        const std::size_t at = ranges + s + range + 2 * (cp - start);
        g = r.u16(at);
        if (g != 0) g = (g + delta) & 0xFFFF;
      }
      return g ? std::optional<int>(g) : std::nullopt;
    }
    return std::nullopt;
  }
  if (format == 12) {
    const std::uint32_t groups = r.u32(sub + 12);
    for (std::uint32_t i = 0; i < groups; ++i) {
      const std::size_t g = sub + 16 + 12 * static_cast<std::size_t>(i);
      const std::uint32_t start = r.u32(g);
      const std::uint32_t end = r.u32(g + 4);
      if (cp >= start && cp <= end) {
        const int id = static_cast<int>(r.u32(g + 8) + (cp - start));
        return id ? std::optional<int>(id) : std::nullopt;
      }
    }
  }
  return std::nullopt;
}

std::optional<int> TrueTypeFont::glyph_id(char32_t codepoint) const {
  auto g = lookup_cmap(static_cast<std::uint32_t>(codepoint) + cmap_offset_bias_);
  if (!g && cmap_offset_bias_) g = lookup_cmap(static_cast<std::uint32_t>(codepoint));
  if (g && *g >= num_glyphs_) return std::nullopt;
  return g;
}

double TrueTypeFont::advance(int glyph_id) const {
  const Reader r(data_);
  const int idx = std::min(glyph_id, num_hmetrics_ - 1);
  return r.u16(hmtx_ + 4 * static_cast<std::size_t>(idx)) / units_per_em_;
}

GlyphOutline TrueTypeFont::outline(int glyph_id) const {
  GlyphOutline out;
  append_outline(glyph_id, Eigen::Matrix2d::Identity(), Eigen::Vector2d::Zero(), 0, out);
  bool first = true;
  for (const auto& c : out.contours) {
    for (const auto& p : c) {
      if (first) {
        out.x_min = out.x_max = p.x();
        out.y_min = out.y_max = p.y();
        first = false;
      }
      out.x_min = std::min(out.x_min, p.x());
      out.x_max = std::max(out.x_max, p.x());
      out.y_min = std::min(out.y_min, p.y());
      out.y_max = std::max(out.y_max, p.y());
    }
  }
  return out;
}

void TrueTypeFont::append_outline(int glyph_id, const Eigen::Matrix2d& linear,
                                  const Eigen::Vector2d& offset, int depth,
                                  GlyphOutline& out) const {
  if (depth > 8) throw Error("atlas", "composite glyph nesting too deep");
  if (glyph_id < 0 || glyph_id >= num_glyphs_) throw Error("atlas", "glyph id out of range");
  const Reader r(data_);
  std::size_t start, end;
  if (long_loca_) {
    start = r.u32(loca_ + 4 * static_cast<std::size_t>(glyph_id));
    end = r.u32(loca_ + 4 * static_cast<std::size_t>(glyph_id) + 4);
  } else {
    start = 2 * static_cast<std::size_t>(r.u16(loca_ + 2 * static_cast<std::size_t>(glyph_id)));
    end = 2 * static_cast<std::size_t>(r.u16(loca_ + 2 * static_cast<std::size_t>(glyph_id) + 2));
  }
  if (end <= start) return;  // empty glyph
  const std::size_t g = glyf_ + start;
  const int n_contours = r.i16(g);
  const double scale = 1.0 / units_per_em_;
  auto to_em = [&](double x, double y) -> Eigen::Vector2d {
    return linear * Eigen::Vector2d(x * scale, y * scale) + offset;
  };

  if (n_contours >= 0) {
    std::vector<int> end_pts(n_contours);
    for (int i = 0; i < n_contours; ++i) end_pts[i] = r.u16(g + 10 + 2 * i);
    const int n_points = n_contours ? end_pts.back() + 1 : 0;
    std::size_t p = g + 10 + 2 * static_cast<std::size_t>(n_contours);
    const std::size_t instr_len = r.u16(p);
    p += 2 + instr_len;
    std::vector<std::uint8_t> flags(n_points);
    for (int i = 0; i < n_points;) {
      const std::uint8_t f = r.u8(p++);
      flags[i++] = f;
      if (f & 8) {
        int repeat = r.u8(p++);
        while (repeat-- > 0 && i < n_points) flags[i++] = f;
      }
    }
    std::vector<double> xs(n_points), ys(n_points);
    int v = 0;
    for (int i = 0; i < n_points; ++i) {
      const auto f = flags[i];
      if (f & 2) {
        const int dx = r.u8(p++);
        v += (f & 16) ? dx : -dx;
      } else if (!(f & 16)) {
        v += r.i16(p);
        p += 2;
      }
      xs[i] = v;
    }
    v = 0;
    for (int i = 0; i < n_points; ++i) {
      const auto f = flags[i];
      if (f & 4) {
        const int dy = r.u8(p++);
        v += (f & 32) ? dy : -dy;
      } else if (!(f & 32)) {
        v += r.i16(p);
        p += 2;
      }
      ys[i] = v;
    }

    int first = 0;
    for (int c = 0; c < n_contours; ++c) {
      const int last = end_pts[c];
      const int n = last - first + 1;
      if (n < 2) {
        first = last + 1;
        continue;
      }
      auto pt = [&](int k) { return to_em(xs[first + k], ys[first + k]); };
      auto on = [&](int k) { return (flags[first + k] & 1) != 0; };
      // Start from an on-curve point, or the midpoint of two off-curve ones.
      int s = 0;
      while (s < n && !on(s)) ++s;
      Eigen::Vector2d start_pt = s < n ? pt(s) : 0.5 * (pt(0) + pt(1));
      if (s == n) s = 0;
      std::vector<Eigen::Vector2d> poly{start_pt};
      Eigen::Vector2d current = start_pt;
      std::optional<Eigen::Vector2d> control;
      for (int k = 1; k <= n; ++k) {
        const int idx = (s + k) % n;
        const Eigen::Vector2d q = pt(idx);
        if (on(idx)) {
          if (control) {
            flatten_quadratic(current, *control, q, poly);
            control.reset();
          } else {
            poly.push_back(q);
          }
          current = q;
        } else {
          if (control) {
            const Eigen::Vector2d mid = 0.5 * (*control + q);
            flatten_quadratic(current, *control, mid, poly);
            current = mid;
          }
          control = q;
        }
      }
      if (control) flatten_quadratic(current, *control, start_pt, poly);
      out.contours.push_back(std::move(poly));
      first = last + 1;
    }
    return;
  }

  // Composite glyph.
  std::size_t p = g + 10;
  for (;;) {
    const std::uint16_t flags = r.u16(p);
    const int component = r.u16(p + 2);
    p += 4;
    double dx = 0, dy = 0;
    if (flags & 1) {
      if (flags & 2) dx = r.i16(p), dy = r.i16(p + 2);
      p += 4;
    } else {
      if (flags & 2) dx = static_cast<std::int8_t>(r.u8(p)), dy = static_cast<std::int8_t>(r.u8(p + 1));
      p += 2;
    }
    Eigen::Matrix2d m = Eigen::Matrix2d::Identity();
    if (flags & 8) {
      m(0, 0) = m(1, 1) = r.f2dot14(p);
      p += 2;
    } else if (flags & 0x40) {
      m(0, 0) = r.f2dot14(p);
      m(1, 1) = r.f2dot14(p + 2);
      p += 4;
    } else if (flags & 0x80) {
      m(0, 0) = r.f2dot14(p);
      m(1, 0) = r.f2dot14(p + 2);
      m(0, 1) = r.f2dot14(p + 4);
      m(1, 1) = r.f2dot14(p + 6);
      p += 8;
    }
    const Eigen::Vector2d local_offset(dx * scale, dy * scale);
    append_outline(component, linear * m, linear * local_offset + offset, depth + 1, out);
    if (!(flags & 0x20)) break;
  }
}

Plane<float> rasterize_polygons(const std::vector<std::vector<Eigen::Vector2d>>& contours,
                                Index width, Index height, int subsamples) {
  struct Edge {
    double x0, y0, x1, y1;
    int dir;
  };
  std::vector<Edge> edges;
  for (const auto& c : contours) {
    const std::size_t n = c.size();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& a = c[i];
      const auto& b = c[(i + 1) % n];
      if (a.y() == b.y()) continue;
      if (a.y() < b.y()) {
        edges.push_back({a.x(), a.y(), b.x(), b.y(), 1});
      } else {
        edges.push_back({b.x(), b.y(), a.x(), a.y(), -1});
      }
    }
  }
  Plane<float> out = Plane<float>::Zero(height, width);
  std::vector<std::pair<double, int>> crossings;
  std::vector<double> row(width);
  const double weight = 1.0 / subsamples;
  for (Index y = 0; y < height; ++y) {
    std::fill(row.begin(), row.end(), 0.0);
    for (int s = 0; s < subsamples; ++s) {
      const double sy = y + (s + 0.5) / subsamples;
      crossings.clear();
      for (const auto& e : edges) {
        if (sy < e.y0 || sy >= e.y1) continue;
        const double t = (sy - e.y0) / (e.y1 - e.y0);
        crossings.emplace_back(e.x0 + t * (e.x1 - e.x0), e.dir);
      }
      std::sort(crossings.begin(), crossings.end());
      int winding = 0;
      for (std::size_t k = 0; k + 1 < crossings.size(); ++k) {
        winding += crossings[k].second;
        if (winding == 0) continue;
        const double xa = std::max(0.0, crossings[k].first);
        const double xb = std::min(static_cast<double>(width), crossings[k + 1].first);
        if (xb <= xa) continue;
        const Index ia = static_cast<Index>(std::floor(xa));
        const Index ib = std::min(width - 1, static_cast<Index>(std::floor(xb)));
        for (Index i = ia; i <= ib; ++i) {
          const double lo = std::max(xa, static_cast<double>(i));
          const double hi = std::min(xb, static_cast<double>(i + 1));
          if (hi > lo) row[i] += (hi - lo) * weight;
        }
      }
    }
    for (Index x = 0; x < width; ++x) out(y, x) = static_cast<float>(std::min(1.0, row[x]));
  }
  return out;
}

}  // namespace derender
