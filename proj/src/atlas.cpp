#include "derender/atlas.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "derender/truetype.hpp"

namespace derender {

static_assert(std::endian::native == std::endian::little,
              "atlas files are little-endian; big-endian hosts need byte swapping");

// ---------------------------------------------------------------------------
// GlyphAtlas

GlyphAtlas::GlyphAtlas(int cell_resolution, double em_px, std::string glyphs,
                       std::vector<FontRecord> fonts, std::vector<GlyphEntry> entries)
    : cell_resolution_(cell_resolution),
      em_px_(em_px),
      glyphs_(std::move(glyphs)),
      fonts_(std::move(fonts)),
      entries_(std::move(entries)) {
  if (entries_.size() != fonts_.size() * glyphs_.size()) {
    throw Error("atlas", "entry count does not match fonts x glyphs");
  }
  glyph_lookup_.fill(-1);
  for (std::size_t i = 0; i < glyphs_.size(); ++i) {
    const auto c = static_cast<unsigned char>(glyphs_[i]);
    if (c >= 128) throw Error("atlas", "glyph set must be ASCII");
    if (glyph_lookup_[c] >= 0) throw Error("atlas", fmt::format("duplicate glyph '{}'", glyphs_[i]));
    glyph_lookup_[c] = static_cast<int>(i);
  }
}

const FontRecord& GlyphAtlas::font(int index) const {
  if (index < 0 || index >= font_count()) {
    throw Error("atlas", fmt::format("font index {} out of range", index));
  }
  return fonts_[index];
}

std::vector<std::string> GlyphAtlas::font_names() const {
  std::vector<std::string> names;
  for (const auto& f : fonts_) names.push_back(f.name);
  return names;
}

bool GlyphAtlas::has_glyph(char c) const {
  const auto u = static_cast<unsigned char>(c);
  return u < 128 && glyph_lookup_[u] >= 0;
}

int GlyphAtlas::glyph_index(char c) const {
  if (!has_glyph(c)) throw Error("atlas", fmt::format("unknown glyph '{}'", c));
  return glyph_lookup_[static_cast<unsigned char>(c)];
}

const GlyphEntry& GlyphAtlas::entry(int font_index, int glyph_index) const {
  if (font_index < 0 || font_index >= font_count()) {
    throw Error("atlas", fmt::format("font index {} out of range", font_index));
  }
  if (glyph_index < 0 || glyph_index >= glyph_count()) {
    throw Error("atlas", fmt::format("glyph index {} out of range", glyph_index));
  }
  return entries_[static_cast<std::size_t>(font_index) * glyphs_.size() + glyph_index];
}

const AlphaMap& GlyphAtlas::cell(int font_index, int glyph_index, GlyphVariant variant) const {
  const auto& e = entry(font_index, glyph_index);
  if (variant.is_fill()) return e.fill;
  if (variant.border_bin < 1 || variant.border_bin > kBorderBins) {
    throw Error("atlas", fmt::format("border bin {} out of range", variant.border_bin));
  }
  return e.border[variant.border_bin - 1];
}

const AlphaMap& GlyphAtlas::query(int font_index, char glyph, GlyphVariant variant) const {
  return cell(font_index, glyph_index(glyph), variant);
}

GlyphAtlas GlyphAtlas::subset(std::span<const int> font_indices) const {
  std::vector<FontRecord> fonts;
  std::vector<GlyphEntry> entries;
  for (int f : font_indices) {
    fonts.push_back(font(f));
    for (int g = 0; g < glyph_count(); ++g) entries.push_back(entry(f, g));
  }
  return GlyphAtlas(cell_resolution_, em_px_, glyphs_, std::move(fonts), std::move(entries));
}

bool GlyphAtlas::operator==(const GlyphAtlas& o) const {
  if (cell_resolution_ != o.cell_resolution_ || em_px_ != o.em_px_ || glyphs_ != o.glyphs_ ||
      fonts_.size() != o.fonts_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < fonts_.size(); ++i) {
    if (fonts_[i].name != o.fonts_[i].name || fonts_[i].ascent != o.fonts_[i].ascent ||
        fonts_[i].descent != o.fonts_[i].descent) {
      return false;
    }
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = o.entries_[i];
    if (!(a.metrics == b.metrics) || !(a.fill == b.fill)) return false;
    for (int k = 0; k < kBorderBins; ++k) {
      if (!(a.border[k] == b.border[k])) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Building

std::string default_glyph_set() {
  std::string s;
  for (char c = 33; c < 127; ++c) s.push_back(c);
  return s;
}

std::string read_glyph_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("atlas", fmt::format("cannot open glyph set '{}'", path.string()));
  std::string out;
  std::set<char> seen;
  char c;
  while (in.get(c)) {
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    if (seen.insert(c).second) out.push_back(c);
  }
  if (out.empty()) throw Error("atlas", "glyph set file is empty");
  return out;
}

std::vector<std::filesystem::path> list_font_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error("atlas", fmt::format("font directory '{}' not found", dir.string()));
  }
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    auto ext = e.path().extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (e.is_regular_file() && ext == ".ttf") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

GlyphAtlas build_atlas(std::span<const std::filesystem::path> font_files, std::string_view glyphs,
                       int resolution) {
  if (resolution < 16) throw Error("atlas", "cell resolution must be >= 16");
  if (font_files.empty()) throw Error("atlas", "no font files given");
  if (glyphs.empty()) throw Error("atlas", "empty glyph set");

  struct Loaded {
    FontRecord record;
    std::vector<GlyphOutline> outlines;
    std::vector<double> advances;
  };
  std::vector<Loaded> loaded;
  double max_extent = 0;
  for (const auto& file : font_files) {
    const auto font = TrueTypeFont::load(file);
    Loaded l;
    l.record = {font.name(), font.ascent(), font.descent()};
    for (char c : glyphs) {
      const auto gid = font.glyph_id(static_cast<unsigned char>(c));
      if (!gid) {
        throw Error("atlas", fmt::format("font '{}' has no glyph for '{}'", font.name(), c));
      }
      auto outline = font.outline(*gid);
      if (outline.empty()) {
        throw Error("atlas", fmt::format("font '{}' has an empty outline for '{}'", font.name(), c));
      }
      max_extent = std::max({max_extent, outline.x_max - outline.x_min, outline.y_max - outline.y_min});
      l.advances.push_back(font.advance(*gid));
      l.outlines.push_back(std::move(outline));
    }
    loaded.push_back(std::move(l));
  }

  // Shared scale: the largest ink box of the whole set spans 80% of a cell.
  const double em_px = 0.8 * resolution / max_extent;
  const double half = resolution / 2.0;

  std::vector<FontRecord> fonts;
  std::vector<GlyphEntry> entries;
  for (auto& l : loaded) {
    for (std::size_t g = 0; g < glyphs.size(); ++g) {
      const auto& o = l.outlines[g];
      const double cx = 0.5 * (o.x_min + o.x_max);
      const double cy = 0.5 * (o.y_min + o.y_max);
      std::vector<std::vector<Eigen::Vector2d>> pixel_contours;
      for (const auto& c : o.contours) {
        std::vector<Eigen::Vector2d> pc;
        pc.reserve(c.size());
        for (const auto& p : c) {
          pc.emplace_back(half + em_px * (p.x() - cx), half - em_px * (p.y() - cy));
        }
        pixel_contours.push_back(std::move(pc));
      }
      GlyphEntry e;
      e.fill = AlphaMap(rasterize_polygons(pixel_contours, resolution, resolution));
      for (int b = 0; b < kBorderBins; ++b) e.border[b] = dilate_disk(e.fill, b + 1);
      e.metrics.advance = l.advances[g];
      e.metrics.bearing_x = o.x_min;
      e.metrics.bearing_y = o.y_max;
      e.metrics.width = o.x_max - o.x_min;
      e.metrics.height = o.y_max - o.y_min;
      e.metrics.ascent = l.record.ascent;
      e.metrics.descent = l.record.descent;
      if (e.metrics.advance <= 0) {
        throw Error("atlas", fmt::format("font '{}' glyph '{}' has no advance", l.record.name, glyphs[g]));
      }
      entries.push_back(std::move(e));
    }
    fonts.push_back(l.record);
  }
  return GlyphAtlas(resolution, em_px, std::string(glyphs), std::move(fonts), std::move(entries));
}

// ---------------------------------------------------------------------------
// Serialization
//
// Layout (little-endian):
//   char[8]  magic "DRNDATLS"
//   u32      version (1)
//   u32      kind (0 monolithic, 1 shard, 2 shard manifest)
//   u32      cell resolution R
//   u32      border bins
//   f64      em_px
//   u32      glyph count G, then G bytes of ASCII glyphs
//   u32      font count F, then per font:
//              u32 global font index, u32 name length, name bytes,
//              f64 ascent, f64 descent,
//              G x 5 f64 (advance, bearing_x, bearing_y, width, height)
//   payload (kinds 0 and 1): per font, per glyph, (1 + bins) x R x R f32

namespace {

constexpr char kMagic[8] = {'D', 'R', 'N', 'D', 'A', 'T', 'L', 'S'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kKindMonolithic = 0;
constexpr std::uint32_t kKindShard = 1;
constexpr std::uint32_t kKindManifest = 2;
constexpr const char* kManifestName = "atlas.manifest";

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw Error("atlas", fmt::format("cannot write '{}'", path.string()));
  }
  template <typename T>
  void put(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void finish() {
    out_.flush();
    if (!out_) throw Error("atlas", fmt::format("short write to '{}'", path_.string()));
  }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class FileReader {
 public:
  explicit FileReader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw Error("atlas", fmt::format("cannot open atlas '{}'", path.string()));
  }
  template <typename T>
  T get() {
    T v{};
    bytes(&v, sizeof(T));
    return v;
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) {
      throw Error("atlas", fmt::format("truncated atlas file '{}'", path_.string()));
    }
  }
  std::streamoff tell() { return in_.tellg(); }
  void seek(std::streamoff off) {
    in_.seekg(off);
    if (!in_) throw Error("atlas", fmt::format("truncated atlas file '{}'", path_.string()));
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
};

struct Header {
  std::uint32_t kind = 0;
  int resolution = 0;
  int bins = 0;
  double em_px = 0;
  std::string glyphs;
  std::vector<std::uint32_t> global_index;
  std::vector<FontRecord> fonts;
  std::vector<std::vector<GlyphMetrics>> metrics;
};

void write_header(Writer& w, const GlyphAtlas& atlas, std::uint32_t kind,
                  std::span<const int> fonts) {
  w.bytes(kMagic, sizeof(kMagic));
  w.put(kVersion);
  w.put(kind);
  w.put(static_cast<std::uint32_t>(atlas.cell_resolution()));
  w.put(static_cast<std::uint32_t>(kBorderBins));
  w.put(atlas.em_px());
  w.put(static_cast<std::uint32_t>(atlas.glyph_count()));
  w.bytes(atlas.glyphs().data(), atlas.glyphs().size());
  w.put(static_cast<std::uint32_t>(fonts.size()));
  for (int f : fonts) {
    const auto& rec = atlas.font(f);
    w.put(static_cast<std::uint32_t>(f));
    w.put(static_cast<std::uint32_t>(rec.name.size()));
    w.bytes(rec.name.data(), rec.name.size());
    w.put(rec.ascent);
    w.put(rec.descent);
    for (int g = 0; g < atlas.glyph_count(); ++g) {
      const auto& m = atlas.entry(f, g).metrics;
      for (double v : {m.advance, m.bearing_x, m.bearing_y, m.width, m.height}) w.put(v);
    }
  }
}

void write_payload(Writer& w, const GlyphAtlas& atlas, int font) {
  for (int g = 0; g < atlas.glyph_count(); ++g) {
    const auto& e = atlas.entry(font, g);
    w.bytes(e.fill.plane().data(), sizeof(float) * e.fill.plane().size());
    for (const auto& b : e.border) w.bytes(b.plane().data(), sizeof(float) * b.plane().size());
  }
}

Header read_header(FileReader& r) {
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error("atlas", fmt::format("'{}' is not an atlas file (bad magic / version)", r.path().string()));
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw Error("atlas", fmt::format("unsupported atlas version {} in '{}'", version, r.path().string()));
  }
  Header h;
  h.kind = r.get<std::uint32_t>();
  h.resolution = static_cast<int>(r.get<std::uint32_t>());
  h.bins = static_cast<int>(r.get<std::uint32_t>());
  h.em_px = r.get<double>();
  if (h.bins != kBorderBins || h.resolution < 1 || h.resolution > 4096 || h.kind > kKindManifest) {
    throw Error("atlas", fmt::format("corrupt atlas header in '{}'", r.path().string()));
  }
  const auto n_glyphs = r.get<std::uint32_t>();
  if (n_glyphs > 128) throw Error("atlas", "corrupt glyph table");
  h.glyphs.resize(n_glyphs);
  r.bytes(h.glyphs.data(), n_glyphs);
  const auto n_fonts = r.get<std::uint32_t>();
  if (n_fonts > 100000) throw Error("atlas", "corrupt font table");
  for (std::uint32_t f = 0; f < n_fonts; ++f) {
    h.global_index.push_back(r.get<std::uint32_t>());
    const auto len = r.get<std::uint32_t>();
    if (len > 4096) throw Error("atlas", "corrupt font name");
    FontRecord rec;
    rec.name.resize(len);
    r.bytes(rec.name.data(), len);
    rec.ascent = r.get<double>();
    rec.descent = r.get<double>();
    std::vector<GlyphMetrics> ms(n_glyphs);
    for (auto& m : ms) {
      m.advance = r.get<double>();
      m.bearing_x = r.get<double>();
      m.bearing_y = r.get<double>();
      m.width = r.get<double>();
      m.height = r.get<double>();
      m.ascent = rec.ascent;
      m.descent = rec.descent;
    }
    h.fonts.push_back(std::move(rec));
    h.metrics.push_back(std::move(ms));
  }
  return h;
}

void read_font_payload(FileReader& r, const Header& h, std::size_t local_font,
                       std::vector<GlyphEntry>& entries) {
  const Index res = h.resolution;
  for (std::size_t g = 0; g < h.glyphs.size(); ++g) {
    GlyphEntry e;
    e.fill = AlphaMap(res, res);
    r.bytes(e.fill.plane().data(), sizeof(float) * res * res);
    for (auto& b : e.border) {
      b = AlphaMap(res, res);
      r.bytes(b.plane().data(), sizeof(float) * res * res);
    }
    e.metrics = h.metrics[local_font][g];
    entries.push_back(std::move(e));
  }
}

std::vector<int> resolve_subset(const std::optional<std::vector<int>>& subset, int n_fonts) {
  std::vector<int> fonts;
  if (subset) {
    for (int f : *subset) {
      if (f < 0 || f >= n_fonts) throw Error("atlas", fmt::format("font index {} out of range", f));
      fonts.push_back(f);
    }
  } else {
    for (int f = 0; f < n_fonts; ++f) fonts.push_back(f);
  }
  return fonts;
}

std::filesystem::path shard_path(const std::filesystem::path& dir, int font) {
  return dir / fmt::format("font_{:04d}.shard", font);
}

}  // namespace

void save_atlas(const GlyphAtlas& atlas, const std::filesystem::path& path) {
  Writer w(path);
  std::vector<int> all(atlas.font_count());
  for (int f = 0; f < atlas.font_count(); ++f) all[f] = f;
  write_header(w, atlas, kKindMonolithic, all);
  for (int f : all) write_payload(w, atlas, f);
  w.finish();
}

void save_atlas_sharded(const GlyphAtlas& atlas, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<int> all(atlas.font_count());
  for (int f = 0; f < atlas.font_count(); ++f) all[f] = f;
  {
    Writer w(dir / kManifestName);
    write_header(w, atlas, kKindManifest, all);
    w.finish();
  }
  for (int f : all) {
    Writer w(shard_path(dir, f));
    const int one[] = {f};
    write_header(w, atlas, kKindShard, one);
    write_payload(w, atlas, f);
    w.finish();
  }
}

GlyphAtlas load_atlas(const std::filesystem::path& path, std::optional<std::vector<int>> font_subset) {
  if (std::filesystem::is_directory(path)) {
    FileReader manifest_reader(path / kManifestName);
    const Header manifest = read_header(manifest_reader);
    if (manifest.kind != kKindManifest) throw Error("atlas", "sharded atlas manifest has wrong kind");
    const auto fonts = resolve_subset(font_subset, static_cast<int>(manifest.fonts.size()));
    std::vector<FontRecord> records;
    std::vector<GlyphEntry> entries;
    for (int f : fonts) {
      FileReader r(shard_path(path, f));
      const Header h = read_header(r);
      if (h.kind != kKindShard || h.fonts.size() != 1 || h.global_index[0] != static_cast<std::uint32_t>(f) ||
          h.resolution != manifest.resolution || h.em_px != manifest.em_px || h.glyphs != manifest.glyphs) {
        throw Error("atlas", fmt::format("shard '{}' does not match its manifest", r.path().string()));
      }
      records.push_back(h.fonts[0]);
      read_font_payload(r, h, 0, entries);
    }
    return GlyphAtlas(manifest.resolution, manifest.em_px, manifest.glyphs, std::move(records),
                      std::move(entries));
  }

  FileReader r(path);
  const Header h = read_header(r);
  if (h.kind != kKindMonolithic && h.kind != kKindShard) {
    throw Error("atlas", "expected an atlas file, found a shard manifest");
  }
  const auto fonts = resolve_subset(font_subset, static_cast<int>(h.fonts.size()));
  const std::streamoff payload_start = r.tell();
  const std::streamoff font_bytes = static_cast<std::streamoff>(h.glyphs.size()) * (1 + kBorderBins) *
                                    h.resolution * h.resolution * static_cast<std::streamoff>(sizeof(float));
  std::vector<FontRecord> records;
  std::vector<GlyphEntry> entries;
  for (int f : fonts) {
    r.seek(payload_start + f * font_bytes);
    records.push_back(h.fonts[f]);
    read_font_payload(r, h, static_cast<std::size_t>(f), entries);
  }
  return GlyphAtlas(h.resolution, h.em_px, h.glyphs, std::move(records), std::move(entries));
}

}  // namespace derender
