#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "derender/imaging.hpp"

namespace derender {

inline constexpr int kBorderBins = 5;
inline constexpr int kDefaultCellResolution = 64;

/// Per-glyph layout metrics in em units. Bearings locate the ink box:
/// x in [bearing_x, bearing_x + width], y (up) in [bearing_y - height, bearing_y]
/// relative to the pen position on the baseline.
struct GlyphMetrics {
  double advance = 0;
  double bearing_x = 0;
  double bearing_y = 0;
  double width = 0;
  double height = 0;
  double ascent = 0;   // font-level, duplicated per entry
  double descent = 0;  // font-level (negative below baseline)

  bool operator==(const GlyphMetrics&) const = default;
};

/// Pre-rendered maps for one (font, glyph): the fill mask plus one dilated
/// mask per border-width bin. Border masks include the glyph interior.
struct GlyphEntry {
  AlphaMap fill;
  std::array<AlphaMap, kBorderBins> border;
  GlyphMetrics metrics;
};

/// Selects the fill map (bin 0) or a border map (bins 1..5).
struct GlyphVariant {
  int border_bin = 0;

  static constexpr GlyphVariant fill() { return {0}; }
  static constexpr GlyphVariant border(int bin) { return {bin}; }
  bool is_fill() const { return border_bin == 0; }
};

struct FontRecord {
  std::string name;
  double ascent = 0;
  double descent = 0;
};

/// Immutable store of pre-rendered glyph cells for a fixed font list.
///
/// Each glyph is rasterized with its ink box centered in a square cell at a
/// shared scale of `em_px()` cell pixels per em, so cells of different fonts
/// are directly comparable and can be blended.
class GlyphAtlas {
 public:
  GlyphAtlas() = default;
  GlyphAtlas(int cell_resolution, double em_px, std::string glyphs, std::vector<FontRecord> fonts,
             std::vector<GlyphEntry> entries);

  int cell_resolution() const { return cell_resolution_; }
  double em_px() const { return em_px_; }
  int font_count() const { return static_cast<int>(fonts_.size()); }
  int glyph_count() const { return static_cast<int>(glyphs_.size()); }
  const std::string& glyphs() const { return glyphs_; }
  const FontRecord& font(int index) const;
  std::vector<std::string> font_names() const;

  bool has_glyph(char c) const;
  /// Dense index of `c` in the glyph table; throws for unknown glyphs.
  int glyph_index(char c) const;

  const GlyphEntry& entry(int font_index, int glyph_index) const;
  const AlphaMap& query(int font_index, char glyph, GlyphVariant variant) const;
  const AlphaMap& cell(int font_index, int glyph_index, GlyphVariant variant) const;

  /// Copy restricted to the listed fonts (re-indexed densely in list order).
  GlyphAtlas subset(std::span<const int> font_indices) const;

  bool operator==(const GlyphAtlas& o) const;

 private:
  int cell_resolution_ = 0;
  double em_px_ = 0;
  std::string glyphs_;
  std::array<int, 128> glyph_lookup_{};
  std::vector<FontRecord> fonts_;
  std::vector<GlyphEntry> entries_;  // font-major
};

/// The 94 printable ASCII characters excluding space.
std::string default_glyph_set();

/// Reads a glyph-set file: every non-whitespace character, duplicates dropped.
std::string read_glyph_set(const std::filesystem::path& path);

/// Rasterizes every glyph of every font into cells of `resolution` pixels.
GlyphAtlas build_atlas(std::span<const std::filesystem::path> font_files, std::string_view glyphs,
                       int resolution = kDefaultCellResolution);

/// Font files (*.ttf) of a directory in lexicographic order.
std::vector<std::filesystem::path> list_font_files(const std::filesystem::path& dir);

void save_atlas(const GlyphAtlas& atlas, const std::filesystem::path& path);

/// Writes a manifest plus one shard file per font into `dir`.
void save_atlas_sharded(const GlyphAtlas& atlas, const std::filesystem::path& dir);

/// Loads a monolithic atlas file or a sharded atlas directory. When
/// `font_subset` is given only those fonts' cells are read.
GlyphAtlas load_atlas(const std::filesystem::path& path,
                      std::optional<std::vector<int>> font_subset = std::nullopt);

}  // namespace derender
