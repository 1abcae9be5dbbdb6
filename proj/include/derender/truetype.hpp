#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "derender/imaging.hpp"

namespace derender {

/// Glyph outline flattened to closed polygons, in em units with y pointing up.
struct GlyphOutline {
  std::vector<std::vector<Eigen::Vector2d>> contours;
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  bool empty() const { return contours.empty(); }
};

/// Minimal reader for TrueType (glyf-flavoured sfnt) fonts: character map,
/// horizontal metrics and quadratic outlines. CFF-flavoured OpenType is
/// rejected.
class TrueTypeFont {
 public:
  static TrueTypeFont load(const std::filesystem::path& path);
  static TrueTypeFont parse(std::vector<std::uint8_t> bytes, std::string fallback_name);

  const std::string& name() const { return name_; }
  double ascent() const { return ascent_; }
  double descent() const { return descent_; }
  int glyph_count() const { return num_glyphs_; }

  std::optional<int> glyph_id(char32_t codepoint) const;
  double advance(int glyph_id) const;
  GlyphOutline outline(int glyph_id) const;

 private:
  TrueTypeFont() = default;

  void append_outline(int glyph_id, const Eigen::Matrix2d& linear, const Eigen::Vector2d& offset,
                      int depth, GlyphOutline& out) const;
  std::optional<int> lookup_cmap(std::uint32_t codepoint) const;

  std::vector<std::uint8_t> data_;
  std::string name_;
  double units_per_em_ = 1000;
  double ascent_ = 0;
  double descent_ = 0;
  int num_glyphs_ = 0;
  int num_hmetrics_ = 0;
  bool long_loca_ = false;
  std::size_t glyf_ = 0;
  std::size_t loca_ = 0;
  std::size_t hmtx_ = 0;
  std::size_t cmap_subtable_ = 0;
  std::uint32_t cmap_offset_bias_ = 0;  // symbol fonts map U+F000 + code
};

/// Non-zero winding coverage of polygons given in pixel coordinates (x right,
/// y down, pixel (i, j) covering [i, i+1) x [j, j+1)). Coverage is exact along
/// x and sampled with `subsamples` scanlines per pixel row.
Plane<float> rasterize_polygons(const std::vector<std::vector<Eigen::Vector2d>>& contours,
                                Index width, Index height, int subsamples = 16);

}  // namespace derender
