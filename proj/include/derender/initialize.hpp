#pragma once

#include <map>
#include <string>

#include "derender/atlas.hpp"
#include "derender/diffrender.hpp"
#include "derender/imaging.hpp"

namespace derender {

inline constexpr double kInpaintRadius = 5.0;
inline constexpr double kHoleThreshold = 0.05;
inline constexpr double kHoleDilation = 3.0;

/// Soft text mask inside `word_box` (zero elsewhere). Box pixels are split
/// into two colour clusters after removing a planar background fitted to the
/// ring around the box; the cluster farther from the background is text and
/// alpha grows with the distance from the background cluster, normalized by
/// the cluster separation.
AlphaMap estimate_mask(const RasterImage& image, const PixelRect& word_box);

/// Fast-marching (Telea) inpainting of the hole {mask > 0.05} dilated by 3 px.
/// Pixels outside the hole are returned unchanged.
RasterImage inpaint(const RasterImage& image, const AlphaMap& mask, double radius = kInpaintRadius);

/// The hole inpaint() fills for `mask`.
Plane<bool> inpaint_hole(const AlphaMap& mask);

struct InitGuess {
  RefinableParams params;
  RasterImage background;  // inpainted full canvas
  std::map<std::string, double> confidence;
  std::vector<double> font_scores;  // normalized cross-correlation per font
};

/// Heuristic stand-in for a learned parser: picks the font whose rendering
/// of `text`, fitted to the box, correlates best with the estimated mask;
/// fits size and x-scale to the box; decomposes the fill colour against the
/// inpainted background; leaves visibilities undecided.
InitGuess initial_guess(const RasterImage& image, const PixelRect& word_box, const std::string& text,
                        const GlyphAtlas& atlas, const DiffConfig& config = {});

/// Same, with a background that is already inpainted (e.g. shared by several
/// words of one image).
InitGuess initial_guess(const RasterImage& image, const RasterImage& background, const PixelRect& word_box,
                        const std::string& text, const GlyphAtlas& atlas, const DiffConfig& config = {});

}  // namespace derender
