#pragma once

#include <optional>
#include <vector>

#include "derender/atlas.hpp"
#include "derender/compositor.hpp"
#include "derender/diffrender.hpp"

namespace derender {

/// Discrete style read off continuous parameters.
struct HardStyle {
  int font_index = 0;
  EffectSet effects;

  bool operator==(const HardStyle&) const = default;
};

/// font = argmax attention, border bin = argmax bin softmax, visible iff the
/// soft visibility exceeds 0.5 (strictly), colours = sigmoid outputs, blur and
/// shadow offsets passed through. Ties go to the lowest index.
HardStyle harden(const RefinableParams& params, const DiffConfig& config = {});

/// Canvas-space ink boxes of each character of `font_index` after the
/// refined word and character affines (axis-aligned hull of the mapped box).
std::vector<Box> char_boxes(const RefinableParams& params, int font_index, const GlyphAtlas& atlas);

struct GeometryFit {
  double font_size = 0;  // integer px
  Eigen::Vector2d origin = Eigen::Vector2d::Zero();  // integer px
  Box word_box;          // hull of the given word box and the character boxes
  double cost = 0;       // summed squared corner distances
  int anchor_char = 0;   // the best-fit character the search started from
};

inline constexpr double kSizeWindow = 0.2;
inline constexpr int kOriginWindow = 3;

/// Grid search for the integer font size and origin whose layout() boxes best
/// match `boxes` (one per character of `text`). The search starts from the
/// character with the tallest ink box: sizes within +-20% of its implied size
/// and origins within +-3 px of its implied origin, both in 1 px steps.
/// Ties prefer the smaller size, then the lexicographically smaller origin.
GeometryFit fit_geometry(const std::vector<Box>& boxes, const std::optional<Box>& word_box, int font_index,
                         const std::string& text, const GlyphAtlas& atlas);

/// Characters whose refined center strays more than this from the fitted
/// layout get explicit char_offsets.
inline constexpr double kOffsetTolerance = 0.5;

TextElement export_element(const RefinableParams& params, const GlyphAtlas& atlas,
                           const std::optional<Box>& word_box = std::nullopt, const DiffConfig& config = {});

/// Document with the given background (normally the inpainted canvas) and
/// one exported element per parameter set.
Document export_document(const RasterImage& background, const std::vector<RefinableParams>& words,
                         const GlyphAtlas& atlas, const DiffConfig& config = {});

}  // namespace derender
