#pragma once

#include <optional>
#include <span>
#include <vector>

#include <fmt/format.h>

#include "derender/compositor.hpp"
#include "derender/imaging.hpp"

namespace derender {

inline constexpr double kObservableAlpha = 0.05;
inline constexpr int kHistogramBins = 32;

struct LayerSample {
  Index x = 0;
  Index y = 0;
  Color value = Color::Zero();
};

/// Solves c = (1 - a) c_bg + a y for y on every pixel of `region` with
/// a > eps; y is clamped to [0, 1]. Throws NotObservableError if no pixel
/// qualifies.
template <typename Scalar>
std::vector<LayerSample> invert_layer(const RasterImageT<Scalar>& c, const RasterImageT<Scalar>& c_bg,
                                      const AlphaMapT<Scalar>& alpha, const PixelRect& region,
                                      double eps = kObservableAlpha) {
  require_same_size(c, c_bg, "invert_layer");
  if (alpha.width() != c.width() || alpha.height() != c.height()) {
    throw Error("decompose", "invert_layer: alpha and image dimensions differ");
  }
  if (region.intersect({0, 0, c.width(), c.height()}) != region || region.empty()) {
    throw Error("decompose", "invert_layer: region outside image");
  }
  std::vector<LayerSample> out;
  for (Index y = region.y0; y < region.y1(); ++y) {
    for (Index x = region.x0; x < region.x1(); ++x) {
      const double a = alpha(x, y);
      if (!(a > eps)) continue;
      LayerSample s{x, y, Color::Zero()};
      for (int ch = 0; ch < 3; ++ch) {
        const double v = (static_cast<double>(c(x, y, ch)) - (1.0 - a) * static_cast<double>(c_bg(x, y, ch))) / a;
        s.value[ch] = std::clamp(v, 0.0, 1.0);
      }
      out.push_back(s);
    }
  }
  if (out.empty()) {
    throw NotObservableError(fmt::format("effect not observable: no pixel with alpha > {}", eps));
  }
  return out;
}

struct ColorEstimate {
  Color color = Color::Zero();
  std::size_t support_pixels = 0;
  double histogram_peak_mass = 0;
};

/// Mode of a 32^3 joint histogram, refined to the mean of the modal bin's
/// members. Ties go to the bin whose 3x3x3 neighbourhood holds more samples,
/// then to the lowest linear bin index.
ColorEstimate modal_color(std::span<const Color> samples);
ColorEstimate modal_color(std::span<const LayerSample> samples);

struct Visibility {
  bool border = true;
  bool shadow = true;
};

struct DecomposedColors {
  std::optional<Color> fill;
  std::optional<Color> border;
  std::optional<Color> shadow;
};

/// Peels border, then fill, then shadow. After a layer is estimated the image
/// beneath it is reconstructed where still visible and the next inversion uses
/// that image. The first pass inverts against the background; further passes
/// (until the colours stop changing) invert against the under-layer composited
/// from the current estimates. Effects that are invisible or unobservable stay
/// undetermined.
DecomposedColors decompose_colors(const RasterImage& image, const RasterImage& background,
                                  const EffectAlphas& alphas, const Visibility& visibility,
                                  const PixelRect& region);

}  // namespace derender
