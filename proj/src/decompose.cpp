#include "derender/decompose.hpp"

#include <array>

namespace derender {

namespace {

int bin_of(double v) { return std::clamp(static_cast<int>(std::floor(v * kHistogramBins)), 0, kHistogramBins - 1); }

template <typename Get>
ColorEstimate modal_color_impl(std::size_t n, Get get) {
  if (n == 0) throw Error("decompose", "modal_color: no samples");
  constexpr int B = kHistogramBins;
  std::vector<std::uint32_t> counts(B * B * B, 0);
  std::vector<int> bins(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Color& c = get(i);
    const int b = (bin_of(c[0]) * B + bin_of(c[1])) * B + bin_of(c[2]);
    bins[i] = b;
    ++counts[b];
  }
  auto neighbourhood = [&](int b) {
    const int r = b / (B * B), g = (b / B) % B, bl = b % B;
    std::uint64_t sum = 0;
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dg = -1; dg <= 1; ++dg) {
        for (int db = -1; db <= 1; ++db) {
          const int rr = r + dr, gg = g + dg, bb = bl + db;
          if (rr < 0 || gg < 0 || bb < 0 || rr >= B || gg >= B || bb >= B) continue;
          sum += counts[(rr * B + gg) * B + bb];
        }
      }
    }
    return sum;
  };
  int best = -1;
  std::uint64_t best_support = 0;
  for (int b = 0; b < B * B * B; ++b) {
    if (counts[b] == 0) continue;
    if (best < 0 || counts[b] > counts[best]) {
      best = b;
      best_support = neighbourhood(b);
    } else if (counts[b] == counts[best]) {
      const auto support = neighbourhood(b);
      if (support > best_support) {
        best = b;
        best_support = support;
      }
    }
  }
  // Mean taken relative to the first member so identical samples come back exactly.
  ColorEstimate est;
  std::size_t first = 0;
  while (bins[first] != best) ++first;
  const Color ref = get(first);
  Color delta = Color::Zero();
  for (std::size_t i = first; i < n; ++i) {
    if (bins[i] == best) delta += get(i) - ref;
  }
  est.color = ref + delta / static_cast<double>(counts[best]);
  est.support_pixels = n;
  est.histogram_peak_mass = static_cast<double>(counts[best]) / static_cast<double>(n);
  return est;
}

}  // namespace

ColorEstimate modal_color(std::span<const Color> samples) {
  return modal_color_impl(samples.size(), [&](std::size_t i) -> const Color& { return samples[i]; });
}

ColorEstimate modal_color(std::span<const LayerSample> samples) {
  return modal_color_impl(samples.size(), [&](std::size_t i) -> const Color& { return samples[i].value; });
}

DecomposedColors decompose_colors(const RasterImage& image, const RasterImage& background,
                                  const EffectAlphas& alphas, const Visibility& visibility,
                                  const PixelRect& region) {
  require_same_size(image, background, "decompose_colors");
  const RasterImageT<double> bg = background.cast<double>();
  const Index w = image.width(), h = image.height();

  DecomposedColors out;
  struct Level {
    AlphaMapT<double> alpha;
    std::optional<Color>* color;
  };
  // Top to bottom.
  std::vector<Level> levels;
  if (visibility.border) levels.push_back({alphas.border.cast<double>(), &out.border});
  levels.push_back({alphas.fill.cast<double>(), &out.fill});
  if (visibility.shadow) levels.push_back({alphas.shadow.cast<double>(), &out.shadow});

  // The first pass inverts every layer against the background, preferring
  // pixels where that is exact: nothing above, and nothing below unless the
  // layer is opaque. Later passes rebuild each under-layer from the estimates
  // below it.
  constexpr int kPasses = 4;
  constexpr double kClear = 1e-4;
  for (int pass = 0; pass < kPasses; ++pass) {
    const DecomposedColors before = out;
    RasterImageT<double> current = image.cast<double>();
    // Pixels whose under-layer is hidden behind an opaque upper layer.
    Plane<bool> hidden = Plane<bool>::Constant(h, w, false);
    for (std::size_t k = 0; k < levels.size(); ++k) {
      RasterImageT<double> ref = bg;
      if (pass > 0) {
        for (std::size_t j = levels.size(); j-- > k + 1;) {
          if (!*levels[j].color) continue;
          const LayerT<double> layer[] = {{&levels[j].alpha, **levels[j].color}};
          ref = composite<double>(ref, layer);
        }
      }
      AlphaMapT<double> a = levels[k].alpha;
      a.plane() = hidden.select(0.0, a.plane());
      std::vector<AlphaMapT<double>> candidates;
      if (pass == 0) {
        AlphaMapT<double> clean = a;
        for (Index y = 0; y < h; ++y) {
          for (Index x = 0; x < w; ++x) {
            bool exact = true;
            for (std::size_t j = 0; j < k; ++j) exact &= levels[j].alpha(x, y) <= kClear;
            if (clean(x, y) < 1.0 - kClear) {
              for (std::size_t j = k + 1; j < levels.size(); ++j) exact &= levels[j].alpha(x, y) <= kClear;
            }
            if (!exact) clean(x, y) = 0.0;
          }
        }
        candidates.push_back(std::move(clean));
      }
      candidates.push_back(a);
      for (const auto& c : candidates) {
        try {
          *levels[k].color = modal_color(invert_layer(current, ref, c, region)).color;
          break;
        } catch (const NotObservableError&) {
        }
      }
      if (!*levels[k].color) continue;
      const Color& y_k = **levels[k].color;
      for (Index y = 0; y < h; ++y) {
        for (Index x = 0; x < w; ++x) {
          const double ak = levels[k].alpha(x, y);
          if (ak <= 0 || hidden(y, x)) continue;
          if (1.0 - ak <= kObservableAlpha) {
            hidden(y, x) = true;
            continue;
          }
          for (int c = 0; c < 3; ++c) {
            current(x, y, c) = std::clamp((current(x, y, c) - ak * y_k[c]) / (1.0 - ak), 0.0, 1.0);
          }
        }
      }
    }
    auto same = [](const std::optional<Color>& p, const std::optional<Color>& q) {
      return p.has_value() == q.has_value() && (!p || (*p == *q).all());
    };
    if (pass > 0 && same(before.border, out.border) && same(before.fill, out.fill) &&
        same(before.shadow, out.shadow)) {
      break;
    }
  }
  return out;
}

}  // namespace derender
