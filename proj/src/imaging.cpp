#include "derender/imaging.hpp"

namespace derender {

int gaussian_radius(double sigma) {
  if (sigma <= 0) return 0;
  return static_cast<int>(std::min(std::ceil(3.0 * sigma), 8.0));
}

std::vector<double> gaussian_kernel(double sigma) {
  if (sigma < 0 || !std::isfinite(sigma)) {
    throw Error("imaging", "gaussian_kernel: sigma must be finite and >= 0");
  }
  const int r = gaussian_radius(sigma);
  std::vector<double> taps(2 * r + 1);
  if (r == 0) {
    taps[0] = 1.0;
    return taps;
  }
  double sum = 0;
  for (int k = -r; k <= r; ++k) {
    const double g = std::exp(-(k * k) / (2.0 * sigma * sigma));
    taps[k + r] = g;
    sum += g;
  }
  for (auto& t : taps) t /= sum;
  return taps;
}

RasterImage resize_bilinear(const RasterImage& src, Index width, Index height) {
  if (width <= 0 || height <= 0) throw Error("imaging", "resize: zero-area output");
  if (src.empty()) throw Error("imaging", "resize: empty source");
  RasterImage out(width, height);
  const double sx = static_cast<double>(src.width()) / static_cast<double>(width);
  const double sy = static_cast<double>(src.height()) / static_cast<double>(height);
  const Index w = src.width();
  const Index h = src.height();
  for (Index y = 0; y < height; ++y) {
    const double v = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const Index y0 = static_cast<Index>(std::floor(v));
    const Index y1 = std::min(y0 + 1, h - 1);
    const float ty = static_cast<float>(v - y0);
    for (Index x = 0; x < width; ++x) {
      const double u = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const Index x0 = static_cast<Index>(std::floor(u));
      const Index x1 = std::min(x0 + 1, w - 1);
      const float tx = static_cast<float>(u - x0);
      for (int c = 0; c < 3; ++c) {
        const auto& p = src.channel(c);
        const float top = (1 - tx) * p(y0, x0) + tx * p(y0, x1);
        const float bot = (1 - tx) * p(y1, x0) + tx * p(y1, x1);
        out(x, y, c) = std::clamp((1 - ty) * top + ty * bot, 0.0f, 1.0f);
      }
    }
  }
  return out;
}

RasterImage quantize_8bit(const RasterImage& src) {
  RasterImage out = src;
  for (int c = 0; c < 3; ++c) {
    out.channel(c) = src.channel(c).unaryExpr(
        [](float v) { return static_cast<float>(to_8bit(v)) / 255.0f; });
  }
  return out;
}

AlphaMap dilate_disk(const AlphaMap& src, double radius) {
  const int r = static_cast<int>(std::floor(radius));
  std::vector<std::pair<int, int>> offsets;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      if (dx * dx + dy * dy <= radius * radius + 1e-9) offsets.emplace_back(dx, dy);
    }
  }
  const Index w = src.width();
  const Index h = src.height();
  AlphaMap out(w, h);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      float m = 0.0f;
      for (const auto& [dx, dy] : offsets) {
        const Index sx = x + dx;
        const Index sy = y + dy;
        if (sx < 0 || sy < 0 || sx >= w || sy >= h) continue;
        m = std::max(m, src(sx, sy));
      }
      out(x, y) = m;
    }
  }
  return out;
}

}  // namespace derender
