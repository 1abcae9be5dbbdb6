#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "derender/error.hpp"

namespace derender {

using Index = Eigen::Index;

/// Dense single-channel pixel grid, rows = height, cols = width.
template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Rgb = Eigen::Array<Scalar, 3, 1>;

using Color = Rgb<double>;

/// Maps output pixel index coordinates (x, y, 1) to source index coordinates.
/// Row 0 produces source x, row 1 source y.
using AffineCoeffs = Eigen::Matrix<double, 2, 3>;

inline AffineCoeffs identity_affine() {
  AffineCoeffs m;
  m << 1, 0, 0, 0, 1, 0;
  return m;
}

/// Half-open integer rectangle [x0, x0 + width) x [y0, y0 + height).
struct PixelRect {
  Index x0 = 0;
  Index y0 = 0;
  Index width = 0;
  Index height = 0;

  Index x1() const { return x0 + width; }
  Index y1() const { return y0 + height; }
  bool empty() const { return width <= 0 || height <= 0; }
  bool contains(Index x, Index y) const { return x >= x0 && x < x1() && y >= y0 && y < y1(); }

  PixelRect intersect(const PixelRect& o) const {
    const Index nx0 = std::max(x0, o.x0);
    const Index ny0 = std::max(y0, o.y0);
    const Index nx1 = std::min(x1(), o.x1());
    const Index ny1 = std::min(y1(), o.y1());
    if (nx1 <= nx0 || ny1 <= ny0) return {nx0, ny0, 0, 0};
    return {nx0, ny0, nx1 - nx0, ny1 - ny0};
  }

  bool operator==(const PixelRect&) const = default;
};

/// Single-channel coverage map with values in [0, 1].
template <typename Scalar>
class AlphaMapT {
 public:
  AlphaMapT() = default;
  AlphaMapT(Index width, Index height) : data_(Plane<Scalar>::Zero(height, width)) {}
  explicit AlphaMapT(Plane<Scalar> data) : data_(std::move(data)) {}

  static AlphaMapT constant(Index width, Index height, Scalar value) {
    return AlphaMapT(Plane<Scalar>::Constant(height, width, value));
  }

  Index width() const { return data_.cols(); }
  Index height() const { return data_.rows(); }
  bool empty() const { return data_.size() == 0; }

  Scalar operator()(Index x, Index y) const { return data_(y, x); }
  Scalar& operator()(Index x, Index y) { return data_(y, x); }

  const Plane<Scalar>& plane() const { return data_; }
  Plane<Scalar>& plane() { return data_; }

  template <typename Other>
  AlphaMapT<Other> cast() const {
    return AlphaMapT<Other>(data_.template cast<Other>().eval());
  }

  bool in_unit_range() const {
    return data_.size() == 0 || (data_.minCoeff() >= Scalar(0) && data_.maxCoeff() <= Scalar(1));
  }

  bool operator==(const AlphaMapT& o) const {
    return width() == o.width() && height() == o.height() && (data_ == o.data_).all();
  }

 private:
  Plane<Scalar> data_;
};

/// Planar RGB image, each channel in [0, 1].
template <typename Scalar>
class RasterImageT {
 public:
  RasterImageT() = default;
  RasterImageT(Index width, Index height) {
    for (auto& c : channels_) c = Plane<Scalar>::Zero(height, width);
  }
  RasterImageT(Plane<Scalar> r, Plane<Scalar> g, Plane<Scalar> b)
      : channels_{std::move(r), std::move(g), std::move(b)} {
    if (channels_[1].rows() != channels_[0].rows() || channels_[2].rows() != channels_[0].rows() ||
        channels_[1].cols() != channels_[0].cols() || channels_[2].cols() != channels_[0].cols()) {
      throw Error("imaging", "channel planes differ in size");
    }
  }

  static RasterImageT filled(Index width, Index height, const Color& color) {
    RasterImageT img;
    for (int c = 0; c < 3; ++c) {
      img.channels_[c] = Plane<Scalar>::Constant(height, width, static_cast<Scalar>(color[c]));
    }
    return img;
  }

  Index width() const { return channels_[0].cols(); }
  Index height() const { return channels_[0].rows(); }
  bool empty() const { return channels_[0].size() == 0; }

  const Plane<Scalar>& channel(int c) const { return channels_[c]; }
  Plane<Scalar>& channel(int c) { return channels_[c]; }

  Scalar operator()(Index x, Index y, int c) const { return channels_[c](y, x); }
  Scalar& operator()(Index x, Index y, int c) { return channels_[c](y, x); }

  Rgb<Scalar> pixel(Index x, Index y) const {
    return {channels_[0](y, x), channels_[1](y, x), channels_[2](y, x)};
  }
  void set_pixel(Index x, Index y, const Rgb<Scalar>& v) {
    for (int c = 0; c < 3; ++c) channels_[c](y, x) = v[c];
  }

  template <typename Other>
  RasterImageT<Other> cast() const {
    return RasterImageT<Other>(channels_[0].template cast<Other>().eval(),
                               channels_[1].template cast<Other>().eval(),
                               channels_[2].template cast<Other>().eval());
  }

  /// Copy of the pixels inside `rect`, which must lie within the image.
  RasterImageT crop(const PixelRect& rect) const {
    if (rect.x0 < 0 || rect.y0 < 0 || rect.x1() > width() || rect.y1() > height() || rect.empty()) {
      throw Error("imaging", "crop rectangle outside image");
    }
    RasterImageT out;
    for (int c = 0; c < 3; ++c) {
      out.channels_[c] = channels_[c].block(rect.y0, rect.x0, rect.height, rect.width);
    }
    return out;
  }

  bool in_unit_range() const {
    for (const auto& c : channels_) {
      if (c.size() && (c.minCoeff() < Scalar(0) || c.maxCoeff() > Scalar(1))) return false;
    }
    return true;
  }

  bool operator==(const RasterImageT& o) const {
    if (width() != o.width() || height() != o.height()) return false;
    for (int c = 0; c < 3; ++c) {
      if (!(channels_[c] == o.channels_[c]).all()) return false;
    }
    return true;
  }

 private:
  std::array<Plane<Scalar>, 3> channels_;
};

using AlphaMap = AlphaMapT<float>;
using RasterImage = RasterImageT<float>;

// ---------------------------------------------------------------------------
// Interpolation kernels. `first(u)` is the lowest tap index touched when
// sampling at continuous index coordinate u; `weights` fills `taps` weights
// for the fractional offset t = u - floor(u).

struct BilinearKernel {
  static constexpr int taps = 2;
  static Index first(double u) { return static_cast<Index>(std::floor(u)); }
  template <typename S>
  static void weights(S t, S* w) {
    w[0] = S(1) - t;
    w[1] = t;
  }
  template <typename S>
  static void derivatives(S, S* dw) {
    dw[0] = S(-1);
    dw[1] = S(1);
  }
};

/// Uniform cubic B-spline. Weights are non-negative and sum to one, and the
/// reconstruction is C2 in the sample position.
struct CubicBSplineKernel {
  static constexpr int taps = 4;
  static Index first(double u) { return static_cast<Index>(std::floor(u)) - 1; }
  template <typename S>
  static void weights(S t, S* w) {
    const S t2 = t * t;
    const S t3 = t2 * t;
    const S omt = S(1) - t;
    w[0] = omt * omt * omt / S(6);
    w[1] = (S(3) * t3 - S(6) * t2 + S(4)) / S(6);
    w[2] = (S(-3) * t3 + S(3) * t2 + S(3) * t + S(1)) / S(6);
    w[3] = t3 / S(6);
  }
  template <typename S>
  static void derivatives(S t, S* dw) {
    const S t2 = t * t;
    const S omt = S(1) - t;
    dw[0] = -omt * omt / S(2);
    dw[1] = S(1.5) * t2 - S(2) * t;
    dw[2] = S(-1.5) * t2 + t + S(0.5);
    dw[3] = t2 / S(2);
  }
};

/// Samples `src` at continuous index coordinates (u, v); reads outside the
/// plane contribute zero.
template <typename Kernel, typename Scalar>
Scalar sample(const Plane<Scalar>& src, double u, double v) {
  const Index ix = Kernel::first(u);
  const Index iy = Kernel::first(v);
  Scalar wx[Kernel::taps], wy[Kernel::taps];
  Kernel::weights(static_cast<Scalar>(u - std::floor(u)), wx);
  Kernel::weights(static_cast<Scalar>(v - std::floor(v)), wy);
  const Index w = src.cols();
  const Index h = src.rows();
  Scalar acc = 0;
  for (int j = 0; j < Kernel::taps; ++j) {
    const Index y = iy + j;
    if (y < 0 || y >= h) continue;
    Scalar row = 0;
    for (int i = 0; i < Kernel::taps; ++i) {
      const Index x = ix + i;
      if (x < 0 || x >= w) continue;
      row += wx[i] * src(y, x);
    }
    acc += wy[j] * row;
  }
  return acc;
}

/// Resamples `src` through `transform` (output index coords -> source index
/// coords) into an out_width x out_height map. Samples outside the source
/// read as 0.
template <typename Scalar, typename Kernel = BilinearKernel>
AlphaMapT<Scalar> affine_sample(const AlphaMapT<Scalar>& src, const AffineCoeffs& transform,
                                Index out_width, Index out_height) {
  if (out_width <= 0 || out_height <= 0) {
    throw Error("imaging", "affine_sample: zero-area output");
  }
  AlphaMapT<Scalar> out(out_width, out_height);
  for (Index y = 0; y < out_height; ++y) {
    for (Index x = 0; x < out_width; ++x) {
      const double u = transform(0, 0) * x + transform(0, 1) * y + transform(0, 2);
      const double v = transform(1, 0) * x + transform(1, 1) * y + transform(1, 2);
      out(x, y) = std::clamp(sample<Kernel>(src.plane(), u, v), Scalar(0), Scalar(1));
    }
  }
  return out;
}

/// Normalized Gaussian taps for offsets -r..r with r = min(ceil(3 sigma), 8).
/// sigma == 0 yields the single tap {1}.
std::vector<double> gaussian_kernel(double sigma);

/// Truncation radius used by gaussian_kernel.
int gaussian_radius(double sigma);

/// One separable pass with edge-replicated borders. `horizontal` selects the
/// axis. Writes into `dst`, which must not alias `src`.
template <typename Scalar>
void convolve_pass(const Plane<Scalar>& src, std::span<const double> taps, bool horizontal,
                   Plane<Scalar>& dst) {
  const Index h = src.rows();
  const Index w = src.cols();
  const Index r = static_cast<Index>(taps.size() / 2);
  dst.resize(h, w);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      Scalar acc = 0;
      for (Index k = -r; k <= r; ++k) {
        const Scalar wk = static_cast<Scalar>(taps[k + r]);
        if (horizontal) {
          acc += wk * src(y, std::clamp<Index>(x + k, 0, w - 1));
        } else {
          acc += wk * src(std::clamp<Index>(y + k, 0, h - 1), x);
        }
      }
      dst(y, x) = acc;
    }
  }
}

/// Transpose of convolve_pass: accumulates the adjoint of `grad_out` into
/// `grad_in` (same shape).
template <typename Scalar>
void convolve_pass_adjoint(const Plane<Scalar>& grad_out, std::span<const double> taps,
                           bool horizontal, Plane<Scalar>& grad_in) {
  const Index h = grad_out.rows();
  const Index w = grad_out.cols();
  const Index r = static_cast<Index>(taps.size() / 2);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const Scalar g = grad_out(y, x);
      if (g == Scalar(0)) continue;
      for (Index k = -r; k <= r; ++k) {
        const Scalar wk = static_cast<Scalar>(taps[k + r]);
        if (horizontal) {
          grad_in(y, std::clamp<Index>(x + k, 0, w - 1)) += wk * g;
        } else {
          grad_in(std::clamp<Index>(y + k, 0, h - 1), x) += wk * g;
        }
      }
    }
  }
}

template <typename Scalar>
Plane<Scalar> gaussian_blur(const Plane<Scalar>& src, double sigma) {
  if (sigma < 0 || !std::isfinite(sigma)) {
    throw Error("imaging", "gaussian_blur: sigma must be finite and >= 0");
  }
  if (sigma == 0 || src.size() == 0) return src;
  const auto taps = gaussian_kernel(sigma);
  Plane<Scalar> tmp, out;
  convolve_pass<Scalar>(src, taps, true, tmp);
  convolve_pass<Scalar>(tmp, taps, false, out);
  return out;
}

/// Separable Gaussian blur with edge-replicated borders.
template <typename Scalar>
AlphaMapT<Scalar> gaussian_blur(const AlphaMapT<Scalar>& src, double sigma) {
  return AlphaMapT<Scalar>(gaussian_blur(src.plane(), sigma));
}

// ---------------------------------------------------------------------------
// Reconstruction metrics.

template <typename Scalar>
void require_same_size(const RasterImageT<Scalar>& a, const RasterImageT<Scalar>& b,
                       const char* what) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error("imaging", std::string(what) + ": dimension mismatch");
  }
}

/// Mean absolute difference over all pixels and channels.
template <typename Scalar>
double l1_error(const RasterImageT<Scalar>& a, const RasterImageT<Scalar>& b) {
  require_same_size(a, b, "l1_error");
  if (a.empty()) return 0.0;
  double sum = 0;
  for (int c = 0; c < 3; ++c) {
    sum += (a.channel(c).template cast<double>() - b.channel(c).template cast<double>()).abs().sum();
  }
  return sum / (3.0 * static_cast<double>(a.width() * a.height()));
}

template <typename Scalar>
double mean_squared_error(const RasterImageT<Scalar>& a, const RasterImageT<Scalar>& b) {
  require_same_size(a, b, "mse");
  if (a.empty()) return 0.0;
  double sum = 0;
  for (int c = 0; c < 3; ++c) {
    sum += (a.channel(c).template cast<double>() - b.channel(c).template cast<double>())
               .square()
               .sum();
  }
  return sum / (3.0 * static_cast<double>(a.width() * a.height()));
}

inline constexpr double kPsnrCap = 99.0;

inline double psnr_from_mse(double mse) {
  if (mse < 1e-10) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

/// Peak signal-to-noise ratio in dB for unit-range images, capped at 99 dB.
template <typename Scalar>
double psnr(const RasterImageT<Scalar>& a, const RasterImageT<Scalar>& b) {
  return psnr_from_mse(mean_squared_error(a, b));
}

// ---------------------------------------------------------------------------
// Misc helpers.

/// Bilinear resize with pixel-center alignment and edge clamping.
RasterImage resize_bilinear(const RasterImage& src, Index width, Index height);

/// Rounds every channel to the nearest k/255 (round half up).
RasterImage quantize_8bit(const RasterImage& src);

inline std::uint8_t to_8bit(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::floor(v * 255.0 + 0.5), 0.0, 255.0));
}

/// Morphological max filter with a disk of the given radius (in pixels).
AlphaMap dilate_disk(const AlphaMap& src, double radius);

}  // namespace derender
