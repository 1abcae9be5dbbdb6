#include <doctest.h>

#include <cmath>
#include <random>

#include "derender/imaging.hpp"
#include "derender/png_io.hpp"
#include "test_support.hpp"

using namespace derender;
namespace dt = derender::testing;

namespace {

// Supersampled coverage of a disk, computed independently of the resampler.
AlphaMap analytic_disk(Index size, double cx, double cy, double r) {
  AlphaMap out(size, size);
  const int n = 8;
  for (Index y = 0; y < size; ++y) {
    for (Index x = 0; x < size; ++x) {
      int inside = 0;
      for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
          const double px = x + (i + 0.5) / n - 0.5, py = y + (j + 0.5) / n - 0.5;
          inside += (px - cx) * (px - cx) + (py - cy) * (py - cy) <= r * r;
        }
      }
      out(x, y) = static_cast<float>(inside) / (n * n);
    }
  }
  return out;
}

// Radius implied by the covered area.
double area_radius(const AlphaMap& a) { return std::sqrt(a.plane().cast<double>().sum() / M_PI); }

}  // namespace

TEST_CASE("l1_error examples") {
  const auto a = RasterImage::filled(8, 5, Color(0.25, 0.25, 0.25));
  const auto b = RasterImage::filled(8, 5, Color(0.75, 0.75, 0.75));
  CHECK(l1_error(a, a) == 0.0);
  CHECK(l1_error(RasterImage::filled(4, 4, Color::Zero()), RasterImage::filled(4, 4, Color::Ones())) == 1.0);
  CHECK(l1_error(a, b) == doctest::Approx(0.5));
  CHECK_THROWS_AS(l1_error(a, RasterImage(7, 5)), Error);
}

TEST_CASE("psnr examples") {
  const auto a = RasterImage::filled(8, 8, Color(0.5, 0.5, 0.5));
  CHECK(psnr(a, a) == kPsnrCap);
  CHECK(psnr_from_mse(0.01) == doctest::Approx(20.0));
  CHECK(psnr_from_mse(0.001) == doctest::Approx(30.0));
  const auto b = RasterImage::filled(8, 8, Color(0.6, 0.6, 0.6));
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-5));
  CHECK_THROWS_AS(psnr(a, RasterImage(8, 9)), Error);
}

TEST_CASE("metrics are symmetric") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    const auto a = dt::random_image(rng, 13, 9), b = dt::random_image(rng, 13, 9);
    CHECK(l1_error(a, b) == l1_error(b, a));
    CHECK(psnr(a, b) == psnr(b, a));
  }
}

TEST_CASE("affine_sample identity is exact") {
  std::mt19937_64 rng(2);
  const auto a = dt::random_alpha(rng, 17, 11);
  CHECK(affine_sample(a, identity_affine(), 17, 11) == a);
  CHECK(affine_sample<float, CubicBSplineKernel>(a, identity_affine(), 17, 11).in_unit_range());
}

TEST_CASE("affine_sample integer translation shifts the array") {
  std::mt19937_64 rng(3);
  const auto a = dt::random_alpha(rng, 20, 10);
  AffineCoeffs t = identity_affine();
  t(0, 2) = -3;  // output x reads source x - 3
  const auto out = affine_sample(a, t, 20, 10);
  for (Index y = 0; y < 10; ++y) {
    for (Index x = 0; x < 20; ++x) CHECK(out(x, y) == (x < 3 ? 0.0f : a(x - 3, y)));
  }
}

TEST_CASE("affine_sample 2x scale doubles a disk radius") {
  const Index n = 64;
  const auto disk = analytic_disk(n, 31.5, 31.5, 8);
  AffineCoeffs t;
  // Output pixel x reads source 31.5 + (x - 31.5) / 2.
  t << 0.5, 0, 15.75, 0, 0.5, 15.75;
  const auto big = affine_sample(disk, t, n, n);
  CHECK(area_radius(big) == doctest::Approx(16).epsilon(1.0 / 16));
  const auto oracle = analytic_disk(n, 31.5, 31.5, 16);
  CHECK(std::abs(area_radius(big) - area_radius(oracle)) < 1.0);
  CHECK_THROWS_AS(affine_sample(disk, t, 0, 4), Error);
}

TEST_CASE("gaussian_blur examples") {
  std::mt19937_64 rng(4);
  const auto a = dt::random_alpha(rng, 16, 12);
  CHECK(gaussian_blur(a, 0.0) == a);

  const auto c = AlphaMap::constant(21, 15, 0.7f);
  for (double s : {0.5, 1.0, 2.5}) {
    const auto b = gaussian_blur(c, s);
    CHECK((b.plane() - 0.7f).abs().maxCoeff() < 1e-6f);
  }

  AlphaMap impulse(21, 21);
  impulse(10, 10) = 1;
  const auto b = gaussian_blur(impulse, 1.0);
  // Truncated normalized kernel, computed directly.
  const int r = 3;
  double norm = 0;
  for (int k = -r; k <= r; ++k) norm += std::exp(-0.5 * k * k);
  CHECK(b(10, 10) == doctest::Approx(1.0 / (norm * norm)).epsilon(1e-6));
  CHECK_THROWS_AS(gaussian_blur(a, -1.0), Error);
}

TEST_CASE("gaussian_blur preserves mass away from borders") {
  std::mt19937_64 rng(5);
  for (double sigma : {0.7, 1.3, 2.0}) {
    AlphaMap a(48, 48);
    const int r = gaussian_radius(sigma);
    for (Index y = r; y < 48 - r; ++y) {
      for (Index x = r; x < 48 - r; ++x) {
        if (x >= 2 * r && x < 48 - 2 * r && y >= 2 * r && y < 48 - 2 * r) a(x, y) = static_cast<float>(dt::uniform(rng, 0, 1));
      }
    }
    const auto b = gaussian_blur(a, sigma);
    CHECK(b.plane().cast<double>().sum() == doctest::Approx(a.plane().cast<double>().sum()).epsilon(1e-6));
    CHECK(b.in_unit_range());
  }
}

TEST_CASE("sampling kernels are partitions of unity") {
  for (double t = 0; t < 1; t += 0.0625) {
    double w2[2], w4[4];
    BilinearKernel::weights(t, w2);
    CubicBSplineKernel::weights(t, w4);
    CHECK(w2[0] + w2[1] == doctest::Approx(1));
    CHECK(w4[0] + w4[1] + w4[2] + w4[3] == doctest::Approx(1));
    for (double w : w4) CHECK(w >= 0);
  }
}

TEST_CASE("quantize_8bit and PNG round trip") {
  std::mt19937_64 rng(6);
  const auto img = quantize_8bit(dt::random_image(rng, 19, 7));
  CHECK(decode_png(encode_png(img)) == img);
  CHECK(to_8bit(0.5) == 128);
  CHECK(to_8bit(-1) == 0);
  CHECK(to_8bit(2) == 255);
}

TEST_CASE("resize_bilinear and dilate_disk stay in range") {
  std::mt19937_64 rng(7);
  const auto img = dt::random_image(rng, 20, 12);
  const auto r = resize_bilinear(img, 10, 6);
  CHECK(r.width() == 10);
  CHECK(r.in_unit_range());
  AlphaMap dot(15, 15);
  dot(7, 7) = 1;
  const auto d = dilate_disk(dot, 2);
  CHECK(d(9, 7) == 1.0f);
  CHECK(d(10, 7) == 0.0f);
}
