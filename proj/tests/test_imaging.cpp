#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "vlmcc/imaging.hpp"

using namespace vlmcc;

TEST_CASE("color matrix algebra", "[imaging]") {
  const ColorMatrix id = ColorMatrix::identity();
  CHECK(id.det() == 1.0);
  const auto v = id.apply(0.2, 0.5, 0.9);
  CHECK(v[0] == 0.2);
  CHECK(v[1] == 0.5);
  CHECK(v[2] == 0.9);

  const ColorMatrix a{{0.7, 0.2, 0.1, 0.1, 0.8, 0.1, 0.05, 0.15, 0.8}};
  const ColorMatrix inv = a.inverse();
  const ColorMatrix prod = a.multiply(inv);
  for (int i = 0; i < 9; ++i) {
    const double expect = (i % 4 == 0) ? 1.0 : 0.0;
    CHECK(prod.m[i] == Catch::Approx(expect).margin(1e-12));
  }

  // multiply order matters (matrix product, not elementwise)
  const ColorMatrix b{{2, 0, 0, 0, 1, 0, 0, 0, 1}};
  const auto ab = a.multiply(b).apply(1.0, 1.0, 1.0);
  const auto ba = b.multiply(a).apply(1.0, 1.0, 1.0);
  CHECK(ab[0] == Catch::Approx(0.7 * 2 + 0.2 + 0.1));
  CHECK(ba[0] == Catch::Approx(2 * (0.7 + 0.2 + 0.1)));

  const ColorMatrix singular{{1, 2, 3, 2, 4, 6, 0, 1, 0}};
  CHECK_THROWS_AS(singular.inverse(), DomainError);
}

TEST_CASE("display transfer curve", "[imaging]") {
  CHECK(srgb_encode(0.0) == 0.0);
  CHECK(srgb_encode(1.0) == Catch::Approx(1.0).margin(1e-12));
  CHECK(srgb_encode(0.5) == Catch::Approx(0.7353569831).margin(1e-9));
  // both branch formulas agree at the knee
  CHECK(srgb_encode(0.0031308) == Catch::Approx(0.040449936).margin(1e-7));
  CHECK(srgb_decode(0.04045) == Catch::Approx(0.003130804954).margin(1e-9));
  for (double u : {0.001, 0.0031308, 0.02, 0.18, 0.5, 0.9, 1.0}) {
    CHECK(srgb_decode(srgb_encode(u)) == Catch::Approx(u).margin(1e-12));
  }
  // monotone over the full range
  double prev = -1.0;
  for (int i = 0; i <= 1000; ++i) {
    const double e = srgb_encode(i / 1000.0);
    CHECK(e > prev);
    prev = e;
  }
}

TEST_CASE("pinned forward matrix maps reference white to unity", "[imaging]") {
  const auto w = xyz_to_linear_srgb().apply(0.95047, 1.0, 1.08883);
  CHECK(w[0] == Catch::Approx(1.0).margin(2e-7));
  CHECK(w[1] == Catch::Approx(1.0).margin(2e-7));
  CHECK(w[2] == Catch::Approx(1.0).margin(2e-7));
  CHECK(xyz_to_linear_srgb().det() == Catch::Approx(4.8292237378).margin(1e-9));
}

TEST_CASE("exposure-stable gains peak at one", "[imaging]") {
  const auto g = exposure_stable_gains(normalize(0.6, 0.8, 0.1));
  CHECK(g[0] == Catch::Approx(0.75).margin(1e-12));
  CHECK(g[1] == 1.0);  // max channel exactly one, bitwise
  CHECK(g[2] == Catch::Approx(0.125).margin(1e-12));

  // scaling the estimate does not change the gains
  const auto g2 = exposure_stable_gains(Illuminant{1.2, 1.6, 0.2});
  for (int c = 0; c < 3; ++c)
    CHECK(g2[c] == Catch::Approx(g[c]).margin(1e-12));
}

TEST_CASE("white balance inverts illuminant application", "[imaging]") {
  Rng rng(77);
  LinearImage img;
  img.width = 8;
  img.height = 6;
  img.data.resize(8 * 6 * 3);
  for (double& v : img.data) v = rng.uniform(0.01, 0.9);

  const Illuminant est = normalize(0.9, 0.7, 0.4);
  const LinearImage cycled = apply_illuminant(white_balance(img, est), est);
  REQUIRE(cycled.data.size() == img.data.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < img.data.size(); ++i)
    worst = std::max(worst, std::abs(cycled.data[i] - img.data[i]));
  CHECK(worst < 1e-12);

  // balancing under the true light neutralizes a uniform scene exactly
  const LinearImage lit = apply_illuminant(
      LinearImage::filled(4, 4, 0.5, 0.5, 0.5), est);
  const LinearImage balanced = white_balance(lit, est);
  for (std::size_t i = 0; i < balanced.data.size(); ++i)
    CHECK(balanced.data[i] == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("render clips and applies the transfer curve", "[imaging]") {
  // half-intensity reference white becomes mid gray after the full chain
  const LinearImage img =
      LinearImage::filled(3, 3, 0.95047 * 0.5, 0.5, 1.08883 * 0.5);
  const SrgbImage render = to_pseudo_srgb(img, ColorMatrix::identity());
  for (int c = 0; c < 3; ++c)
    CHECK(render.at(1, 1, c) == Catch::Approx(0.7353569831).margin(1e-6));

  const SrgbImage linear_render =
      to_pseudo_srgb(img, ColorMatrix::identity(), false);
  for (int c = 0; c < 3; ++c)
    CHECK(linear_render.at(1, 1, c) == Catch::Approx(0.5).margin(1e-6));

  // out-of-range values clip to [0, 1] before encoding
  const LinearImage hot = LinearImage::filled(2, 2, 5.0, 5.0, 5.0);
  const SrgbImage clipped = to_pseudo_srgb(hot, ColorMatrix::identity());
  double lo = 2.0, hi = -1.0;
  for (double v : clipped.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo >= 0.0);
  CHECK(hi <= 1.0);
  CHECK(hi == Catch::Approx(1.0).margin(1e-12));  // channels saturate

  // linearize undoes the curve (identity matrix, in-gamut values)
  const LinearImage mid = LinearImage::filled(2, 2, 0.2, 0.2, 0.2);
  SrgbImage curve_only;
  curve_only.width = 2;
  curve_only.height = 2;
  curve_only.data.resize(2 * 2 * 3);
  for (std::size_t i = 0; i < curve_only.data.size(); ++i)
    curve_only.data[i] = srgb_encode(mid.data[i]);
  const LinearImage back = linearize_srgb(curve_only);
  for (double v : back.data) CHECK(v == Catch::Approx(0.2).margin(1e-12));
}

TEST_CASE("mask rectangles cover the right pixels", "[imaging]") {
  LinearImage img = LinearImage::filled(10, 10, 0.5, 0.5, 0.5);
  img.mask.push_back(MaskRect{2, 3, 4, 2});
  CHECK(img.is_masked(2, 3));
  CHECK(img.is_masked(5, 4));
  CHECK_FALSE(img.is_masked(6, 3));  // x just past the rect
  CHECK_FALSE(img.is_masked(2, 5));  // y just past the rect
  CHECK_FALSE(img.is_masked(1, 3));
  CHECK_FALSE(img.is_masked(0, 0));
  img.mask.push_back(MaskRect{0, 0, 1, 1});
  CHECK(img.is_masked(0, 0));  // union of rects
}

TEST_CASE("resize keeps aspect and interpolates linearly", "[imaging]") {
  SrgbImage img;
  img.width = 8;
  img.height = 8;
  img.data.resize(8 * 8 * 3);
  // horizontal ramp, constant down each column
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = x / 10.0;

  CHECK_THROWS_AS(resize_shorter_side(img, 8), DomainError);   // below floor
  CHECK_THROWS_AS(resize_shorter_side(img, 15), DomainError);

  const SrgbImage up = resize_shorter_side(img, 16);
  REQUIRE(up.width == 16);
  REQUIRE(up.height == 16);
  // source coordinate of output x is (x + 0.5)/2 - 0.5
  CHECK(up.at(0, 4, 0) == Catch::Approx(0.0).margin(1e-12));   // clamped edge
  CHECK(up.at(1, 4, 0) == Catch::Approx(0.25 * 0.1).margin(1e-12));
  CHECK(up.at(2, 4, 0) == Catch::Approx(0.75 * 0.1).margin(1e-12));
  CHECK(up.at(3, 4, 0) == Catch::Approx(1.25 * 0.1).margin(1e-12));
  CHECK(up.at(15, 4, 0) == Catch::Approx(0.7).margin(1e-12));  // clamped edge

  // exact pass-through at the target size
  SrgbImage at_target;
  at_target.width = 20;
  at_target.height = 16;
  at_target.data.resize(20 * 16 * 3);
  for (std::size_t i = 0; i < at_target.data.size(); ++i)
    at_target.data[i] = (static_cast<double>(i % 97)) / 97.0;
  const SrgbImage same = resize_shorter_side(at_target, 16);
  CHECK(same.width == 20);
  CHECK(same.data == at_target.data);  // bitwise, no resampling

  // landscape input: height becomes the target, width scales by ratio
  SrgbImage wide;
  wide.width = 32;
  wide.height = 20;
  wide.data.assign(32 * 20 * 3, 0.25);
  const SrgbImage scaled = resize_shorter_side(wide, 16);
  CHECK(scaled.height == 16);
  CHECK(scaled.width == 26);  // lround(32 * 16 / 20)
  for (double v : scaled.data) CHECK(v == Catch::Approx(0.25).margin(1e-12));
}
