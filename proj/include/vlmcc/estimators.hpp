#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "vlmcc/chroma.hpp"
#include "vlmcc/error.hpp"
#include "vlmcc/imaging.hpp"

namespace vlmcc {

// Statistical illuminant estimators.  All of them pool over unmasked
// pixels only, accumulate in row-major order (deterministic fold), and
// return a unit-norm direction.

inline Illuminant gray_world(const LinearImage& img) {
  double sum[3] = {0.0, 0.0, 0.0};
  long long count = 0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      if (img.is_masked(x, y)) continue;
      sum[0] += img.at(x, y, 0);
      sum[1] += img.at(x, y, 1);
      sum[2] += img.at(x, y, 2);
      ++count;
    }
  if (count == 0) throw DomainError("gray_world: image fully masked");
  return normalize(sum[0] / count, sum[1] / count, sum[2] / count);
}

// Minkowski-mean generalization: p=1 is the channel mean, large p tends
// toward the per-channel maximum.
inline Illuminant shades_of_gray(const LinearImage& img, double p) {
  if (!(p >= 1.0)) throw DomainError("shades_of_gray: p must be >= 1");
  if (p == 1.0) return gray_world(img);  // exact, not just numerically close
  double sum[3] = {0.0, 0.0, 0.0};
  long long count = 0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      if (img.is_masked(x, y)) continue;
      for (int c = 0; c < 3; ++c)
        sum[c] += std::pow(std::max(img.at(x, y, c), 0.0), p);
      ++count;
    }
  if (count == 0) throw DomainError("shades_of_gray: image fully masked");
  return normalize(std::pow(sum[0] / count, 1.0 / p),
                   std::pow(sum[1] / count, 1.0 / p),
                   std::pow(sum[2] / count, 1.0 / p));
}

namespace detail {

// Separable Gaussian blur with edge clamping, one channel plane.
inline std::vector<double> gaussian_blur_plane(const std::vector<double>& in,
                                               int w, int h, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double ksum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = v;
    ksum += v;
  }
  for (double& v : kernel) v /= ksum;

  std::vector<double> tmp(in.size()), out(in.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int sx = std::clamp(x + i, 0, w - 1);
        const double kv = kernel[static_cast<std::size_t>(i + radius)];
        acc += kv * in[static_cast<std::size_t>(y) * w + sx];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int sy = std::clamp(y + i, 0, h - 1);
        const double kv = kernel[static_cast<std::size_t>(i + radius)];
        acc += kv * tmp[static_cast<std::size_t>(sy) * w + x];
      }
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  return out;
}

}  // namespace detail

// Pools spatial derivative magnitude instead of raw intensity: the
// assumption is that edge contrast, not surface reflectance, averages to
// gray.  order 1 uses central differences, order 2 the 4-neighbor
// Laplacian; an optional Gaussian pre-blur (sigma in pixels) suppresses
// sensor noise before differentiation.  The 1-pixel image border and any
// pixel whose derivative stencil touches a mask are excluded.
inline Illuminant gray_edge(const LinearImage& img, int order, double p,
                            double sigma) {
  if (order != 1 && order != 2)
    throw DomainError("gray_edge: order must be 1 or 2");
  if (!(p >= 1.0)) throw DomainError("gray_edge: p must be >= 1");
  if (!(sigma >= 0.0)) throw DomainError("gray_edge: sigma must be >= 0");
  const int radius =
      sigma > 0.0 ? static_cast<int>(std::ceil(3.0 * sigma)) : 0;
  if (img.width <= 2 * radius + 2 || img.height <= 2 * radius + 2)
    throw DomainError("gray_edge: image smaller than blur kernel");

  const std::size_t plane_size =
      static_cast<std::size_t>(img.width) * img.height;
  std::array<std::vector<double>, 3> plane;
  for (int c = 0; c < 3; ++c) {
    plane[c].resize(plane_size);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        plane[c][static_cast<std::size_t>(y) * img.width + x] =
            img.at(x, y, c);
    if (sigma > 0.0)
      plane[c] = detail::gaussian_blur_plane(plane[c], img.width, img.height,
                                             sigma);
  }

  const auto pv = [&](int c, int x, int y) {
    return plane[c][static_cast<std::size_t>(y) * img.width + x];
  };
  const auto stencil_masked = [&](int x, int y) {
    return img.is_masked(x, y) || img.is_masked(x - 1, y) ||
           img.is_masked(x + 1, y) || img.is_masked(x, y - 1) ||
           img.is_masked(x, y + 1);
  };

  double sum[3] = {0.0, 0.0, 0.0};
  long long count = 0;
  for (int y = 1; y < img.height - 1; ++y)
    for (int x = 1; x < img.width - 1; ++x) {
      if (stencil_masked(x, y)) continue;
      for (int c = 0; c < 3; ++c) {
        double mag;
        if (order == 1) {
          const double dx = 0.5 * (pv(c, x + 1, y) - pv(c, x - 1, y));
          const double dy = 0.5 * (pv(c, x, y + 1) - pv(c, x, y - 1));
          mag = std::sqrt(dx * dx + dy * dy);
        } else {
          mag = std::abs(pv(c, x + 1, y) + pv(c, x - 1, y) +
                         pv(c, x, y + 1) + pv(c, x, y - 1) -
                         4.0 * pv(c, x, y));
        }
        sum[c] += std::pow(mag, p);
      }
      ++count;
    }
  if (count == 0) throw DomainError("gray_edge: no usable pixels");
  try {
    return normalize(std::pow(sum[0] / count, 1.0 / p),
                     std::pow(sum[1] / count, 1.0 / p),
                     std::pow(sum[2] / count, 1.0 / p));
  } catch (const DomainError&) {
    throw DomainError("gray_edge: zero derivative energy (flat image)");
  }
}

}  // namespace vlmcc
