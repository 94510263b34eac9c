#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "vlmcc/chroma.hpp"
#include "vlmcc/error.hpp"

namespace vlmcc {

// Axis-aligned region excluded from every image statistic (calibration
// targets, saturated patches).  Rendering ignores masks; only estimators
// and oracles that pool over pixels honor them.
struct MaskRect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  bool contains(int px, int py) const {
    return px >= x && px < x + w && py >= y && py < y + h;
  }
};

namespace detail {
inline std::size_t pixel_index(int width, int x, int y, int c) {
  return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
          static_cast<std::size_t>(x)) *
             3 +
         static_cast<std::size_t>(c);
}
}  // namespace detail

// Demosaicked camera-space image, linear in scene radiance.  Interleaved
// RGB doubles in [0, 1], row-major.
struct LinearImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;
  std::vector<MaskRect> mask;

  static LinearImage filled(int w, int h, double r, double g, double b) {
    if (w <= 0 || h <= 0) throw DomainError("LinearImage: empty dimensions");
    LinearImage img;
    img.width = w;
    img.height = h;
    img.data.resize(static_cast<std::size_t>(w) * h * 3);
    for (std::size_t i = 0; i < img.data.size(); i += 3) {
      img.data[i] = r;
      img.data[i + 1] = g;
      img.data[i + 2] = b;
    }
    return img;
  }

  double at(int x, int y, int c) const {
    return data[detail::pixel_index(width, x, y, c)];
  }
  double& at(int x, int y, int c) {
    return data[detail::pixel_index(width, x, y, c)];
  }

  bool is_masked(int x, int y) const {
    for (const MaskRect& m : mask)
      if (m.contains(x, y)) return true;
    return false;
  }
};

// Display-referred render; same layout, values in [0, 1].
struct SrgbImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  double at(int x, int y, int c) const {
    return data[detail::pixel_index(width, x, y, c)];
  }
  double& at(int x, int y, int c) {
    return data[detail::pixel_index(width, x, y, c)];
  }
};

// ─── 3x3 color matrix ───

struct ColorMatrix {
  std::array<double, 9> m = {1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major

  static ColorMatrix identity() { return {}; }

  double det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) -
           m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }

  std::array<double, 3> apply(double r, double g, double b) const {
    return {m[0] * r + m[1] * g + m[2] * b, m[3] * r + m[4] * g + m[5] * b,
            m[6] * r + m[7] * g + m[8] * b};
  }

  ColorMatrix multiply(const ColorMatrix& o) const {
    ColorMatrix out;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += m[i * 3 + k] * o.m[k * 3 + j];
        out.m[i * 3 + j] = s;
      }
    return out;
  }

  ColorMatrix inverse() const {
    const double d = det();
    if (std::abs(d) <= 1e-9)
      throw DomainError("ColorMatrix: singular matrix");
    ColorMatrix inv;
    inv.m[0] = (m[4] * m[8] - m[5] * m[7]) / d;
    inv.m[1] = (m[2] * m[7] - m[1] * m[8]) / d;
    inv.m[2] = (m[1] * m[5] - m[2] * m[4]) / d;
    inv.m[3] = (m[5] * m[6] - m[3] * m[8]) / d;
    inv.m[4] = (m[0] * m[8] - m[2] * m[6]) / d;
    inv.m[5] = (m[2] * m[3] - m[0] * m[5]) / d;
    inv.m[6] = (m[3] * m[7] - m[4] * m[6]) / d;
    inv.m[7] = (m[1] * m[6] - m[0] * m[7]) / d;
    inv.m[8] = (m[0] * m[4] - m[1] * m[3]) / d;
    return inv;
  }
};

// XYZ (D65) to linear sRGB, IEC 61966-2-1 primaries.
inline const ColorMatrix& xyz_to_linear_srgb() {
  static const ColorMatrix k{{3.2404542, -1.5371385, -0.4985314,
                              -0.9692660, 1.8760108, 0.0415560,
                              0.0556434, -0.2040259, 1.0572252}};
  return k;
}

// ─── sRGB transfer curve ───

inline double srgb_encode(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u <= 0.0031308 ? 12.92 * u
                        : 1.055 * std::pow(u, 1.0 / 2.4) - 0.055;
}

inline double srgb_decode(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u <= 0.04045 ? u / 12.92 : std::pow((u + 0.055) / 1.055, 2.4);
}

// ─── white balance ───

// Per-channel gains that divide out the illuminant while leaving the
// brightest channel untouched, so overall exposure is preserved.
inline std::array<double, 3> exposure_stable_gains(const Illuminant& est) {
  const Illuminant e = normalize(est.r, est.g, est.b);
  const double m = std::max({e.r, e.g, e.b});
  return {e.r / m, e.g / m, e.b / m};
}

inline LinearImage white_balance(const LinearImage& img,
                                 const Illuminant& est) {
  const std::array<double, 3> gain = exposure_stable_gains(est);
  LinearImage out = img;
  for (std::size_t i = 0; i < out.data.size(); i += 3) {
    out.data[i] /= gain[0];
    out.data[i + 1] /= gain[1];
    out.data[i + 2] /= gain[2];
  }
  return out;
}

// Exact inverse of white_balance for the same illuminant: tints a balanced
// image by `ell` using the identical max-normalized gains.
inline LinearImage apply_illuminant(const LinearImage& img,
                                    const Illuminant& ell) {
  const std::array<double, 3> gain = exposure_stable_gains(ell);
  LinearImage out = img;
  for (std::size_t i = 0; i < out.data.size(); i += 3) {
    out.data[i] *= gain[0];
    out.data[i + 1] *= gain[1];
    out.data[i + 2] *= gain[2];
  }
  return out;
}

// ─── display rendering ───

// Camera space -> XYZ (scene ccm) -> linear sRGB, clipped to [0, 1],
// then gamma-encoded unless disabled.  This is the view every cast
// oracle sees; it is deliberately a plausible-looking photo, not a
// colorimetrically exact one.
inline SrgbImage to_pseudo_srgb(const LinearImage& img,
                                const ColorMatrix& cam_to_xyz,
                                bool gamma_enabled = true) {
  const ColorMatrix full = xyz_to_linear_srgb().multiply(cam_to_xyz);
  SrgbImage out;
  out.width = img.width;
  out.height = img.height;
  out.data.resize(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); i += 3) {
    const std::array<double, 3> v =
        full.apply(img.data[i], img.data[i + 1], img.data[i + 2]);
    for (int c = 0; c < 3; ++c) {
      const double clipped = std::clamp(v[c], 0.0, 1.0);
      out.data[i + c] = gamma_enabled ? srgb_encode(clipped) : clipped;
    }
  }
  return out;
}

// Inverse transfer curve only (no matrix); recovers a linear image from a
// gamma-encoded render so statistical estimators can pool in linear space.
inline LinearImage linearize_srgb(const SrgbImage& img) {
  LinearImage out;
  out.width = img.width;
  out.height = img.height;
  out.data.resize(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i)
    out.data[i] = srgb_decode(img.data[i]);
  return out;
}

// ─── resize ───

// Scales so the shorter side equals `target`, preserving aspect ratio,
// bilinear sampling.  Exact no-op (same buffer) when already at target.
inline SrgbImage resize_shorter_side(const SrgbImage& img, int target) {
  if (target < 16) throw DomainError("resize_shorter_side: target too small");
  if (img.width <= 0 || img.height <= 0)
    throw DomainError("resize_shorter_side: empty image");
  const int shorter = std::min(img.width, img.height);
  if (shorter == target) return img;

  const double scale = static_cast<double>(target) / shorter;
  int dw, dh;
  if (img.width <= img.height) {
    dw = target;
    dh = std::max(1, static_cast<int>(std::lround(img.height * scale)));
  } else {
    dh = target;
    dw = std::max(1, static_cast<int>(std::lround(img.width * scale)));
  }

  SrgbImage out;
  out.width = dw;
  out.height = dh;
  out.data.resize(static_cast<std::size_t>(dw) * dh * 3);

  const double sx = static_cast<double>(img.width) / dw;
  const double sy = static_cast<double>(img.height) / dh;
  for (int y = 0; y < dh; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < dw; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = (1.0 - wx) * img.at(x0, y0, c) + wx * img.at(x1, y0, c);
        const double bot = (1.0 - wx) * img.at(x0, y1, c) + wx * img.at(x1, y1, c);
        out.at(x, y, c) = (1.0 - wy) * top + wy * bot;
      }
    }
  }
  return out;
}

}  // namespace vlmcc
