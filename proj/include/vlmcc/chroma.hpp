#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "vlmcc/error.hpp"
#include "vlmcc/random.hpp"

namespace vlmcc {

// Unit-norm RGB direction of the scene illuminant.  Components are kept
// strictly positive (floored at kComponentFloor before normalization) so
// channel ratios and geometric means are always defined.
struct Illuminant {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;

  std::array<double, 3> to_array() const { return {r, g, b}; }
  double operator[](int i) const { return i == 0 ? r : (i == 1 ? g : b); }
};

inline constexpr double kComponentFloor = 1e-6;

enum class CastLabel { red = 0, green = 1, blue = 2 };

inline std::string_view to_string(CastLabel c) {
  switch (c) {
    case CastLabel::red: return "red";
    case CastLabel::green: return "green";
    case CastLabel::blue: return "blue";
  }
  return "red";
}

// Strict: exact lowercase match only, anything else is not a label.
inline std::optional<CastLabel> parse_cast_label(std::string_view s) {
  if (s == "red") return CastLabel::red;
  if (s == "green") return CastLabel::green;
  if (s == "blue") return CastLabel::blue;
  return std::nullopt;
}

// Axis the estimate moves toward when the oracle reports cast c: a red cast
// means the render shows leftover red, i.e. the estimate under-weighted the
// red channel.
inline std::array<double, 3> axis_direction(CastLabel c) {
  switch (c) {
    case CastLabel::red: return {1.0, 0.0, 0.0};
    case CastLabel::green: return {0.0, 1.0, 0.0};
    case CastLabel::blue: return {0.0, 0.0, 1.0};
  }
  return {1.0, 0.0, 0.0};
}

inline double deg_to_rad(double d) { return d * std::numbers::pi / 180.0; }
inline double rad_to_deg(double r) { return r * 180.0 / std::numbers::pi; }

// ─── normalization ───

inline Illuminant normalize(double r, double g, double b) {
  if (!std::isfinite(r) || !std::isfinite(g) || !std::isfinite(b))
    throw DomainError("normalize: non-finite component");
  if (r <= 0.0 && g <= 0.0 && b <= 0.0)
    throw DomainError("normalize: all components nonpositive");
  r = std::max(r, kComponentFloor);
  g = std::max(g, kComponentFloor);
  b = std::max(b, kComponentFloor);
  const double n = std::sqrt(r * r + g * g + b * b);
  return {r / n, g / n, b / n};
}

inline Illuminant normalize(const std::array<double, 3>& v) {
  return normalize(v[0], v[1], v[2]);
}

// ─── angles ───

// Angle between two directions, in degrees.  Inputs are renormalized, so
// any positive scaling of either argument gives the same answer.
inline double angular_error_deg(const Illuminant& a, const Illuminant& b) {
  const double na = std::sqrt(a.r * a.r + a.g * a.g + a.b * a.b);
  const double nb = std::sqrt(b.r * b.r + b.g * b.g + b.b * b.b);
  if (na == 0.0 || nb == 0.0)
    throw DomainError("angular_error_deg: zero-length input");
  double c = (a.r * b.r + a.g * b.g + a.b * b.b) / (na * nb);
  c = std::clamp(c, -1.0, 1.0);
  return rad_to_deg(std::acos(c));
}

// Same measure on raw vectors, without the positivity floor.  Lets tests
// check pure axis geometry, e.g. (1,0,0) vs (0,1,0) -> 90.
inline double angular_error_deg_raw(const std::array<double, 3>& a,
                                    const std::array<double, 3>& b) {
  const double na = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
  const double nb = std::sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2]);
  if (na == 0.0 || nb == 0.0)
    throw DomainError("angular_error_deg_raw: zero-length input");
  double c = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) / (na * nb);
  c = std::clamp(c, -1.0, 1.0);
  return rad_to_deg(std::acos(c));
}

// ─── rotation on the unit sphere ───

struct RotationResult {
  Illuminant estimate;
  bool degenerate = false;  // estimate already on the target axis; no move
};

// Moves `from` along the great circle toward the axis of `cast` by exactly
// `angle_deg`.  The tangent is the component of the axis orthogonal to
// `from`; when its length is down at the positivity-floor noise level the
// estimate is already on the axis for all practical purposes, the rotation
// direction is meaningless, and the input is returned with the degenerate
// flag set.
inline constexpr double kDegenerateTangent = 1e-5;

inline RotationResult rotate_toward(const Illuminant& from, CastLabel cast,
                                    double angle_deg) {
  if (!(angle_deg > 0.0) || !(angle_deg < 90.0))
    throw DomainError("rotate_toward: angle must lie in (0, 90) degrees");
  const std::array<double, 3> d = axis_direction(cast);
  const Illuminant u = normalize(from.r, from.g, from.b);
  const double du = d[0] * u.r + d[1] * u.g + d[2] * u.b;
  std::array<double, 3> v = {d[0] - du * u.r, d[1] - du * u.g,
                             d[2] - du * u.b};
  const double vn = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  if (vn < kDegenerateTangent) return {u, true};
  const double a = deg_to_rad(angle_deg);
  const double ca = std::cos(a), sa = std::sin(a);
  return {normalize(ca * u.r + sa * v[0] / vn, ca * u.g + sa * v[1] / vn,
                    ca * u.b + sa * v[2] / vn),
          false};
}

// ─── step schedule ───

struct StepSchedule {
  double a_start = 3.0;  // degrees, first iteration
  double a_end = 0.1;    // degrees, last iteration
  int t_max = 20;

  void validate() const {
    if (t_max < 2) throw DomainError("StepSchedule: t_max must be >= 2");
    if (!(a_end > 0.0) || !(a_start >= a_end))
      throw DomainError("StepSchedule: need a_start >= a_end > 0");
  }
};

// Linear decay with exact endpoints: t=1 returns a_start and t=t_max
// returns a_end bit-for-bit (no accumulated interpolation error).  Once
// the refinement phase is active every step is halved.
inline double step_angle(const StepSchedule& s, int t, bool halved) {
  s.validate();
  if (t < 1 || t > s.t_max)
    throw DomainError("step_angle: iteration out of range");
  double a;
  if (t == 1) {
    a = s.a_start;
  } else if (t == s.t_max) {
    a = s.a_end;
  } else {
    a = s.a_start + (s.a_end - s.a_start) *
                        (static_cast<double>(t - 1) /
                         static_cast<double>(s.t_max - 1));
  }
  return halved ? 0.5 * a : a;
}

// ─── aggregation ───

// Component-wise geometric mean, renormalized.  Averaging the tail of a
// trajectory this way damps the label-driven oscillation around the target.
inline Illuminant geo_mean(std::span<const Illuminant> v) {
  if (v.empty()) throw DomainError("geo_mean: empty input");
  double lr = 0.0, lg = 0.0, lb = 0.0;
  for (const Illuminant& e : v) {
    lr += std::log(std::max(e.r, kComponentFloor));
    lg += std::log(std::max(e.g, kComponentFloor));
    lb += std::log(std::max(e.b, kComponentFloor));
  }
  const double n = static_cast<double>(v.size());
  return normalize(std::exp(lr / n), std::exp(lg / n), std::exp(lb / n));
}

inline Illuminant geo_mean3(const Illuminant& a, const Illuminant& b,
                            const Illuminant& c) {
  const std::array<Illuminant, 3> v = {a, b, c};
  return geo_mean(v);
}

// ─── chromaticity projection ───

struct ChromaticityPoint {
  double r = 0.0;
  double g = 0.0;
};

inline ChromaticityPoint chromaticity_point(const Illuminant& v) {
  const double s = v.r + v.g + v.b;
  if (s <= 0.0) throw DomainError("chromaticity_point: nonpositive sum");
  return {v.r / s, v.g / s};
}

// ─── tangent-plane helpers ───
//
// Used wherever a direction must be displaced by a known angle along a
// chosen tangent (synthetic scene bias, fine-tune perturbations).

// Orthonormal pair spanning the tangent plane at `u` (asserted unit-ish).
inline std::array<std::array<double, 3>, 2> orthonormal_tangent_basis(
    const Illuminant& u) {
  const std::array<double, 3> h =
      (std::abs(u.r) < 0.9) ? std::array<double, 3>{1.0, 0.0, 0.0}
                            : std::array<double, 3>{0.0, 1.0, 0.0};
  const double hu = h[0] * u.r + h[1] * u.g + h[2] * u.b;
  std::array<double, 3> e1 = {h[0] - hu * u.r, h[1] - hu * u.g,
                              h[2] - hu * u.b};
  const double n1 = std::sqrt(e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]);
  if (n1 < 1e-12)
    throw DomainError("orthonormal_tangent_basis: degenerate direction");
  e1 = {e1[0] / n1, e1[1] / n1, e1[2] / n1};
  // e2 = u x e1
  const std::array<double, 3> e2 = {u.g * e1[2] - u.b * e1[1],
                                    u.b * e1[0] - u.r * e1[2],
                                    u.r * e1[1] - u.g * e1[0]};
  return {e1, e2};
}

// Rotates `u` by `angle_deg` along the unit tangent `tangent` (must be
// orthogonal to `u`; callers obtain it from orthonormal_tangent_basis).
// If the rotation leaves the positive octant the floor in normalize()
// distorts the angle; callers that need the displacement to be exact use
// displace_within_gamut below instead of drawing tangents themselves.
inline Illuminant rotate_along_tangent(const Illuminant& u,
                                       const std::array<double, 3>& tangent,
                                       double angle_deg) {
  const double a = deg_to_rad(angle_deg);
  const double ca = std::cos(a), sa = std::sin(a);
  return normalize(ca * u.r + sa * tangent[0], ca * u.g + sa * tangent[1],
                   ca * u.b + sa * tangent[2]);
}

// Displaces `u` by exactly `angle_deg` along a uniformly random tangent,
// rejecting tangent draws that would leave the positive octant (where the
// floor would bend the path and change the angle).  Deterministic given
// the rng state; throws if `u` sits so close to the octant edge that no
// draw works.
inline Illuminant displace_within_gamut(const Illuminant& u, double angle_deg,
                                        Rng& rng) {
  if (!(angle_deg > 0.0) || !(angle_deg < 90.0))
    throw DomainError("displace_within_gamut: angle must lie in (0, 90)");
  const auto basis = orthonormal_tangent_basis(u);
  const double a = deg_to_rad(angle_deg);
  const double ca = std::cos(a), sa = std::sin(a);
  for (int tries = 0; tries < 256; ++tries) {
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const std::array<double, 3> t = {
        std::cos(phi) * basis[0][0] + std::sin(phi) * basis[1][0],
        std::cos(phi) * basis[0][1] + std::sin(phi) * basis[1][1],
        std::cos(phi) * basis[0][2] + std::sin(phi) * basis[1][2]};
    const double r = ca * u.r + sa * t[0];
    const double g = ca * u.g + sa * t[1];
    const double b = ca * u.b + sa * t[2];
    if (r > kComponentFloor && g > kComponentFloor && b > kComponentFloor)
      return normalize(r, g, b);
  }
  throw DomainError(
      "displace_within_gamut: direction too close to the gamut edge for "
      "this angle");
}

}  // namespace vlmcc
