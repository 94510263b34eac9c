#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vlmcc/chroma.hpp"
#include "vlmcc/error.hpp"
#include "vlmcc/estimators.hpp"
#include "vlmcc/imaging.hpp"
#include "vlmcc/random.hpp"

namespace vlmcc {

inline Illuminant neutral_illuminant() { return normalize(1.0, 1.0, 1.0); }

// Short side, in pixels, of the render an oracle is shown.
inline constexpr int kOracleViewShortSide = 448;

// One scene fact a vision model could anchor on ("the mug on the desk is
// white").  Free-form strings; the wire layer enforces shape.
struct PriorItem {
  std::string object;
  std::string location;
  std::string expected_color;
  std::string reason;
};

struct ColorPrior {
  std::vector<PriorItem> items;
};

inline void validate_prior(const ColorPrior& prior) {
  if (prior.items.size() < 2 || prior.items.size() > 6)
    throw ContractError("prior must contain between 2 and 6 items");
  for (const PriorItem& it : prior.items) {
    if (it.object.empty() || it.location.empty() ||
        it.expected_color.empty() || it.reason.empty())
      throw ContractError("prior item fields must be non-empty");
  }
}

// ─── residual labeling rule ───

// Components of the brightness-free residual closer together than this
// (relative) are treated as tied.  Rotating an estimate straight toward a
// channel axis leaves the other two residual components in an exact
// mathematical tie, so a bitwise argmax would flip between them on
// floating-point noise; the tolerance plus the fixed red < green < blue
// order makes the label deterministic there.
inline constexpr double kLabelTieRelTol = 1e-9;

// Which channel the estimate still under-corrects: divides gt by est,
// removes overall brightness via the geometric mean, and reports the
// dominant channel.  Scale-invariant in both arguments.
inline CastLabel gt_residual_label(const Illuminant& gt,
                                   const Illuminant& est) {
  const std::array<double, 3> g = {std::max(gt.r, kComponentFloor),
                                   std::max(gt.g, kComponentFloor),
                                   std::max(gt.b, kComponentFloor)};
  const std::array<double, 3> e = {std::max(est.r, kComponentFloor),
                                   std::max(est.g, kComponentFloor),
                                   std::max(est.b, kComponentFloor)};
  std::array<double, 3> r = {g[0] / e[0], g[1] / e[1], g[2] / e[2]};
  const double m = std::cbrt(r[0] * r[1] * r[2]);
  for (double& v : r) v /= m;
  const double mx = std::max({r[0], r[1], r[2]});
  for (int i = 0; i < 3; ++i)
    if (r[static_cast<std::size_t>(i)] >= mx * (1.0 - kLabelTieRelTol))
      return static_cast<CastLabel>(i);
  return CastLabel::red;  // unreachable
}

// ─── oracle interface ───

struct AssessContext {
  int iteration = 1;
  std::optional<Illuminant> current_estimate;
  std::string scene_id;
};

// Anything that can look at a render and name its residual cast.  The
// image is always the display-referred view the solver just produced;
// `priors` may be ignored by implementations that don't use semantics.
class CastOracle {
 public:
  virtual ~CastOracle() = default;

  virtual CastLabel assess(const SrgbImage& image, const ColorPrior& priors,
                           const AssessContext& ctx) = 0;

  virtual bool supports_priors() const { return false; }

  virtual ColorPrior extract_priors(const SrgbImage& /*image*/) {
    throw ContractError("this oracle does not extract priors");
  }
};

// ─── implementations ───

// Upper bound on oracle quality: labels straight from the residual between
// the true illuminant and the solver's current estimate.  Needs the
// estimate via context; the pixels are ignored.
class GroundTruthOracle : public CastOracle {
 public:
  explicit GroundTruthOracle(const Illuminant& gt)
      : gt_(normalize(gt.r, gt.g, gt.b)) {}

  CastLabel assess(const SrgbImage&, const ColorPrior&,
                   const AssessContext& ctx) override {
    if (!ctx.current_estimate)
      throw ContractError(
          "ground-truth oracle requires the current estimate in context");
    return gt_residual_label(gt_, *ctx.current_estimate);
  }

  bool supports_priors() const override { return true; }

  ColorPrior extract_priors(const SrgbImage&) override {
    ColorPrior p;
    p.items.push_back({"gray card", "image center", "neutral gray",
                       "calibration target"});
    p.items.push_back({"wall", "background", "white", "painted surface"});
    return p;
  }

 private:
  Illuminant gt_;
};

// Wraps another oracle and flips its answer to one of the two other
// labels with probability p.  The flip stream is derived from
// (seed, scene_id, iteration), so a scene replays identically no matter
// how many worker threads are running.
class NoisyOracle : public CastOracle {
 public:
  NoisyOracle(std::unique_ptr<CastOracle> inner, double p, std::uint64_t seed)
      : inner_(std::move(inner)), p_(p), seed_(seed) {
    if (!inner_) throw DomainError("NoisyOracle: inner oracle is required");
    if (!(p >= 0.0 && p <= 1.0))
      throw DomainError("NoisyOracle: p must lie in [0, 1]");
  }

  CastLabel assess(const SrgbImage& image, const ColorPrior& priors,
                   const AssessContext& ctx) override {
    const CastLabel base = inner_->assess(image, priors, ctx);
    Rng rng(derive_seed(seed_, fnv1a64(ctx.scene_id),
                        static_cast<std::uint64_t>(ctx.iteration)));
    if (rng.uniform01() >= p_) return base;
    const std::array<CastLabel, 2> others = other_labels(base);
    return others[rng.uniform_index(2)];
  }

  bool supports_priors() const override { return inner_->supports_priors(); }

  ColorPrior extract_priors(const SrgbImage& image) override {
    return inner_->extract_priors(image);
  }

 private:
  static std::array<CastLabel, 2> other_labels(CastLabel c) {
    switch (c) {
      case CastLabel::red: return {CastLabel::green, CastLabel::blue};
      case CastLabel::green: return {CastLabel::red, CastLabel::blue};
      case CastLabel::blue: return {CastLabel::red, CastLabel::green};
    }
    return {CastLabel::green, CastLabel::blue};
  }

  std::unique_ptr<CastOracle> inner_;
  double p_;
  std::uint64_t seed_;
};

// Pixel-pooling stand-in for a vision model: undoes the display gamma,
// takes a Minkowski mean of the render, and labels whichever channel
// dominates the pooled direction.
class StatisticalOracle : public CastOracle {
 public:
  explicit StatisticalOracle(double p_norm) : p_norm_(p_norm) {
    if (!(p_norm >= 1.0))
      throw DomainError("StatisticalOracle: p_norm must be >= 1");
  }

  CastLabel assess(const SrgbImage& image, const ColorPrior&,
                   const AssessContext&) override {
    const LinearImage lin = linearize_srgb(image);
    Illuminant dir;
    try {
      dir = shades_of_gray(lin, p_norm_);
    } catch (const DomainError& e) {
      throw ContractError(std::string("statistical oracle: ") + e.what());
    }
    return gt_residual_label(dir, neutral_illuminant());
  }

 private:
  double p_norm_;
};

// ─── factories ───

inline std::unique_ptr<CastOracle> ground_truth_oracle(const Illuminant& gt) {
  return std::make_unique<GroundTruthOracle>(gt);
}

inline std::unique_ptr<CastOracle> noisy_oracle(
    std::unique_ptr<CastOracle> inner, double p, std::uint64_t seed) {
  return std::make_unique<NoisyOracle>(std::move(inner), p, seed);
}

inline std::unique_ptr<CastOracle> statistical_oracle(double p_norm) {
  return std::make_unique<StatisticalOracle>(p_norm);
}

}  // namespace vlmcc
