#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlmcc/chroma.hpp"
#include "vlmcc/error.hpp"
#include "vlmcc/estimators.hpp"
#include "vlmcc/imaging.hpp"
#include "vlmcc/oracle.hpp"
#include "vlmcc/scene_io.hpp"

namespace vlmcc {

// ─── configuration ───

struct InitMethod {
  enum class Kind { gray_world, shades_of_gray, gray_edge, neutral, fixed };
  Kind kind = Kind::gray_world;
  double p = 6.0;      // Minkowski order (shades_of_gray, gray_edge)
  int order = 1;       // derivative order (gray_edge)
  double sigma = 2.0;  // pre-blur in pixels (gray_edge)
  Illuminant fixed_value;  // kind == fixed only
};

inline InitMethod init_gray_world() { return {}; }
inline InitMethod init_shades_of_gray(double p) {
  if (!(p >= 1.0))
    throw DomainError("shades_of_gray init: p must be >= 1");
  InitMethod m;
  m.kind = InitMethod::Kind::shades_of_gray;
  m.p = p;
  return m;
}
inline InitMethod init_gray_edge(int order, double p, double sigma) {
  if (order != 1 && order != 2)
    throw DomainError("gray_edge init: order must be 1 or 2");
  if (!(p >= 1.0))
    throw DomainError("gray_edge init: p must be >= 1");
  if (!(sigma >= 0.0))
    throw DomainError("gray_edge init: sigma must be >= 0");
  InitMethod m;
  m.kind = InitMethod::Kind::gray_edge;
  m.order = order;
  m.p = p;
  m.sigma = sigma;
  return m;
}
inline InitMethod init_neutral() {
  InitMethod m;
  m.kind = InitMethod::Kind::neutral;
  return m;
}
inline InitMethod init_fixed(const Illuminant& value) {
  InitMethod m;
  m.kind = InitMethod::Kind::fixed;
  m.fixed_value = value;
  return m;
}

struct SolverConfig {
  StepSchedule schedule;           // 3 deg -> 0.1 deg over 20 iterations
  InitMethod init;
  int reflection_interval = 6;     // re-extract priors every N iterations;
                                   // 0 keeps only the initial extraction
  bool gamma_enabled = true;

  void validate() const {
    schedule.validate();
    if (reflection_interval < 0)
      throw DomainError("SolverConfig: reflection_interval must be >= 0");
  }
};

// ─── trajectory record ───

enum class Phase { coarse, refinement };
enum class StopReason { triangle, iteration_limit };

inline std::string_view to_string(Phase p) {
  return p == Phase::coarse ? "coarse" : "refinement";
}
inline std::string_view to_string(StopReason r) {
  return r == StopReason::triangle ? "triangle" : "iteration_limit";
}

struct TrajectoryStep {
  int t = 0;            // 1-based iteration index
  Illuminant estimate;  // the estimate that was assessed at this step
  CastLabel label;      // oracle's verdict on that estimate's render
  double step_deg = 0.0;  // rotation applied afterwards (0 = none)
  Phase phase = Phase::coarse;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  Illuminant final_estimate;
  StopReason stop_reason = StopReason::iteration_limit;
};

// Oracle failure mid-run; carries everything recorded up to that point.
class SolveError : public Error {
 public:
  SolveError(const std::string& what_arg, Trajectory partial)
      : Error(what_arg), partial_(std::move(partial)) {}
  const Trajectory& partial_trajectory() const { return partial_; }

 private:
  Trajectory partial_;
};

// ─── state machine predicates ───

// True exactly once: at the step where the cumulative label set first
// covers all three channels.  From that step on the estimate is circling
// the target rather than approaching it, so the schedule is halved.
inline bool detect_phase_transition(std::span<const CastLabel> labels) {
  if (labels.size() < 3) return false;
  bool seen[3] = {false, false, false};
  for (std::size_t i = 0; i + 1 < labels.size(); ++i)
    seen[static_cast<int>(labels[i])] = true;
  if (seen[0] && seen[1] && seen[2]) return false;  // fired earlier
  seen[static_cast<int>(labels.back())] = true;
  return seen[0] && seen[1] && seen[2];
}

// True when the last three labels of the refinement phase are pairwise
// distinct: the estimate is bouncing around the target in a triangle and
// further steps only re-trace it.
inline bool detect_triangle_stop(std::span<const CastLabel> refinement_labels) {
  if (refinement_labels.size() < 3) return false;
  const CastLabel a = refinement_labels[refinement_labels.size() - 3];
  const CastLabel b = refinement_labels[refinement_labels.size() - 2];
  const CastLabel c = refinement_labels[refinement_labels.size() - 1];
  return a != b && b != c && a != c;
}

// ─── initialization ───

inline Illuminant initialize(const LinearImage& img, const InitMethod& init) {
  switch (init.kind) {
    case InitMethod::Kind::gray_world:
      return gray_world(img);
    case InitMethod::Kind::shades_of_gray:
      return shades_of_gray(img, init.p);
    case InitMethod::Kind::gray_edge:
      return gray_edge(img, init.order, init.p, init.sigma);
    case InitMethod::Kind::neutral:
      return neutral_illuminant();
    case InitMethod::Kind::fixed:
      return normalize(init.fixed_value.r, init.fixed_value.g,
                       init.fixed_value.b);
  }
  throw DomainError("initialize: unknown init method");
}

// ─── main loop ───

// Iteratively white-balances with the current estimate, renders the
// result for the oracle, and rotates the estimate toward the axis of the
// reported leftover cast.  Steps shrink linearly, halve once the labels
// start cycling, and the loop stops early when the last three refinement
// labels form a triangle.  The returned estimate is the geometric mean of
// the last (up to) three assessed estimates, which cancels most of the
// residual orbit around the target.
inline Trajectory solve(const LinearImage& img, const SceneMeta& meta,
                        CastOracle& oracle, const SolverConfig& cfg) {
  cfg.validate();
  Trajectory traj;
  Illuminant est = initialize(img, cfg.init);
  ColorPrior priors;
  std::vector<CastLabel> labels;
  std::vector<CastLabel> refine_labels;
  bool refinement = false;

  for (int t = 1; t <= cfg.schedule.t_max; ++t) {
    const LinearImage balanced = white_balance(img, est);
    const SrgbImage render =
        to_pseudo_srgb(balanced, meta.ccm_cam_to_xyz, cfg.gamma_enabled);
    const SrgbImage view = resize_shorter_side(render, kOracleViewShortSide);

    if (oracle.supports_priors() &&
        (t == 1 || (cfg.reflection_interval > 0 &&
                    (t - 1) % cfg.reflection_interval == 0))) {
      try {
        priors = oracle.extract_priors(view);
      } catch (const Error& e) {
        throw SolveError(std::string("prior extraction failed at iteration ") +
                             std::to_string(t) + ": " + e.what(),
                         std::move(traj));
      }
    }

    AssessContext ctx;
    ctx.iteration = t;
    ctx.current_estimate = est;
    ctx.scene_id = meta.scene_id;
    CastLabel label;
    try {
      label = oracle.assess(view, priors, ctx);
    } catch (const Error& e) {
      throw SolveError(std::string("oracle failed at iteration ") +
                           std::to_string(t) + ": " + e.what(),
                       std::move(traj));
    }

    labels.push_back(label);
    if (!refinement && detect_phase_transition(labels)) refinement = true;
    if (refinement) refine_labels.push_back(label);

    traj.steps.push_back({t, est, label, 0.0,
                          refinement ? Phase::refinement : Phase::coarse});

    if (refinement && detect_triangle_stop(refine_labels)) {
      traj.stop_reason = StopReason::triangle;
      break;
    }
    if (t == cfg.schedule.t_max) {
      traj.stop_reason = StopReason::iteration_limit;
      break;
    }

    const double angle = step_angle(cfg.schedule, t, refinement);
    const RotationResult rot = rotate_toward(est, label, angle);
    if (!rot.degenerate) traj.steps.back().step_deg = angle;
    est = rot.estimate;
  }

  const std::size_t n = traj.steps.size();
  const std::size_t k = std::min<std::size_t>(3, n);
  std::vector<Illuminant> tail;
  tail.reserve(k);
  for (std::size_t i = n - k; i < n; ++i)
    tail.push_back(traj.steps[i].estimate);
  traj.final_estimate = geo_mean(tail);
  return traj;
}

// ─── replay verification ───

struct ReplayReport {
  bool ok = true;
  int first_divergence = 0;  // iteration t of the first mismatch, 0 = clean
  double max_component_delta = 0.0;
  std::string detail;
};

// Recomputes the deterministic parts of a recorded run (initialization
// and every rotation implied by the recorded labels) and compares against
// the recorded estimates.  A tampered or stale record shows up as a
// divergence at the first affected step.
inline ReplayReport replay(const Trajectory& traj, const LinearImage& img,
                           const SolverConfig& cfg) {
  cfg.validate();
  constexpr double kTol = 1e-12;
  ReplayReport rep;
  if (traj.steps.empty()) {
    rep.ok = false;
    rep.detail = "trajectory has no steps";
    return rep;
  }

  const auto check = [&rep](const Illuminant& got, const Illuminant& want,
                            int t, const char* what) {
    const double d =
        std::max({std::abs(got.r - want.r), std::abs(got.g - want.g),
                  std::abs(got.b - want.b)});
    rep.max_component_delta = std::max(rep.max_component_delta, d);
    if (d > kTol && rep.ok) {
      rep.ok = false;
      rep.first_divergence = t;
      rep.detail = std::string(what) + " diverged at iteration " +
                   std::to_string(t) + " by " + std::to_string(d);
    }
  };

  Illuminant est = initialize(img, cfg.init);
  check(est, traj.steps[0].estimate, traj.steps[0].t, "initial estimate");

  std::vector<CastLabel> labels;
  std::vector<CastLabel> refine_labels;
  bool refinement = false;
  for (std::size_t i = 0; i < traj.steps.size(); ++i) {
    labels.push_back(traj.steps[i].label);
    if (!refinement && detect_phase_transition(labels)) refinement = true;
    if (refinement) refine_labels.push_back(traj.steps[i].label);
    if (i + 1 == traj.steps.size()) break;
    const double angle = step_angle(cfg.schedule, traj.steps[i].t, refinement);
    est = rotate_toward(est, traj.steps[i].label, angle).estimate;
    check(est, traj.steps[i + 1].estimate, traj.steps[i + 1].t, "estimate");
  }

  const std::size_t n = traj.steps.size();
  const std::size_t k = std::min<std::size_t>(3, n);
  std::vector<Illuminant> tail;
  for (std::size_t i = n - k; i < n; ++i)
    tail.push_back(traj.steps[i].estimate);
  check(geo_mean(tail), traj.final_estimate, traj.steps.back().t,
        "final estimate");
  return rep;
}

// ─── JSON serialization ───

inline nlohmann::json trajectory_to_json(const Trajectory& traj,
                                         const SolverConfig* cfg = nullptr) {
  nlohmann::json j;
  j["steps"] = nlohmann::json::array();
  for (const TrajectoryStep& s : traj.steps) {
    j["steps"].push_back({{"t", s.t},
                          {"estimate", {s.estimate.r, s.estimate.g,
                                        s.estimate.b}},
                          {"label", std::string(to_string(s.label))},
                          {"step_deg", s.step_deg},
                          {"phase", std::string(to_string(s.phase))}});
  }
  j["final_estimate"] = {traj.final_estimate.r, traj.final_estimate.g,
                         traj.final_estimate.b};
  j["stop_reason"] = std::string(to_string(traj.stop_reason));
  if (cfg) {
    j["config"] = {{"t_max", cfg->schedule.t_max},
                   {"a_start", cfg->schedule.a_start},
                   {"a_end", cfg->schedule.a_end},
                   {"reflection_interval", cfg->reflection_interval},
                   {"gamma", cfg->gamma_enabled}};
  }
  return j;
}

inline Trajectory trajectory_from_json(const nlohmann::json& j) {
  const auto fail = [](const std::string& msg) -> Trajectory {
    throw LoadError("trajectory JSON: " + msg);
  };
  if (!j.is_object() || !j.contains("steps") || !j["steps"].is_array())
    return fail("missing steps array");
  Trajectory traj;
  for (const auto& s : j["steps"]) {
    if (!s.is_object() || !s.contains("t") || !s.contains("estimate") ||
        !s.contains("label") || !s.contains("step_deg") ||
        !s.contains("phase"))
      return fail("step missing fields");
    TrajectoryStep step;
    step.t = s["t"].get<int>();
    const auto& e = s["estimate"];
    if (!e.is_array() || e.size() != 3) return fail("estimate must be [r,g,b]");
    step.estimate = {e[0].get<double>(), e[1].get<double>(),
                     e[2].get<double>()};
    const auto label = parse_cast_label(s["label"].get<std::string>());
    if (!label) return fail("unknown label");
    step.label = *label;
    step.step_deg = s["step_deg"].get<double>();
    const std::string phase = s["phase"].get<std::string>();
    if (phase != "coarse" && phase != "refinement")
      return fail("unknown phase");
    step.phase = phase == "coarse" ? Phase::coarse : Phase::refinement;
    traj.steps.push_back(step);
  }
  if (!j.contains("final_estimate") || !j["final_estimate"].is_array() ||
      j["final_estimate"].size() != 3)
    return fail("missing final_estimate");
  traj.final_estimate = {j["final_estimate"][0].get<double>(),
                         j["final_estimate"][1].get<double>(),
                         j["final_estimate"][2].get<double>()};
  if (!j.contains("stop_reason") || !j["stop_reason"].is_string())
    return fail("missing stop_reason");
  const std::string reason = j["stop_reason"].get<std::string>();
  if (reason == "triangle")
    traj.stop_reason = StopReason::triangle;
  else if (reason == "iteration_limit")
    traj.stop_reason = StopReason::iteration_limit;
  else
    return fail("unknown stop_reason");
  return traj;
}

}  // namespace vlmcc
