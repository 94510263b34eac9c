#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlmcc/chroma.hpp"
#include "vlmcc/error.hpp"
#include "vlmcc/oracle.hpp"
#include "vlmcc/parallel.hpp"
#include "vlmcc/png_io.hpp"
#include "vlmcc/scene_io.hpp"
#include "vlmcc/solver.hpp"
#include "vlmcc/wire.hpp"

namespace vlmcc {

// ─── summary statistics ───

// Quantile with linear interpolation at rank q*(n-1), matching the usual
// reporting convention for angular-error tables.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw DomainError("quantile: empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile: q outside [0,1]");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

// Tukey's trimean: (Q1 + 2*Q2 + Q3) / 4.
inline double trimean(std::vector<double> values) {
  if (values.empty()) throw DomainError("trimean: empty sample");
  std::sort(values.begin(), values.end());
  return (quantile_sorted(values, 0.25) + 2.0 * quantile_sorted(values, 0.5) +
          quantile_sorted(values, 0.75)) /
         4.0;
}

struct ErrorStats {
  double mean_deg = 0.0;
  double median_deg = 0.0;
  double trimean_deg = 0.0;
  double best25_mean_deg = 0.0;   // mean of the k = max(1, n/4) smallest
  double worst25_mean_deg = 0.0;  // mean of the k largest
};

inline ErrorStats summarize(const std::vector<double>& errors) {
  if (errors.empty()) throw DomainError("summarize: empty sample");
  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const std::size_t k = std::max<std::size_t>(1, n / 4);

  ErrorStats s;
  s.mean_deg = std::accumulate(sorted.begin(), sorted.end(), 0.0) /
               static_cast<double>(n);
  s.median_deg = quantile_sorted(sorted, 0.5);
  s.trimean_deg = (quantile_sorted(sorted, 0.25) +
                   2.0 * quantile_sorted(sorted, 0.5) +
                   quantile_sorted(sorted, 0.75)) /
                  4.0;
  s.best25_mean_deg =
      std::accumulate(sorted.begin(), sorted.begin() + static_cast<long>(k),
                      0.0) /
      static_cast<double>(k);
  s.worst25_mean_deg =
      std::accumulate(sorted.end() - static_cast<long>(k), sorted.end(), 0.0) /
      static_cast<double>(k);
  return s;
}

// ─── oracle selection ───

struct OracleSpec {
  enum class Kind { gt, noisy, statistical, remote };
  Kind kind = Kind::gt;
  double flip_p = 0.0;    // noisy
  double p_norm = 6.0;    // statistical
  std::string endpoint;   // remote
};

// Accepts "gt", "noisy:P", "statistical:PNORM", "remote:URL".
inline OracleSpec parse_oracle_spec(const std::string& s) {
  OracleSpec spec;
  if (s == "gt") {
    spec.kind = OracleSpec::Kind::gt;
    return spec;
  }
  const auto colon = s.find(':');
  const std::string head = s.substr(0, colon);
  if (head == "noisy") {
    if (colon == std::string::npos)
      throw DomainError("oracle spec: noisy needs a flip probability");
    spec.kind = OracleSpec::Kind::noisy;
    try {
      spec.flip_p = std::stod(s.substr(colon + 1));
    } catch (const std::exception&) {
      throw DomainError("oracle spec: bad flip probability in " + s);
    }
    if (!(spec.flip_p >= 0.0 && spec.flip_p <= 1.0))
      throw DomainError("oracle spec: flip probability outside [0,1]");
    return spec;
  }
  if (head == "statistical") {
    if (colon == std::string::npos)
      throw DomainError("oracle spec: statistical needs a Minkowski order");
    spec.kind = OracleSpec::Kind::statistical;
    try {
      spec.p_norm = std::stod(s.substr(colon + 1));
    } catch (const std::exception&) {
      throw DomainError("oracle spec: bad Minkowski order in " + s);
    }
    if (!(spec.p_norm >= 1.0))
      throw DomainError("oracle spec: Minkowski order must be >= 1");
    return spec;
  }
  if (head == "remote") {
    if (colon == std::string::npos)
      throw DomainError("oracle spec: remote needs an endpoint URL");
    spec.kind = OracleSpec::Kind::remote;
    spec.endpoint = s.substr(colon + 1);
    parse_endpoint(spec.endpoint);  // validate shape now
    return spec;
  }
  throw DomainError("unknown oracle spec: " + s +
                    " (expected gt | noisy:P | statistical:PNORM | "
                    "remote:URL)");
}

// The noisy oracle wraps the ground-truth oracle; `seed` feeds its flip
// stream and is ignored by the other kinds.
inline std::unique_ptr<CastOracle> make_scene_oracle(const OracleSpec& spec,
                                                     const std::string& scene_id,
                                                     const Illuminant& gt,
                                                     std::uint64_t seed) {
  switch (spec.kind) {
    case OracleSpec::Kind::gt:
      return ground_truth_oracle(gt);
    case OracleSpec::Kind::noisy:
      return noisy_oracle(ground_truth_oracle(gt), spec.flip_p, seed);
    case OracleSpec::Kind::statistical:
      return statistical_oracle(spec.p_norm);
    case OracleSpec::Kind::remote:
      return std::make_unique<RemoteOracle>(spec.endpoint, scene_id);
  }
  throw DomainError("make_scene_oracle: unknown oracle kind");
}

// ─── trajectory plot ───

// Chromaticity-plane view of a run: every assessed estimate as a vertex,
// coarse and refinement phases tinted differently, ground truth as the
// reference marker.  Pure function of its inputs with fixed number
// formatting, so identical runs give byte-identical files.
inline std::string svg_for_trajectory(const Trajectory& traj,
                                      const Illuminant& gt) {
  if (traj.steps.empty())
    throw DomainError("svg_for_trajectory: trajectory has no steps");
  std::vector<ChromaticityPoint> pts;
  pts.reserve(traj.steps.size());
  for (const TrajectoryStep& s : traj.steps)
    pts.push_back(chromaticity_point(s.estimate));
  const ChromaticityPoint gt_pt = chromaticity_point(gt);
  const ChromaticityPoint final_pt = chromaticity_point(traj.final_estimate);

  double rmin = gt_pt.r, rmax = gt_pt.r, gmin = gt_pt.g, gmax = gt_pt.g;
  for (const auto& p : pts) {
    rmin = std::min(rmin, p.r);
    rmax = std::max(rmax, p.r);
    gmin = std::min(gmin, p.g);
    gmax = std::max(gmax, p.g);
  }
  rmin = std::min(rmin, final_pt.r);
  rmax = std::max(rmax, final_pt.r);
  gmin = std::min(gmin, final_pt.g);
  gmax = std::max(gmax, final_pt.g);
  double pad_r = 0.1 * (rmax - rmin), pad_g = 0.1 * (gmax - gmin);
  if (pad_r < 1e-4) pad_r = 1e-4;
  if (pad_g < 1e-4) pad_g = 1e-4;
  rmin -= pad_r;
  rmax += pad_r;
  gmin -= pad_g;
  gmax += pad_g;

  constexpr double kSize = 640.0, kMargin = 60.0;
  const double span = kSize - 2.0 * kMargin;
  const auto X = [&](double r) {
    return kMargin + (r - rmin) / (rmax - rmin) * span;
  };
  const auto Y = [&](double g) {
    return kMargin + (1.0 - (g - gmin) / (gmax - gmin)) * span;
  };
  char buf[256];
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" "
         "height=\"640\" viewBox=\"0 0 640 640\">\n";
  svg += "<rect width=\"640\" height=\"640\" fill=\"#ffffff\"/>\n";
  // axes
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%.6f\" y1=\"%.6f\" x2=\"%.6f\" y2=\"%.6f\" "
                "stroke=\"#333333\" stroke-width=\"1\"/>\n",
                kMargin, kSize - kMargin, kSize - kMargin, kSize - kMargin);
  svg += buf;
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%.6f\" y1=\"%.6f\" x2=\"%.6f\" y2=\"%.6f\" "
                "stroke=\"#333333\" stroke-width=\"1\"/>\n",
                kMargin, kSize - kMargin, kMargin, kMargin);
  svg += buf;
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.6f\" y=\"%.6f\" font-size=\"16\" "
                "fill=\"#333333\">r</text>\n",
                kSize - kMargin + 10.0, kSize - kMargin + 5.0);
  svg += buf;
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.6f\" y=\"%.6f\" font-size=\"16\" "
                "fill=\"#333333\">g</text>\n",
                kMargin - 20.0, kMargin - 10.0);
  svg += buf;
  // path through the per-step estimates
  svg += "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" "
         "points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%s%.6f,%.6f", i ? " " : "", X(pts[i].r),
                  Y(pts[i].g));
    svg += buf;
  }
  svg += "\"/>\n";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const bool refine = traj.steps[i].phase == Phase::refinement;
    std::snprintf(buf, sizeof(buf),
                  "<circle cx=\"%.6f\" cy=\"%.6f\" r=\"3\" fill=\"%s\"/>\n",
                  X(pts[i].r), Y(pts[i].g),
                  refine ? "#ff7f0e" : "#1f77b4");
    svg += buf;
  }
  std::snprintf(buf, sizeof(buf),
                "<circle id=\"final\" cx=\"%.6f\" cy=\"%.6f\" r=\"5\" "
                "fill=\"none\" stroke=\"#2ca02c\" stroke-width=\"2\"/>\n",
                X(final_pt.r), Y(final_pt.g));
  svg += buf;
  std::snprintf(buf, sizeof(buf),
                "<circle id=\"gt\" cx=\"%.6f\" cy=\"%.6f\" r=\"5\" "
                "fill=\"#d62728\"/>\n",
                X(gt_pt.r), Y(gt_pt.g));
  svg += buf;
  svg += "</svg>\n";
  return svg;
}

inline void export_trajectory_svg(const Trajectory& traj, const Illuminant& gt,
                                  const std::filesystem::path& path) {
  write_text_file(path, svg_for_trajectory(traj, gt));
}

// ─── batch evaluation ───

struct SceneResult {
  std::string scene_id;
  double error_deg = 0.0;
  int iterations = 0;
  std::string stop_reason;
};

struct EvalReport {
  int n_scenes = 0;  // scenes that produced a result
  ErrorStats stats;
  std::vector<SceneResult> per_scene;
};

struct RunOptions {
  SolverConfig solver;
  OracleSpec oracle;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::filesystem::path out_dir;  // empty -> no artifacts written
};

struct RunOutcome {
  EvalReport report;
  std::vector<SceneFailure> failures;
};

inline nlohmann::json eval_report_to_json(const EvalReport& report,
                                          const std::vector<SceneFailure>& failures) {
  nlohmann::json j;
  j["n_scenes"] = report.n_scenes;
  j["mean_deg"] = report.stats.mean_deg;
  j["median_deg"] = report.stats.median_deg;
  j["trimean_deg"] = report.stats.trimean_deg;
  j["best25_mean_deg"] = report.stats.best25_mean_deg;
  j["worst25_mean_deg"] = report.stats.worst25_mean_deg;
  nlohmann::json per = nlohmann::json::array();
  for (const SceneResult& r : report.per_scene)
    per.push_back({{"scene_id", r.scene_id},
                   {"error_deg", r.error_deg},
                   {"iterations", r.iterations},
                   {"stop_reason", r.stop_reason}});
  j["per_scene"] = per;
  nlohmann::json fails = nlohmann::json::array();
  for (const SceneFailure& f : failures)
    fails.push_back({{"scene_id", f.scene_id}, {"message", f.message}});
  j["failures"] = fails;
  return j;
}

inline std::string per_scene_csv(const EvalReport& report) {
  std::string csv = "scene_id,error_deg,iterations,stop_reason\n";
  char buf[256];
  for (const SceneResult& r : report.per_scene) {
    std::snprintf(buf, sizeof(buf), "%s,%.9f,%d,%s\n", r.scene_id.c_str(),
                  r.error_deg, r.iterations, r.stop_reason.c_str());
    csv += buf;
  }
  return csv;
}

// Runs the full loop over every scene under dataset_root.  Scenes are
// enumerated sorted and folded in that order whatever the job count, so
// per_scene.csv is byte-identical across thread counts.  Individual scene
// failures are collected, not fatal; only a run with zero successes
// throws.
inline RunOutcome run_protocol(const std::filesystem::path& dataset_root,
                               const RunOptions& opts) {
  opts.solver.validate();
  const std::vector<std::filesystem::path> dirs = list_scene_dirs(dataset_root);
  if (dirs.empty())
    throw DomainError("no scenes found under " + dataset_root.string());

  const bool artifacts = !opts.out_dir.empty();
  if (artifacts) {
    std::error_code ec;
    std::filesystem::create_directories(opts.out_dir / "trajectories", ec);
    if (ec)
      throw IoError("cannot create output directory: " +
                    (opts.out_dir / "trajectories").string());
  }

  std::vector<std::optional<SceneResult>> results(dirs.size());
  std::vector<std::optional<SceneFailure>> failures(dirs.size());

  parallel_for(dirs.size(), opts.jobs, [&](std::size_t i) {
    const std::string scene_id = dirs[i].filename().string();
    try {
      auto [img, meta] = load_scene(dirs[i]);
      const auto oracle =
          make_scene_oracle(opts.oracle, meta.scene_id, meta.illuminant_gt,
                            opts.seed);
      const Trajectory traj = solve(img, meta, *oracle, opts.solver);
      SceneResult r;
      r.scene_id = meta.scene_id;
      r.error_deg = angular_error_deg(traj.final_estimate, meta.illuminant_gt);
      r.iterations = static_cast<int>(traj.steps.size());
      r.stop_reason = std::string(to_string(traj.stop_reason));
      if (artifacts) {
        const auto base = opts.out_dir / "trajectories" / meta.scene_id;
        write_text_file(base.string() + ".json",
                        trajectory_to_json(traj, &opts.solver).dump(2) + "\n");
        export_trajectory_svg(traj, meta.illuminant_gt,
                              base.string() + ".svg");
      }
      results[i] = std::move(r);
    } catch (const std::exception& e) {
      failures[i] = SceneFailure{scene_id, e.what()};
    }
  });

  RunOutcome outcome;
  std::vector<double> errors;
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    if (results[i]) {
      outcome.report.per_scene.push_back(*results[i]);
      errors.push_back(results[i]->error_deg);
    } else if (failures[i]) {
      outcome.failures.push_back(*failures[i]);
    }
  }
  if (errors.empty())
    throw Error("every scene failed; first failure: " +
                (outcome.failures.empty() ? std::string("unknown")
                                          : outcome.failures.front().scene_id +
                                                ": " +
                                                outcome.failures.front().message));
  outcome.report.n_scenes = static_cast<int>(errors.size());
  outcome.report.stats = summarize(errors);

  if (artifacts) {
    write_text_file(opts.out_dir / "per_scene.csv",
                    per_scene_csv(outcome.report));
    write_text_file(
        opts.out_dir / "summary.json",
        eval_report_to_json(outcome.report, outcome.failures).dump(2) + "\n");
  }
  return outcome;
}

}  // namespace vlmcc
