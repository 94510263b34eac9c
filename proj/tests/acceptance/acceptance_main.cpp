// Product-level checks, one verdict line each, exit status = number of
// failures.  Everything runs offline against the library plus the
// installed binary; the heavier batches fan out over worker threads.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <sys/wait.h>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "vlmcc/augment.hpp"
#include "vlmcc/chroma.hpp"
#include "vlmcc/eval.hpp"
#include "vlmcc/imaging.hpp"
#include "vlmcc/mock_server.hpp"
#include "vlmcc/oracle.hpp"
#include "vlmcc/parallel.hpp"
#include "vlmcc/random.hpp"
#include "vlmcc/scene_io.hpp"
#include "vlmcc/solver.hpp"
#include "vlmcc/synthetic.hpp"
#include "vlmcc/wire.hpp"

namespace {

using namespace vlmcc;
namespace fs = std::filesystem;

constexpr int kJobs = 8;

struct TempTree {
  fs::path path;
  TempTree() {
    std::random_device rd;
    path = fs::temp_directory_path() /
           ("vlmcc_accept_" + std::to_string(rd()) + "_" +
            std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempTree() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in.good()) throw IoError("cannot read " + p.string());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, format);
  std::vsnprintf(buf, sizeof(buf), format, ap);
  va_end(ap);
  return buf;
}

Illuminant random_interior_direction(Rng& rng, double lo) {
  const auto cube = [&] {
    const double x = rng.uniform(lo, 1.0);
    return x * x * x;
  };
  const double r = cube(), g = cube(), b = cube();
  return normalize(r, g, b);
}

ColorPrior two_priors() {
  ColorPrior p;
  p.items.push_back({"gray card", "image center", "neutral gray",
                     "calibration target"});
  p.items.push_back({"wall", "background", "white", "painted surface"});
  return p;
}

// Plays a fixed label sequence, repeating the last entry forever.
struct ScriptedOracle final : CastOracle {
  std::vector<CastLabel> script;
  explicit ScriptedOracle(std::vector<CastLabel> s) : script(std::move(s)) {}
  CastLabel assess(const SrgbImage&, const ColorPrior&,
                   const AssessContext& ctx) override {
    const std::size_t i =
        std::min(static_cast<std::size_t>(ctx.iteration - 1),
                 script.size() - 1);
    return script[i];
  }
};

// Tiny one-route HTTP stand-in for a misbehaving endpoint.
struct InlineServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  explicit InlineServer(httplib::Server::Handler handler) {
    server.Post(".*", std::move(handler));
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    const auto deadline =
        std::chrono::steady_clock::now() + std::chrono::seconds(5);
    while (!server.is_running() &&
           std::chrono::steady_clock::now() < deadline)
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  ~InlineServer() {
    server.stop();
    thread.join();
  }
  std::string url() const {
    return "http://127.0.0.1:" + std::to_string(port);
  }
};

// ─── individual checks ───

bool check_rotation_exactness(std::string& detail) {
  Rng rng(11);
  double worst_angle = 0.0, worst_norm = 0.0;
  for (int i = 0; i < 10000; ++i) {
    // min component bounded away from the axes so a <= 3 degree move
    // never runs off the positive gamut
    const Illuminant u = random_interior_direction(rng, 0.35);
    const CastLabel label = static_cast<CastLabel>(i % 3);
    const double angle = 3.0 * (1.0 - rng.uniform01());
    const RotationResult r = rotate_toward(u, label, angle);
    if (r.degenerate) {
      detail = "unexpected degenerate rotation";
      return false;
    }
    worst_angle = std::max(
        worst_angle, std::fabs(angular_error_deg(u, r.estimate) - angle));
    const double norm =
        std::sqrt(r.estimate.r * r.estimate.r + r.estimate.g * r.estimate.g +
                  r.estimate.b * r.estimate.b);
    worst_norm = std::max(worst_norm, std::fabs(norm - 1.0));
  }
  detail = fmt("10000 draws: max |achieved - requested| = %.3g deg, "
               "max norm drift = %.3g",
               worst_angle, worst_norm);
  return worst_angle < 1e-6 && worst_norm < 1e-9;
}

bool check_schedule_endpoints(std::string& detail) {
  const StepSchedule s;  // 3.0 -> 0.1 over 20
  const double first = step_angle(s, 1, false);
  const double last = step_angle(s, s.t_max, false);
  detail = fmt("first step %.17g deg, last step %.17g deg", first, last);
  return first == 3.0 && last == 0.1;
}

bool check_synthetic_convergence(std::string& detail) {
  constexpr int kScenes = 500;
  std::vector<double> initial(kScenes), final_err(kScenes);
  parallel_for(kScenes, kJobs, [&](std::size_t i) {
    auto [img, meta] = generate_synthetic_scene(90210, static_cast<int>(i));
    GroundTruthOracle oracle(meta.illuminant_gt);
    const Trajectory traj = solve(img, meta, oracle, SolverConfig{});
    initial[i] =
        angular_error_deg(traj.steps.front().estimate, meta.illuminant_gt);
    final_err[i] =
        angular_error_deg(traj.final_estimate, meta.illuminant_gt);
  });

  int in_range = 0, improved = 0;
  for (int i = 0; i < kScenes; ++i) {
    if (initial[i] >= 5.0 && initial[i] <= 15.0) ++in_range;
    if (final_err[i] <= initial[i]) ++improved;
  }
  const ErrorStats stats = summarize(final_err);
  detail = fmt("%d scenes: initial in [5,15] deg for %d, mean %.4f deg, "
               "worst-25%% %.4f deg, final <= initial for %d",
               kScenes, in_range, stats.mean_deg, stats.worst25_mean_deg,
               improved);
  return in_range == kScenes && stats.mean_deg <= 1.0 &&
         stats.worst25_mean_deg <= 2.0 && improved == kScenes;
}

bool check_stop_state_machine(std::string& detail) {
  const CastLabel R = CastLabel::red, G = CastLabel::green,
                  B = CastLabel::blue;

  // window predicates first
  if (!detect_phase_transition(std::vector<CastLabel>{R, R, G, B}) ||
      detect_phase_transition(std::vector<CastLabel>{R, R, G}) ||
      !detect_triangle_stop(std::vector<CastLabel>{G, B, R}) ||
      detect_triangle_stop(std::vector<CastLabel>{G, G, B})) {
    detail = "window predicates disagree with the documented transitions";
    return false;
  }

  const LinearImage img = LinearImage::filled(24, 16, 0.32, 0.4, 0.36);
  SceneMeta meta;
  meta.camera_id = "probe-cam";
  meta.ccm_cam_to_xyz = ColorMatrix::identity();
  meta.illuminant_gt = normalize(0.8, 1.0, 0.9);
  meta.scene_id = "probe";
  const SolverConfig cfg;

  // third distinct label at step 4 flips the phase and halves the step
  {
    ScriptedOracle oracle({R, R, G, B});
    const Trajectory traj = solve(img, meta, oracle, cfg);
    for (int t = 1; t <= 3; ++t)
      if (traj.steps[static_cast<std::size_t>(t - 1)].phase != Phase::coarse) {
        detail = fmt("step %d left the coarse phase too early", t);
        return false;
      }
    if (traj.steps[3].phase != Phase::refinement) {
      detail = "third distinct label at step 4 did not flip the phase";
      return false;
    }
    if (traj.steps[2].step_deg != step_angle(cfg.schedule, 3, false) ||
        traj.steps[3].step_deg != step_angle(cfg.schedule, 4, true) ||
        traj.steps[4].step_deg != step_angle(cfg.schedule, 5, true)) {
      detail = "halving did not start exactly at the transition step";
      return false;
    }
  }

  // refinement window green,green,blue,red stops at its fourth step
  {
    ScriptedOracle oracle({R, B, G, G, B, R});
    const Trajectory traj = solve(img, meta, oracle, cfg);
    if (traj.stop_reason != StopReason::triangle || traj.steps.size() != 6) {
      detail = fmt("expected a triangle stop after 6 steps, got %zu (%s)",
                   traj.steps.size(),
                   std::string(to_string(traj.stop_reason)).c_str());
      return false;
    }
    const std::array<CastLabel, 4> window = {G, G, B, R};
    for (int k = 0; k < 4; ++k) {
      const TrajectoryStep& s = traj.steps[static_cast<std::size_t>(k + 2)];
      if (s.phase != Phase::refinement ||
          s.label != window[static_cast<std::size_t>(k)]) {
        detail = "refinement window did not replay as scripted";
        return false;
      }
    }
    if (traj.steps[5].step_deg != 0.0) {
      detail = "stop step still applied a rotation";
      return false;
    }
  }

  detail = "transition at step 4, halved from the transition step, "
           "triangle stop on the 4th refinement label";
  return true;
}

bool check_summary_stats(std::string& detail) {
  const ErrorStats four = summarize({1.0, 2.0, 3.0, 4.0});
  if (std::fabs(four.trimean_deg - 2.5) > 1e-12 ||
      std::fabs(four.best25_mean_deg - 1.0) > 1e-12 ||
      std::fabs(four.worst25_mean_deg - 4.0) > 1e-12) {
    detail = fmt("worked example off: trimean %.12f best25 %.12f "
                 "worst25 %.12f",
                 four.trimean_deg, four.best25_mean_deg,
                 four.worst25_mean_deg);
    return false;
  }

  Rng rng(41);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(50);
    std::vector<double> sample(n);
    for (double& x : sample) x = rng.uniform(0.0, 30.0);
    const ErrorStats got = summarize(sample);

    std::vector<double> sorted = sample;
    std::sort(sorted.begin(), sorted.end());
    double mean = 0.0;
    for (double x : sorted) mean += x;
    mean /= static_cast<double>(n);
    const auto rank = [&](double q) {
      const double pos = q * static_cast<double>(n - 1);
      const std::size_t lo = static_cast<std::size_t>(pos);
      if (lo + 1 >= n) return sorted.back();
      return sorted[lo] + (pos - lo) * (sorted[lo + 1] - sorted[lo]);
    };
    const std::size_t k = std::max<std::size_t>(1, n / 4);
    double best = 0.0, worst_q = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      best += sorted[i];
      worst_q += sorted[n - 1 - i];
    }
    best /= static_cast<double>(k);
    worst_q /= static_cast<double>(k);

    worst = std::max({worst, std::fabs(got.mean_deg - mean),
                      std::fabs(got.median_deg - rank(0.5)),
                      std::fabs(got.trimean_deg -
                                (rank(0.25) + 2 * rank(0.5) + rank(0.75)) /
                                    4.0),
                      std::fabs(got.best25_mean_deg - best),
                      std::fabs(got.worst25_mean_deg - worst_q)});
  }
  detail = fmt("100 random arrays: max |library - reference| = %.3g", worst);
  return worst < 1e-12;
}

bool check_balance_round_trip(std::string& detail) {
  Rng rng(77);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    LinearImage img;
    img.width = 16;
    img.height = 12;
    img.data.resize(static_cast<std::size_t>(img.width) * img.height * 3);
    for (double& v : img.data) v = rng.uniform(0.05, 1.0);
    const Illuminant light = random_interior_direction(rng, 0.2);

    const LinearImage rt = white_balance(apply_illuminant(img, light), light);
    const double scalar = rt.data[0] / img.data[0];
    for (std::size_t i = 0; i < img.data.size(); ++i)
      worst = std::max(
          worst, std::fabs(rt.data[i] / img.data[i] - scalar) / scalar);
  }
  detail = fmt("100 image/illuminant pairs: max relative deviation from a "
               "single global scalar = %.3g",
               worst);
  return worst < 1e-6;
}

bool check_wire_label_fidelity(std::string& detail) {
  constexpr int kScenes = 50;
  std::vector<std::pair<LinearImage, SceneMeta>> scenes;
  MockServer server;
  for (int i = 0; i < kScenes; ++i) {
    scenes.push_back(generate_synthetic_scene(31337, i));
    server.add_scene(scenes.back().second.scene_id,
                     scenes.back().second.illuminant_gt);
  }
  if (!server.start("127.0.0.1", 0)) {
    detail = "could not bind the in-process endpoint";
    return false;
  }

  std::atomic<int> mismatches{0}, errors{0};
  parallel_for(kScenes, kJobs, [&](std::size_t i) {
    try {
      const auto& [img, meta] = scenes[i];
      GroundTruthOracle direct(meta.illuminant_gt);
      const Trajectory want = solve(img, meta, direct, SolverConfig{});
      RemoteOracle remote(server.endpoint(), meta.scene_id);
      const Trajectory got = solve(img, meta, remote, SolverConfig{});

      bool same = want.steps.size() == got.steps.size() &&
                  want.final_estimate.r == got.final_estimate.r &&
                  want.final_estimate.g == got.final_estimate.g &&
                  want.final_estimate.b == got.final_estimate.b;
      for (std::size_t k = 0; same && k < want.steps.size(); ++k)
        same = want.steps[k].label == got.steps[k].label;
      if (!same) mismatches.fetch_add(1);
    } catch (const std::exception&) {
      errors.fetch_add(1);
    }
  });
  server.stop();
  if (mismatches.load() != 0 || errors.load() != 0) {
    detail = fmt("%d label-stream mismatches, %d transport failures over "
                 "%d trajectories",
                 mismatches.load(), errors.load(), kScenes);
    return false;
  }

  // garbage out of the endpoint must surface as typed errors
  bool vocab_ok = false, schema_low_ok = false, schema_high_ok = false;
  {
    InlineServer bad([](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"cast":"purple"})", "application/json");
    });
    const SrgbImage view = to_pseudo_srgb(
        LinearImage::filled(16, 16, 0.3, 0.35, 0.25), ColorMatrix::identity());
    const CastRequest req = make_cast_request(view, two_priors(), "default", 1);
    try {
      remote_predict_cast(bad.url(), req, "probe", neutral_illuminant());
    } catch (const ProtocolError& e) {
      vocab_ok = e.code() == ProtocolError::Code::vocabulary;
    }
  }
  const auto item = [](int i) {
    return nlohmann::json{{"object", "thing " + std::to_string(i)},
                          {"location", "somewhere"},
                          {"expected_color", "white"},
                          {"reason", "because"}};
  };
  try {
    prior_items_from_json(nlohmann::json::array({item(0)}));
  } catch (const ProtocolError& e) {
    schema_low_ok = e.code() == ProtocolError::Code::schema;
  }
  nlohmann::json seven = nlohmann::json::array();
  for (int i = 0; i < 7; ++i) seven.push_back(item(i));
  try {
    prior_items_from_json(seven);
  } catch (const ProtocolError& e) {
    schema_high_ok = e.code() == ProtocolError::Code::schema;
  }

  detail = fmt("%d/%d trajectories agree label for label; unknown cast "
               "word and 1/7-item prior lists raise typed errors",
               kScenes, kScenes);
  return vocab_ok && schema_low_ok && schema_high_ok;
}

bool check_augmentation_soundness(std::string& detail) {
  TempTree tmp;
  const fs::path root = tmp.path / "scenes";
  make_synthetic_dataset(root, 50, 555);
  const ExportResult res =
      export_finetune_dataset(root, tmp.path / "export", 20, 17.5, 999,
                              kJobs);
  if (res.n_samples != 1000 || !res.failures.empty()) {
    detail = fmt("expected 1000 clean samples, got %d with %zu failures",
                 res.n_samples, res.failures.size());
    return false;
  }

  std::map<std::string, Illuminant> gts;
  for (const auto& dir : list_scene_dirs(root))
    gts[dir.filename().string()] =
        load_scene_meta(dir / "meta.json").illuminant_gt;

  int in_range = 0, agree = 0, total = 0;
  std::istringstream manifest(slurp(res.manifest_path));
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    ++total;
    const nlohmann::json j = nlohmann::json::parse(line);
    const double deg = j.at("perturbation_deg").get<double>();
    if (deg > 0.0 && deg <= 17.5) ++in_range;
    const auto& pi = j.at("perturbed_illuminant");
    const Illuminant perturbed =
        normalize(pi[0].get<double>(), pi[1].get<double>(),
                  pi[2].get<double>());
    const Illuminant gt = gts.at(j.at("source_scene").get<std::string>());
    if (std::string(to_string(gt_residual_label(gt, perturbed))) ==
        j.at("label").get<std::string>())
      ++agree;
  }
  detail = fmt("%d samples: %d angles in (0, 17.5] deg, %d labels "
               "recomputed identically from the manifest",
               total, in_range, agree);
  return total == 1000 && in_range == 1000 && agree == 1000;
}

bool check_noise_monotonicity(std::string& detail) {
  const auto means_for = [](std::uint64_t base) {
    const std::array<double, 3> ps = {0.0, 0.2, 0.4};
    std::array<double, 3> means{};
    for (std::size_t pi = 0; pi < ps.size(); ++pi) {
      std::vector<double> errs(300);
      parallel_for(errs.size(), kJobs, [&](std::size_t i) {
        auto [img, meta] = generate_synthetic_scene(base, static_cast<int>(i));
        NoisyOracle oracle(
            std::make_unique<GroundTruthOracle>(meta.illuminant_gt), ps[pi],
            derive_seed(base, static_cast<std::uint64_t>(i),
                        static_cast<std::uint64_t>(pi)));
        errs[i] = angular_error_deg(
            solve(img, meta, oracle, SolverConfig{}).final_estimate,
            meta.illuminant_gt);
      });
      double m = 0.0;
      for (double e : errs) m += e;
      means[pi] = m / static_cast<double>(errs.size());
    }
    return means;
  };

  std::array<double, 3> m = means_for(2024);
  bool ok = m[0] <= m[1] && m[1] <= m[2];
  bool reran = false;
  if (!ok) {  // statistical criterion; one fresh draw allowed
    reran = true;
    m = means_for(2025);
    ok = m[0] <= m[1] && m[1] <= m[2];
  }
  detail = fmt("300 paired scenes per level: mean error %.4f / %.4f / %.4f "
               "deg at flip rates 0 / 0.2 / 0.4%s",
               m[0], m[1], m[2], reran ? " (after one redraw)" : "");
  return ok;
}

bool check_parallel_determinism(std::string& detail) {
  TempTree tmp;
  const fs::path root = tmp.path / "scenes";
  make_synthetic_dataset(root, 40, 777);
  const fs::path o1 = tmp.path / "jobs1";
  const fs::path o8 = tmp.path / "jobs8";

  const auto run = [&](const std::string& args) {
    const std::string cmd =
        std::string(VLMCC_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  const std::string common = "evaluate " + root.string() + " --oracle gt ";
  if (run(common + "--jobs 1 --out " + o1.string()) != 0 ||
      run(common + "--jobs 8 --out " + o8.string()) != 0) {
    detail = "evaluation run failed";
    return false;
  }
  if (slurp(o1 / "per_scene.csv") != slurp(o8 / "per_scene.csv") ||
      slurp(o1 / "summary.json") != slurp(o8 / "summary.json")) {
    detail = "worker count changed the output bytes";
    return false;
  }

  int clean = 0;
  for (int i = 0; i < 40; ++i) {
    const std::string id = synthetic_scene_id(i);
    const Trajectory traj = trajectory_from_json(
        nlohmann::json::parse(slurp(o1 / "trajectories" / (id + ".json"))));
    auto [img, meta] = load_scene(root / id);
    if (replay(traj, img, SolverConfig{}).ok) ++clean;
  }
  detail = fmt("40 scenes: 1-worker and 8-worker runs byte-identical, "
               "%d/40 stored trajectories replay divergence-free",
               clean);
  return clean == 40;
}

bool check_trajectory_report_shape(std::string& detail) {
  // Documented anchor rather than a numeric assertion: the per-run report
  // is a step-by-step JSON record plus a chromaticity-plane SVG, which is
  // the shape a reviewer compares against a reference run by eye.  The
  // smoke below only proves both artifacts appear.
  TempTree tmp;
  auto [img, meta] = generate_synthetic_scene(4242, 0);
  GroundTruthOracle oracle(meta.illuminant_gt);
  const Trajectory traj = solve(img, meta, oracle, SolverConfig{});
  const SolverConfig cfg;
  write_text_file(tmp.path / "trajectory.json",
                  trajectory_to_json(traj, &cfg).dump(2));
  export_trajectory_svg(traj, meta.illuminant_gt,
                        tmp.path / "trajectory.svg");
  const bool present = fs::exists(tmp.path / "trajectory.json") &&
                       fs::exists(tmp.path / "trajectory.svg");
  detail = "documented, not asserted: step-by-step JSON plus chromaticity "
           "SVG per run (smoke: both artifacts written)";
  return present;
}

}  // namespace

int main() {
  struct Entry {
    const char* name;
    std::function<bool(std::string&)> fn;
  };
  const Entry entries[] = {
      {"rotation-exactness", check_rotation_exactness},
      {"schedule-endpoints", check_schedule_endpoints},
      {"synthetic-convergence", check_synthetic_convergence},
      {"stop-state-machine", check_stop_state_machine},
      {"summary-stats-reference", check_summary_stats},
      {"balance-round-trip", check_balance_round_trip},
      {"wire-label-fidelity", check_wire_label_fidelity},
      {"augmentation-soundness", check_augmentation_soundness},
      {"noise-monotonicity", check_noise_monotonicity},
      {"parallel-determinism", check_parallel_determinism},
      {"trajectory-report-shape", check_trajectory_report_shape},
  };

  int failures = 0;
  for (const Entry& e : entries) {
    std::string detail;
    bool ok = false;
    try {
      ok = e.fn(detail);
    } catch (const std::exception& ex) {
      detail = std::string("exception: ") + ex.what();
    }
    std::printf("%s %-26s %s\n", ok ? "PASS" : "FAIL", e.name,
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  return failures;
}
