// Command-line front end: estimate one scene, evaluate a dataset, export
// fine-tune data, serve the mock cast endpoint, or score statistical
// baselines.  Machine-readable results go to stdout as single-line JSON;
// human-readable tables and progress go to stderr.
//
// Exit codes: 0 success, 2 input/config error, 3 oracle or transport
// failure, 4 server error.

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "vlmcc/augment.hpp"
#include "vlmcc/chroma.hpp"
#include "vlmcc/eval.hpp"
#include "vlmcc/mock_server.hpp"
#include "vlmcc/scene_io.hpp"
#include "vlmcc/solver.hpp"
#include "vlmcc/synthetic.hpp"
#include "vlmcc/wire.hpp"

namespace {

using namespace vlmcc;

// Shared solver/oracle flags, mirrored by every solving subcommand.
struct SolverArgs {
  std::string oracle = "gt";
  int t_max = 20;
  double a_start = 3.0;
  double a_end = 0.1;
  std::string init = "gray_world";
  std::string reflect_every = "6";
  bool no_gamma = false;
  std::uint64_t seed = 0;
};

InitMethod parse_init_method(const std::string& s) {
  if (s == "gray_world") return init_gray_world();
  if (s == "neutral") return init_neutral();
  const auto colon = s.find(':');
  const std::string head = s.substr(0, colon);
  if (head == "shades_of_gray") {
    if (colon == std::string::npos)
      throw DomainError("init: shades_of_gray needs a Minkowski order");
    double p;
    try {
      p = std::stod(s.substr(colon + 1));
    } catch (const std::exception&) {
      throw DomainError("init: bad Minkowski order in " + s);
    }
    return init_shades_of_gray(p);
  }
  if (head == "gray_edge") {
    // gray_edge:ORDER:P:SIGMA
    std::string rest = s.substr(colon == std::string::npos ? s.size()
                                                           : colon + 1);
    int order;
    double p, sigma;
    if (std::sscanf(rest.c_str(), "%d:%lf:%lf", &order, &p, &sigma) != 3)
      throw DomainError("init: expected gray_edge:ORDER:P:SIGMA, got " + s);
    return init_gray_edge(order, p, sigma);
  }
  throw DomainError("unknown init method: " + s +
                    " (expected gray_world | shades_of_gray:P | "
                    "gray_edge:ORDER:P:SIGMA | neutral)");
}

int parse_reflect_every(const std::string& s) {
  if (s == "off") return 0;
  int n;
  try {
    n = std::stoi(s);
  } catch (const std::exception&) {
    throw DomainError("--reflect-every expects a positive integer or 'off'");
  }
  if (n < 1)
    throw DomainError("--reflect-every expects a positive integer or 'off'");
  return n;
}

SolverConfig build_solver_config(const SolverArgs& args) {
  SolverConfig cfg;
  cfg.schedule.t_max = args.t_max;
  cfg.schedule.a_start = args.a_start;
  cfg.schedule.a_end = args.a_end;
  cfg.init = parse_init_method(args.init);
  cfg.reflection_interval = parse_reflect_every(args.reflect_every);
  cfg.gamma_enabled = !args.no_gamma;
  cfg.validate();
  return cfg;
}

void add_solver_flags(CLI::App* cmd, SolverArgs& args) {
  cmd->add_option("--oracle", args.oracle,
                  "Cast oracle: gt | noisy:P | statistical:PNORM | "
                  "remote:URL")
      ->capture_default_str();
  cmd->add_option("--t-max", args.t_max, "Maximum solver iterations")
      ->capture_default_str();
  cmd->add_option("--a-start", args.a_start, "First-step rotation (degrees)")
      ->capture_default_str();
  cmd->add_option("--a-end", args.a_end, "Last-step rotation (degrees)")
      ->capture_default_str();
  cmd->add_option("--init", args.init,
                  "Initial estimate: gray_world | shades_of_gray:P | "
                  "gray_edge:ORDER:P:SIGMA | neutral")
      ->capture_default_str();
  cmd->add_option("--reflect-every", args.reflect_every,
                  "Re-extract priors every N iterations, or 'off'")
      ->capture_default_str();
  cmd->add_flag("--no-gamma", args.no_gamma,
                "Skip the display transfer curve when rendering");
  cmd->add_option("--seed", args.seed,
                  "Seed for randomized components (required with noisy "
                  "oracle)")
      ->capture_default_str();
}

void require_seed_for_noisy(const OracleSpec& spec, const CLI::App* cmd) {
  if (spec.kind == OracleSpec::Kind::noisy && cmd->count("--seed") == 0)
    throw DomainError("--seed is required with the noisy oracle");
}

void print_stats_table(const ErrorStats& s) {
  std::fprintf(stderr, "%-22s%8s%8s%8s%8s%8s\n", "angular error (deg)",
               "Mean", "Med.", "Tri.", "B.25%", "W.25%");
  std::fprintf(stderr, "%-22s%8.2f%8.2f%8.2f%8.2f%8.2f\n", "",
               s.mean_deg, s.median_deg, s.trimean_deg, s.best25_mean_deg,
               s.worst25_mean_deg);
}

// ─── estimate ───

struct EstimateArgs {
  std::string scene_dir;
  SolverArgs solver;
  std::string out_dir = "vlmcc_out";
};

int cmd_estimate(const EstimateArgs& args, const CLI::App* cmd) {
  const SolverConfig cfg = build_solver_config(args.solver);
  const OracleSpec spec = parse_oracle_spec(args.solver.oracle);
  require_seed_for_noisy(spec, cmd);

  auto [img, meta] = load_scene(args.scene_dir);
  const auto oracle =
      make_scene_oracle(spec, meta.scene_id, meta.illuminant_gt,
                        args.solver.seed);
  const Trajectory traj = solve(img, meta, *oracle, cfg);
  const double err = angular_error_deg(traj.final_estimate,
                                       meta.illuminant_gt);

  if (!args.out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(args.out_dir, ec);
    if (ec) throw IoError("cannot create output directory: " + args.out_dir);
    const auto base =
        std::filesystem::path(args.out_dir) / (meta.scene_id + "_trajectory");
    write_text_file(base.string() + ".json",
                    trajectory_to_json(traj, &cfg).dump(2) + "\n");
    export_trajectory_svg(traj, meta.illuminant_gt, base.string() + ".svg");
  }

  nlohmann::json j;
  j["scene_id"] = meta.scene_id;
  j["error_deg"] = err;
  j["final_estimate"] = {traj.final_estimate.r, traj.final_estimate.g,
                         traj.final_estimate.b};
  j["iterations"] = static_cast<int>(traj.steps.size());
  j["stop_reason"] = std::string(to_string(traj.stop_reason));
  std::cout << j.dump() << "\n";
  std::fprintf(stderr, "scene %s: %.4f deg after %zu iterations (%s)\n",
               meta.scene_id.c_str(), err, traj.steps.size(),
               std::string(to_string(traj.stop_reason)).c_str());
  return 0;
}

// ─── evaluate ───

struct EvaluateArgs {
  std::string dataset_root;
  SolverArgs solver;
  std::string out_dir = "vlmcc_out";
  int jobs = 1;
  int synthetic = 0;
};

int cmd_evaluate(const EvaluateArgs& args, const CLI::App* cmd) {
  RunOptions opts;
  opts.solver = build_solver_config(args.solver);
  opts.oracle = parse_oracle_spec(args.solver.oracle);
  require_seed_for_noisy(opts.oracle, cmd);
  opts.seed = args.solver.seed;
  opts.jobs = args.jobs;
  opts.out_dir = args.out_dir;

  std::filesystem::path root;
  if (args.synthetic > 0) {
    if (!args.dataset_root.empty())
      throw DomainError(
          "give either a dataset root or --synthetic, not both");
    root = std::filesystem::path(args.out_dir) / "synthetic_scenes";
    make_synthetic_dataset(root, args.synthetic, args.solver.seed);
    std::fprintf(stderr, "materialized %d synthetic scenes under %s\n",
                 args.synthetic, root.string().c_str());
  } else {
    if (args.dataset_root.empty())
      throw DomainError("a dataset root (or --synthetic N) is required");
    root = args.dataset_root;
  }

  const RunOutcome outcome = run_protocol(root, opts);
  std::cout << eval_report_to_json(outcome.report, outcome.failures).dump()
            << "\n";
  print_stats_table(outcome.report.stats);
  std::fprintf(stderr, "%d scene(s) evaluated, %zu failed\n",
               outcome.report.n_scenes, outcome.failures.size());
  for (const SceneFailure& f : outcome.failures)
    std::fprintf(stderr, "  failed %s: %s\n", f.scene_id.c_str(),
                 f.message.c_str());
  return 0;
}

// ─── augment ───

struct AugmentArgs {
  std::string dataset_root;
  std::string out_dir;
  int per_scene = 4;
  double max_deg = 17.5;
  std::uint64_t seed = 0;
  int jobs = 1;
};

int cmd_augment(const AugmentArgs& args) {
  const ExportResult result =
      export_finetune_dataset(args.dataset_root, args.out_dir,
                              args.per_scene, args.max_deg, args.seed,
                              args.jobs);
  nlohmann::json j;
  j["n_samples"] = result.n_samples;
  j["manifest"] = result.manifest_path.string();
  j["failures"] = static_cast<int>(result.failures.size());
  std::cout << j.dump() << "\n";
  std::fprintf(stderr, "wrote %d sample(s), manifest %s, %zu scene(s) "
               "failed\n",
               result.n_samples, result.manifest_path.string().c_str(),
               result.failures.size());
  for (const SceneFailure& f : result.failures)
    std::fprintf(stderr, "  failed %s: %s\n", f.scene_id.c_str(),
                 f.message.c_str());
  return 0;
}

// ─── mock-serve ───

std::atomic<bool> g_shutdown{false};

void handle_shutdown_signal(int) { g_shutdown = true; }

struct MockServeArgs {
  std::string dataset_root;
  std::string bind = "127.0.0.1:8080";
};

int cmd_mock_serve(const MockServeArgs& args) {
  const auto colon = args.bind.rfind(':');
  if (colon == std::string::npos || colon == 0)
    throw DomainError("--bind expects HOST:PORT");
  const std::string host = args.bind.substr(0, colon);
  int port;
  try {
    port = std::stoi(args.bind.substr(colon + 1));
  } catch (const std::exception&) {
    throw DomainError("--bind port is not a number");
  }
  if (port < 0 || port > 65535) throw DomainError("--bind port out of range");

  MockServer server{std::filesystem::path(args.dataset_root)};
  if (!server.start(host, port)) {
    std::fprintf(stderr, "cannot bind %s:%d\n", host.c_str(), port);
    return 4;
  }
  std::printf("listening on http://%s:%d\n", host.c_str(), server.port());
  std::fflush(stdout);

  std::signal(SIGINT, handle_shutdown_signal);
  std::signal(SIGTERM, handle_shutdown_signal);
  while (!g_shutdown)
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  server.stop();
  return 0;
}

// ─── baseline ───

struct BaselineArgs {
  std::string dataset_root;
  std::string method = "gray_world";
  std::string out_dir;
  int jobs = 1;
};

int cmd_baseline(const BaselineArgs& args) {
  const InitMethod method = parse_init_method(args.method);
  if (method.kind == InitMethod::Kind::neutral ||
      method.kind == InitMethod::Kind::fixed)
    throw DomainError(
        "baseline method must be gray_world | shades_of_gray:P | "
        "gray_edge:ORDER:P:SIGMA");

  const auto dirs = list_scene_dirs(args.dataset_root);
  if (dirs.empty())
    throw DomainError("no scenes found under " + args.dataset_root);

  struct Row {
    std::string scene_id;
    double error_deg;
  };
  std::vector<std::optional<Row>> rows(dirs.size());
  std::vector<std::optional<SceneFailure>> failures(dirs.size());
  parallel_for(dirs.size(), args.jobs, [&](std::size_t i) {
    const std::string scene_id = dirs[i].filename().string();
    try {
      auto [img, meta] = load_scene(dirs[i]);
      const Illuminant est = initialize(img, method);
      rows[i] = Row{meta.scene_id,
                    angular_error_deg(est, meta.illuminant_gt)};
    } catch (const std::exception& e) {
      failures[i] = SceneFailure{scene_id, e.what()};
    }
  });

  std::vector<double> errors;
  nlohmann::json per = nlohmann::json::array();
  std::string csv = "scene_id,error_deg\n";
  char buf[256];
  std::vector<SceneFailure> failed;
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    if (rows[i]) {
      errors.push_back(rows[i]->error_deg);
      per.push_back({{"scene_id", rows[i]->scene_id},
                     {"error_deg", rows[i]->error_deg}});
      std::snprintf(buf, sizeof(buf), "%s,%.9f\n", rows[i]->scene_id.c_str(),
                    rows[i]->error_deg);
      csv += buf;
    } else if (failures[i]) {
      failed.push_back(*failures[i]);
    }
  }
  if (errors.empty())
    throw Error("every scene failed; first failure: " +
                (failed.empty() ? std::string("unknown")
                                : failed.front().scene_id + ": " +
                                      failed.front().message));

  const ErrorStats stats = summarize(errors);
  nlohmann::json j;
  j["method"] = args.method;
  j["n_scenes"] = static_cast<int>(errors.size());
  j["mean_deg"] = stats.mean_deg;
  j["median_deg"] = stats.median_deg;
  j["trimean_deg"] = stats.trimean_deg;
  j["best25_mean_deg"] = stats.best25_mean_deg;
  j["worst25_mean_deg"] = stats.worst25_mean_deg;
  j["per_scene"] = per;
  std::cout << j.dump() << "\n";
  print_stats_table(stats);
  for (const SceneFailure& f : failed)
    std::fprintf(stderr, "  failed %s: %s\n", f.scene_id.c_str(),
                 f.message.c_str());

  if (!args.out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(args.out_dir, ec);
    if (ec) throw IoError("cannot create output directory: " + args.out_dir);
    write_text_file(std::filesystem::path(args.out_dir) /
                        "baseline_per_scene.csv",
                    csv);
  }
  return 0;
}

// ─── error-to-exit-code mapping ───

int run_guarded(const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const SolveError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const TransportError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const ProtocolError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const ContractError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const LoadError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const DomainError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const TemplateError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    // batch runs that produced zero results (oracle down for every scene)
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feedback-driven color constancy toolkit", "vlmcc"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "Config file (key=value per line, [subcommand] sections); "
                 "command-line flags win");

  EstimateArgs est_args;
  CLI::App* est = app.add_subcommand(
      "estimate", "Solve one scene and print the result as JSON");
  est->add_option("scene_dir", est_args.scene_dir,
                  "Scene directory (image.png + meta.json)")
      ->required();
  add_solver_flags(est, est_args.solver);
  est->add_option("--out", est_args.out_dir,
                  "Directory for trajectory JSON/SVG artifacts")
      ->capture_default_str();

  EvaluateArgs eval_args;
  CLI::App* eval = app.add_subcommand(
      "evaluate", "Run the full loop over a dataset and summarize errors");
  eval->add_option("dataset_root", eval_args.dataset_root,
                   "Directory of scene directories");
  add_solver_flags(eval, eval_args.solver);
  eval->add_option("--jobs", eval_args.jobs, "Worker threads")
      ->capture_default_str();
  eval->add_option("--out", eval_args.out_dir,
                   "Directory for CSV/JSON/SVG artifacts")
      ->capture_default_str();
  eval->add_option("--synthetic", eval_args.synthetic,
                   "Generate N synthetic scenes instead of reading a "
                   "dataset");

  AugmentArgs aug_args;
  CLI::App* aug = app.add_subcommand(
      "augment", "Export a labeled fine-tune dataset from perturbed scenes");
  aug->add_option("dataset_root", aug_args.dataset_root,
                  "Directory of scene directories")
      ->required();
  aug->add_option("out_dir", aug_args.out_dir, "Export directory")
      ->required();
  aug->add_option("--per-scene", aug_args.per_scene, "Samples per scene")
      ->capture_default_str();
  aug->add_option("--max-deg", aug_args.max_deg,
                  "Largest perturbation angle (degrees)")
      ->capture_default_str();
  aug->add_option("--seed", aug_args.seed, "Sampling seed")->required();
  aug->add_option("--jobs", aug_args.jobs, "Worker threads")
      ->capture_default_str();

  MockServeArgs mock_args;
  CLI::App* mock = app.add_subcommand(
      "mock-serve", "Serve the mock cast endpoint for a dataset");
  mock->add_option("dataset_root", mock_args.dataset_root,
                   "Directory of scene directories")
      ->required();
  mock->add_option("--bind", mock_args.bind, "HOST:PORT (port 0 = any)")
      ->capture_default_str();

  BaselineArgs base_args;
  CLI::App* base = app.add_subcommand(
      "baseline", "Score statistical estimators over a dataset");
  base->add_option("dataset_root", base_args.dataset_root,
                   "Directory of scene directories")
      ->required();
  base->add_option("--method", base_args.method,
                   "gray_world | shades_of_gray:P | gray_edge:ORDER:P:SIGMA")
      ->capture_default_str();
  base->add_option("--jobs", base_args.jobs, "Worker threads")
      ->capture_default_str();
  base->add_option("--out", base_args.out_dir,
                   "Directory for the per-scene CSV")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (est->parsed()) return run_guarded([&] { return cmd_estimate(est_args, est); });
  if (eval->parsed())
    return run_guarded([&] { return cmd_evaluate(eval_args, eval); });
  if (aug->parsed()) return run_guarded([&] { return cmd_augment(aug_args); });
  if (mock->parsed())
    return run_guarded([&] { return cmd_mock_serve(mock_args); });
  if (base->parsed())
    return run_guarded([&] { return cmd_baseline(base_args); });
  return 2;
}
