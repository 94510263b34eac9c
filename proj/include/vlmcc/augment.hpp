#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlmcc/chroma.hpp"
#include "vlmcc/error.hpp"
#include "vlmcc/imaging.hpp"
#include "vlmcc/oracle.hpp"
#include "vlmcc/parallel.hpp"
#include "vlmcc/png_io.hpp"
#include "vlmcc/random.hpp"
#include "vlmcc/scene_io.hpp"

namespace vlmcc {

// Fine-tuning data: renders balanced with a deliberately wrong illuminant
// plus the cast label a perfect critic would assign, for supervising a
// model on this exact judgment task.

struct Perturbation {
  Illuminant illuminant;
  double angle_deg = 0.0;
};

// Displaces `gt` by a uniform angle in (0, max_deg] along a uniformly
// random tangent.  Never returns gt itself: every sample carries a
// nonzero cast.
inline Perturbation perturb_illuminant(const Illuminant& gt, double max_deg,
                                       Rng& rng) {
  if (!(max_deg > 0.0) || !(max_deg < 90.0))
    throw DomainError("perturb_illuminant: max_deg must lie in (0, 90)");
  const double angle = max_deg * (1.0 - rng.uniform01());  // (0, max_deg]
  return {displace_within_gamut(gt, angle, rng), angle};
}

struct FinetuneSample {
  SrgbImage image;          // oracle-view render under the wrong estimate
  CastLabel label;          // cast left over relative to the true illuminant
  double perturbation_deg = 0.0;
  Illuminant perturbed_illuminant;
  std::string source_scene;
};

inline FinetuneSample make_sample(const LinearImage& img,
                                  const SceneMeta& meta, double max_deg,
                                  Rng& rng) {
  const Perturbation pert = perturb_illuminant(meta.illuminant_gt, max_deg,
                                               rng);
  const LinearImage balanced = white_balance(img, pert.illuminant);
  const SrgbImage render = to_pseudo_srgb(balanced, meta.ccm_cam_to_xyz);
  FinetuneSample sample;
  sample.image = resize_shorter_side(render, kOracleViewShortSide);
  sample.label = gt_residual_label(meta.illuminant_gt, pert.illuminant);
  sample.perturbation_deg = pert.angle_deg;
  sample.perturbed_illuminant = pert.illuminant;
  sample.source_scene = meta.scene_id;
  return sample;
}

struct ExportResult {
  int n_samples = 0;
  std::filesystem::path manifest_path;
  std::vector<SceneFailure> failures;
};

// Writes out_dir/images/<scene>_<k>.png (8-bit) plus manifest.jsonl, one
// JSON object per line with keys image, label, perturbation_deg,
// perturbed_illuminant, source_scene.  Storing the perturbed estimate
// makes every label recomputable from the manifest alone.  Each scene draws from its own (seed, scene_id) stream and
// the manifest is written in sorted scene order after all workers join,
// so output bytes do not depend on the job count.
inline ExportResult export_finetune_dataset(
    const std::filesystem::path& dataset_root,
    const std::filesystem::path& out_dir, int samples_per_scene,
    double max_deg, std::uint64_t seed, int jobs = 1) {
  if (samples_per_scene < 1)
    throw DomainError("export: samples_per_scene must be >= 1");
  if (!(max_deg > 0.0) || !(max_deg < 90.0))
    throw DomainError("export: max_deg must lie in (0, 90)");
  const std::vector<std::filesystem::path> dirs = list_scene_dirs(dataset_root);
  if (dirs.empty())
    throw DomainError("no scenes found under " + dataset_root.string());

  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec)
    throw IoError("cannot create output directory: " +
                  (out_dir / "images").string());

  struct SceneLines {
    std::vector<std::string> lines;
  };
  std::vector<std::optional<SceneLines>> per_scene(dirs.size());
  std::vector<std::optional<SceneFailure>> failures(dirs.size());

  parallel_for(dirs.size(), jobs, [&](std::size_t i) {
    const std::string scene_id = dirs[i].filename().string();
    try {
      auto [img, meta] = load_scene(dirs[i]);
      Rng rng(derive_seed(seed, fnv1a64(meta.scene_id)));
      SceneLines out;
      for (int k = 0; k < samples_per_scene; ++k) {
        const FinetuneSample sample = make_sample(img, meta, max_deg, rng);
        const std::string name =
            meta.scene_id + "_" + std::to_string(k) + ".png";
        write_file(out_dir / "images" / name, encode_srgb_png8(sample.image));
        nlohmann::json j;
        j["image"] = "images/" + name;
        j["label"] = std::string(to_string(sample.label));
        j["perturbation_deg"] = sample.perturbation_deg;
        j["perturbed_illuminant"] = {sample.perturbed_illuminant.r,
                                     sample.perturbed_illuminant.g,
                                     sample.perturbed_illuminant.b};
        j["source_scene"] = sample.source_scene;
        out.lines.push_back(j.dump());
      }
      per_scene[i] = std::move(out);
    } catch (const std::exception& e) {
      failures[i] = SceneFailure{scene_id, e.what()};
    }
  });

  ExportResult result;
  std::string manifest;
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    if (per_scene[i]) {
      for (const std::string& line : per_scene[i]->lines) {
        manifest += line;
        manifest += "\n";
        ++result.n_samples;
      }
    } else if (failures[i]) {
      result.failures.push_back(*failures[i]);
    }
  }
  if (result.n_samples == 0)
    throw Error("export produced no samples; first failure: " +
                (result.failures.empty()
                     ? std::string("unknown")
                     : result.failures.front().scene_id + ": " +
                           result.failures.front().message));
  result.manifest_path = out_dir / "manifest.jsonl";
  write_text_file(result.manifest_path, manifest);
  return result;
}

}  // namespace vlmcc
