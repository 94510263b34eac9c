#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlmcc/chroma.hpp"
#include "vlmcc/error.hpp"
#include "vlmcc/imaging.hpp"
#include "vlmcc/png_io.hpp"

namespace vlmcc {

// Everything known about a capture besides its pixels.  `scene_id` is
// bookkeeping filled from the directory name on load; it is not part of
// the on-disk schema.
struct SceneMeta {
  std::string camera_id;
  ColorMatrix ccm_cam_to_xyz;
  Illuminant illuminant_gt;
  std::vector<MaskRect> mask;
  std::string scene_id;
};

namespace detail {

inline ColorMatrix parse_ccm(const nlohmann::json& j) {
  std::vector<double> flat;
  if (j.is_array() && j.size() == 9 && j[0].is_number()) {
    for (const auto& v : j) {
      if (!v.is_number()) throw LoadError("meta: ccm entries must be numbers");
      flat.push_back(v.get<double>());
    }
  } else if (j.is_array() && j.size() == 3) {
    for (const auto& rowj : j) {
      if (!rowj.is_array() || rowj.size() != 3)
        throw LoadError("meta: ccm_cam_to_xyz must be 3x3");
      for (const auto& v : rowj) {
        if (!v.is_number())
          throw LoadError("meta: ccm entries must be numbers");
        flat.push_back(v.get<double>());
      }
    }
  } else {
    throw LoadError("meta: ccm_cam_to_xyz must be a 3x3 matrix (9 numbers)");
  }
  ColorMatrix ccm;
  std::copy(flat.begin(), flat.end(), ccm.m.begin());
  if (std::abs(ccm.det()) <= 1e-9)
    throw LoadError("meta: ccm_cam_to_xyz is singular");
  return ccm;
}

}  // namespace detail

// Parses meta.json alone; image-dependent checks (mask bounds) happen in
// load_scene once dimensions are known.
inline SceneMeta load_scene_meta(const std::filesystem::path& json_path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(json_path));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("meta: invalid JSON in " + json_path.string() + ": " +
                    e.what());
  }
  if (!j.is_object()) throw LoadError("meta: top level must be an object");

  SceneMeta meta;
  if (!j.contains("camera_id") || !j["camera_id"].is_string())
    throw LoadError("meta: camera_id (string) is required");
  meta.camera_id = j["camera_id"].get<std::string>();

  if (!j.contains("ccm_cam_to_xyz"))
    throw LoadError("meta: ccm_cam_to_xyz is required");
  meta.ccm_cam_to_xyz = detail::parse_ccm(j["ccm_cam_to_xyz"]);

  if (!j.contains("illuminant_gt") || !j["illuminant_gt"].is_array() ||
      j["illuminant_gt"].size() != 3)
    throw LoadError("meta: illuminant_gt must be 3 numbers");
  double gt[3];
  for (int i = 0; i < 3; ++i) {
    const auto& v = j["illuminant_gt"][static_cast<std::size_t>(i)];
    if (!v.is_number())
      throw LoadError("meta: illuminant_gt entries must be numbers");
    gt[i] = v.get<double>();
    if (!(gt[i] > 0.0))
      throw LoadError("meta: illuminant_gt components must be positive");
  }
  meta.illuminant_gt = normalize(gt[0], gt[1], gt[2]);

  if (j.contains("mask")) {
    if (!j["mask"].is_array()) throw LoadError("meta: mask must be an array");
    for (const auto& r : j["mask"]) {
      if (!r.is_array() || r.size() != 4)
        throw LoadError("meta: mask entries must be [x, y, w, h]");
      MaskRect rect;
      int* f[4] = {&rect.x, &rect.y, &rect.w, &rect.h};
      for (int i = 0; i < 4; ++i) {
        const auto& v = r[static_cast<std::size_t>(i)];
        if (!v.is_number_integer())
          throw LoadError("meta: mask coordinates must be integers");
        *f[i] = v.get<int>();
      }
      if (rect.x < 0 || rect.y < 0 || rect.w < 1 || rect.h < 1)
        throw LoadError("meta: mask rectangle out of range");
      meta.mask.push_back(rect);
    }
  }
  return meta;
}

// Loads `dir/image.png` (16-bit RGB) plus `dir/meta.json` and validates
// the pair as a whole.
inline std::pair<LinearImage, SceneMeta> load_scene(
    const std::filesystem::path& dir) {
  const auto image_path = dir / "image.png";
  const auto meta_path = dir / "meta.json";
  if (!std::filesystem::exists(image_path))
    throw LoadError("scene: missing " + image_path.string());
  if (!std::filesystem::exists(meta_path))
    throw LoadError("scene: missing " + meta_path.string());

  const DecodedPng png = decode_png_rgb(read_file(image_path));
  if (png.bit_depth != 16)
    throw LoadError("scene: image.png must be a 16-bit RGB PNG");

  SceneMeta meta = load_scene_meta(meta_path);
  for (const MaskRect& r : meta.mask) {
    if (r.x + r.w > png.width || r.y + r.h > png.height)
      throw LoadError("meta: mask rectangle exceeds image bounds");
  }
  meta.scene_id = dir.filename().string();
  if (meta.scene_id.empty())  // trailing slash
    meta.scene_id = dir.parent_path().filename().string();

  LinearImage img;
  img.width = png.width;
  img.height = png.height;
  img.data.resize(png.samples.size());
  for (std::size_t i = 0; i < png.samples.size(); ++i)
    img.data[i] = png.samples[i] / 65535.0;
  img.mask = meta.mask;
  return {std::move(img), std::move(meta)};
}

// Writes `dir/image.png` + `dir/meta.json`; 1/65535 quantization is the
// only loss on a round trip.
inline void save_scene(const std::filesystem::path& dir,
                       const LinearImage& img, const SceneMeta& meta) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create scene directory: " + dir.string());

  write_file(dir / "image.png", encode_linear_png16(img));

  nlohmann::json j;
  j["camera_id"] = meta.camera_id;
  j["ccm_cam_to_xyz"] = meta.ccm_cam_to_xyz.m;
  j["illuminant_gt"] = {meta.illuminant_gt.r, meta.illuminant_gt.g,
                        meta.illuminant_gt.b};
  if (!meta.mask.empty()) {
    nlohmann::json rects = nlohmann::json::array();
    for (const MaskRect& r : meta.mask)
      rects.push_back({r.x, r.y, r.w, r.h});
    j["mask"] = rects;
  }
  write_text_file(dir / "meta.json", j.dump(2) + "\n");
}

// One scene that could not be processed during a batch run; batch APIs
// collect these instead of aborting the whole run.
struct SceneFailure {
  std::string scene_id;
  std::string message;
};

// Sorted list of subdirectories that look like scenes (contain meta.json).
inline std::vector<std::filesystem::path> list_scene_dirs(
    const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root))
    throw LoadError("dataset root is not a directory: " + root.string());
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory() &&
        std::filesystem::exists(entry.path() / "meta.json"))
      dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

}  // namespace vlmcc
