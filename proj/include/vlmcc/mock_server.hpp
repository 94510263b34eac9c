#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "vlmcc/chroma.hpp"
#include "vlmcc/error.hpp"
#include "vlmcc/oracle.hpp"
#include "vlmcc/scene_io.hpp"
#include "vlmcc/wire.hpp"

namespace vlmcc {

// In-process stand-in for the remote cast endpoint.  Answers /v1/cast
// from each scene's stored ground truth and the estimate the client
// reports in X-Current-Estimate, so wire-driven runs are comparable to
// in-process ground-truth runs label for label.
//
// The scene table is frozen once start() is called; handlers only read it.
class MockServer {
 public:
  MockServer() { setup_routes(); }

  explicit MockServer(const std::filesystem::path& dataset_root)
      : MockServer() {
    for (const auto& dir : list_scene_dirs(dataset_root)) {
      const SceneMeta meta = load_scene_meta(dir / "meta.json");
      scenes_[dir.filename().string()] = meta.illuminant_gt;
    }
    if (scenes_.empty())
      throw LoadError("mock server: no scenes under " + dataset_root.string());
  }

  void add_scene(const std::string& scene_id, const Illuminant& gt) {
    scenes_[scene_id] = normalize(gt.r, gt.g, gt.b);
  }

  // Binds and serves on a background thread.  port 0 picks a free port;
  // returns false when the address cannot be bound.
  bool start(const std::string& host, int port) {
    host_ = host;
    if (port == 0) {
      const int bound = server_.bind_to_any_port(host);
      if (bound < 0) return false;
      port_ = bound;
    } else {
      if (!server_.bind_to_port(host, port)) return false;
      port_ = port;
    }
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    const auto deadline =
        std::chrono::steady_clock::now() + std::chrono::seconds(5);
    while (!server_.is_running() &&
           std::chrono::steady_clock::now() < deadline)
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
    return server_.is_running();
  }

  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }

  int port() const { return port_; }
  const std::string& host() const { return host_; }
  std::string endpoint() const {
    return "http://" + host_ + ":" + std::to_string(port_);
  }

  ~MockServer() { stop(); }

  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

 private:
  static void reply_error(httplib::Response& res, int status,
                          const std::string& message) {
    res.status = status;
    nlohmann::json j;
    j["error"] = message;
    res.set_content(j.dump(), "application/json");
  }

  void setup_routes() {
    server_.set_payload_max_length(kMaxRequestBytes);

    server_.Post("/v1/cast", [this](const httplib::Request& req,
                                    httplib::Response& res) {
      try {
        handle_cast(req, res);
      } catch (const std::exception& e) {
        reply_error(res, 500, std::string("internal error: ") + e.what());
      }
    });

    server_.Post("/v1/priors", [this](const httplib::Request& req,
                                      httplib::Response& res) {
      try {
        handle_priors(req, res);
      } catch (const std::exception& e) {
        reply_error(res, 500, std::string("internal error: ") + e.what());
      }
    });
  }

  void handle_cast(const httplib::Request& req, httplib::Response& res) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception&) {
      return reply_error(res, 400, "request body is not valid JSON");
    }
    if (!j.is_object() || !j.contains("image") || !j["image"].is_string())
      return reply_error(res, 400, "missing string field: image");
    if (!j.contains("iteration") || !j["iteration"].is_number_integer() ||
        j["iteration"].get<int>() < 1)
      return reply_error(res, 400, "iteration must be an integer >= 1");
    if (!j.contains("prompt_template_id") ||
        !j["prompt_template_id"].is_string() ||
        j["prompt_template_id"].get<std::string>().empty())
      return reply_error(res, 400, "missing prompt_template_id");
    if (!j.contains("priors"))
      return reply_error(res, 400, "missing priors");
    try {
      prior_items_from_json(j["priors"]);
    } catch (const ProtocolError& e) {
      return reply_error(res, 400, std::string("bad priors: ") + e.what());
    }
    try {
      const auto png_bytes = base64_decode(j["image"].get<std::string>());
      decode_png_rgb(png_bytes);
    } catch (const std::exception& e) {
      return reply_error(res, 400,
                         std::string("image is not a decodable PNG: ") +
                             e.what());
    }

    if (!req.has_header("X-Scene-Id"))
      return reply_error(res, 400, "missing X-Scene-Id header");
    const std::string scene_id = req.get_header_value("X-Scene-Id");
    const auto it = scenes_.find(scene_id);
    if (it == scenes_.end())
      return reply_error(res, 404, "unknown scene: " + scene_id);

    if (!req.has_header("X-Current-Estimate"))
      return reply_error(res, 400, "missing X-Current-Estimate header");
    double r = 0.0, g = 0.0, b = 0.0;
    const std::string est_s = req.get_header_value("X-Current-Estimate");
    if (std::sscanf(est_s.c_str(), "%lf,%lf,%lf", &r, &g, &b) != 3)
      return reply_error(res, 400,
                         "X-Current-Estimate must be three comma-separated "
                         "numbers");
    Illuminant est;
    try {
      est = normalize(r, g, b);
    } catch (const DomainError& e) {
      return reply_error(res, 400,
                         std::string("bad X-Current-Estimate: ") + e.what());
    }

    nlohmann::json out;
    out["cast"] = std::string(to_string(gt_residual_label(it->second, est)));
    res.status = 200;
    res.set_content(out.dump(), "application/json");
  }

  void handle_priors(const httplib::Request& req, httplib::Response& res) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception&) {
      return reply_error(res, 400, "request body is not valid JSON");
    }
    if (!j.is_object() || !j.contains("image") || !j["image"].is_string())
      return reply_error(res, 400, "missing string field: image");
    try {
      const auto png_bytes = base64_decode(j["image"].get<std::string>());
      decode_png_rgb(png_bytes);
    } catch (const std::exception& e) {
      return reply_error(res, 400,
                         std::string("image is not a decodable PNG: ") +
                             e.what());
    }

    nlohmann::json out;
    out["items"] = nlohmann::json::array(
        {{{"object", "gray card"},
          {"location", "image center"},
          {"expected_color", "neutral gray"},
          {"reason", "calibration target"}},
         {{"object", "wall"},
          {"location", "background"},
          {"expected_color", "white"},
          {"reason", "painted surface"}}});
    res.status = 200;
    res.set_content(out.dump(), "application/json");
  }

  std::map<std::string, Illuminant> scenes_;
  httplib::Server server_;
  std::thread thread_;
  std::string host_ = "127.0.0.1";
  int port_ = 0;
};

}  // namespace vlmcc
