#pragma once

#include <chrono>
#include <cstdint>
#include <exception>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "vlmcc/chroma.hpp"
#include "vlmcc/error.hpp"
#include "vlmcc/oracle.hpp"
#include "vlmcc/png_io.hpp"

namespace vlmcc {

// Hard ceiling on a serialized request body.  Exceeding it is a caller
// bug (image not resized for the wire), not a transport condition.
inline constexpr std::size_t kMaxRequestBytes = 4u * 1024u * 1024u;

// ─── base64 ───

inline std::string base64_encode(const std::vector<unsigned char>& in) {
  static const char* alphabet =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= in.size(); i += 3) {
    const std::uint32_t v = (in[i] << 16) | (in[i + 1] << 8) | in[i + 2];
    out.push_back(alphabet[(v >> 18) & 63]);
    out.push_back(alphabet[(v >> 12) & 63]);
    out.push_back(alphabet[(v >> 6) & 63]);
    out.push_back(alphabet[v & 63]);
  }
  if (i + 1 == in.size()) {
    const std::uint32_t v = in[i] << 16;
    out.push_back(alphabet[(v >> 18) & 63]);
    out.push_back(alphabet[(v >> 12) & 63]);
    out += "==";
  } else if (i + 2 == in.size()) {
    const std::uint32_t v = (in[i] << 16) | (in[i + 1] << 8);
    out.push_back(alphabet[(v >> 18) & 63]);
    out.push_back(alphabet[(v >> 12) & 63]);
    out.push_back(alphabet[(v >> 6) & 63]);
    out += "=";
  }
  return out;
}

inline std::vector<unsigned char> base64_decode(const std::string& in) {
  const auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (in.size() % 4 != 0)
    throw ProtocolError(ProtocolError::Code::schema,
                        "base64 length must be a multiple of 4");
  std::vector<unsigned char> out;
  out.reserve(in.size() / 4 * 3);
  for (std::size_t i = 0; i < in.size(); i += 4) {
    int vals[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = in[i + k];
      if (c == '=') {
        if (i + 4 != in.size() || k < 2)
          throw ProtocolError(ProtocolError::Code::schema,
                              "misplaced base64 padding");
        vals[k] = 0;
        ++pad;
      } else {
        if (pad > 0)
          throw ProtocolError(ProtocolError::Code::schema,
                              "base64 data after padding");
        vals[k] = value_of(c);
        if (vals[k] < 0)
          throw ProtocolError(ProtocolError::Code::schema,
                              "invalid base64 character");
      }
    }
    const std::uint32_t v = (vals[0] << 18) | (vals[1] << 12) |
                            (vals[2] << 6) | vals[3];
    out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
    if (pad < 2) out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<unsigned char>(v & 0xff));
  }
  return out;
}

// ─── prompt templates ───

inline const std::string& default_cast_prompt_template() {
  static const std::string tmpl =
      "You are checking a photograph for a residual color cast after white "
      "balancing.\n"
      "Known scene colors:\n"
      "{priors_block}\n"
      "Which cast remains? Answer with exactly one word: red, green, or "
      "blue.\n";
  return tmpl;
}

inline std::string prompt_template_by_id(const std::string& id) {
  if (id == "default") return default_cast_prompt_template();
  throw TemplateError("unknown prompt template id: " + id);
}

inline std::string render_priors_block(const ColorPrior& priors) {
  std::string out;
  for (std::size_t i = 0; i < priors.items.size(); ++i) {
    const PriorItem& it = priors.items[i];
    if (i > 0) out += "\n";
    out += it.object + " @ " + it.location + ": expected " +
           it.expected_color + " (" + it.reason + ")";
  }
  return out;
}

// Substitutes {priors_block}; any other {name} placeholder is an error so
// a typo in a template fails loudly instead of reaching the model.
inline std::string render_prompt(const std::string& tmpl,
                                 const ColorPrior& priors) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    const char c = tmpl[i];
    if (c != '{') {
      out.push_back(c);
      ++i;
      continue;
    }
    const std::size_t close = tmpl.find('}', i + 1);
    if (close == std::string::npos)
      throw TemplateError("unterminated placeholder in prompt template");
    const std::string name = tmpl.substr(i + 1, close - i - 1);
    if (name == "priors_block") {
      out += render_priors_block(priors);
    } else {
      throw TemplateError("unknown placeholder in prompt template: {" + name +
                          "}");
    }
    i = close + 1;
  }
  return out;
}

// ─── request / response shapes ───

struct CastRequest {
  std::string image_b64;  // 8-bit RGB PNG, short side kOracleViewShortSide
  ColorPrior priors;
  std::string prompt_template_id = "default";
  int iteration = 1;
};

inline nlohmann::json prior_items_to_json(const ColorPrior& priors) {
  nlohmann::json items = nlohmann::json::array();
  for (const PriorItem& it : priors.items)
    items.push_back({{"object", it.object},
                     {"location", it.location},
                     {"expected_color", it.expected_color},
                     {"reason", it.reason}});
  return items;
}

inline ColorPrior prior_items_from_json(const nlohmann::json& items) {
  if (!items.is_array())
    throw ProtocolError(ProtocolError::Code::schema,
                        "prior items must be an array");
  ColorPrior prior;
  for (const auto& j : items) {
    if (!j.is_object())
      throw ProtocolError(ProtocolError::Code::schema,
                          "prior item must be an object");
    PriorItem it;
    for (const char* field :
         {"object", "location", "expected_color", "reason"}) {
      if (!j.contains(field) || !j[field].is_string())
        throw ProtocolError(ProtocolError::Code::schema,
                            std::string("prior item missing string field: ") +
                                field);
    }
    it.object = j["object"].get<std::string>();
    it.location = j["location"].get<std::string>();
    it.expected_color = j["expected_color"].get<std::string>();
    it.reason = j["reason"].get<std::string>();
    if (it.object.empty() || it.location.empty() ||
        it.expected_color.empty() || it.reason.empty())
      throw ProtocolError(ProtocolError::Code::schema,
                          "prior item fields must be non-empty");
    prior.items.push_back(std::move(it));
  }
  if (prior.items.size() < 2 || prior.items.size() > 6)
    throw ProtocolError(ProtocolError::Code::schema,
                        "prior must contain between 2 and 6 items");
  return prior;
}

inline std::string cast_request_to_json(const CastRequest& req) {
  nlohmann::json j;
  j["image"] = req.image_b64;
  j["priors"] = prior_items_to_json(req.priors);
  j["prompt_template_id"] = req.prompt_template_id;
  j["iteration"] = req.iteration;
  return j.dump();
}

// Builds a wire-ready request from a render: resizes for the wire if
// needed, encodes 8-bit PNG, checks the size bound.
inline CastRequest make_cast_request(const SrgbImage& image,
                                     const ColorPrior& priors,
                                     const std::string& prompt_template_id,
                                     int iteration) {
  if (iteration < 1)
    throw ContractError("cast request: iteration must be >= 1");
  if (prompt_template_id.empty())
    throw ContractError("cast request: prompt_template_id must be non-empty");
  prompt_template_by_id(prompt_template_id);  // reject unknown ids up front
  const SrgbImage view = resize_shorter_side(image, kOracleViewShortSide);
  CastRequest req;
  req.image_b64 = base64_encode(encode_srgb_png8(view));
  req.priors = priors;
  req.prompt_template_id = prompt_template_id;
  req.iteration = iteration;
  if (req.image_b64.size() > kMaxRequestBytes)
    throw ContractError("cast request: encoded image exceeds 4 MiB");
  return req;
}

// ─── client ───

struct RetryPolicy {
  int max_attempts = 3;
};

struct Endpoint {
  std::string host;
  int port = 0;
};

inline Endpoint parse_endpoint(const std::string& url) {
  const std::string prefix = "http://";
  if (url.rfind(prefix, 0) != 0)
    throw DomainError("endpoint must start with http:// : " + url);
  std::string rest = url.substr(prefix.size());
  while (!rest.empty() && rest.back() == '/') rest.pop_back();
  const std::size_t colon = rest.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 >= rest.size())
    throw DomainError("endpoint must be http://host:port : " + url);
  Endpoint ep;
  ep.host = rest.substr(0, colon);
  try {
    ep.port = std::stoi(rest.substr(colon + 1));
  } catch (const std::exception&) {
    throw DomainError("endpoint port is not a number: " + url);
  }
  if (ep.port < 1 || ep.port > 65535)
    throw DomainError("endpoint port out of range: " + url);
  return ep;
}

namespace detail {

struct HttpReply {
  int status = 0;
  std::string body;
};

// One POST attempt.  Transport failures throw TransportError; everything
// that produced an HTTP status is returned for the caller to judge.
inline HttpReply post_once(const Endpoint& ep, const std::string& path,
                           const httplib::Headers& headers,
                           const std::string& body) {
  httplib::Client cli(ep.host, ep.port);
  cli.set_connection_timeout(std::chrono::seconds(5));
  cli.set_read_timeout(std::chrono::seconds(30));
  cli.set_write_timeout(std::chrono::seconds(30));
  auto res = cli.Post(path, headers, body, "application/json");
  if (!res)
    throw TransportError("POST " + ep.host + ":" + std::to_string(ep.port) +
                         path + " failed: " + httplib::to_string(res.error()));
  return {res->status, res->body};
}

inline httplib::Headers wire_headers(const std::string& scene_id,
                                     const std::optional<Illuminant>& est) {
  httplib::Headers h;
  if (!scene_id.empty()) h.emplace("X-Scene-Id", scene_id);
  if (est) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g", est->r, est->g,
                  est->b);
    h.emplace("X-Current-Estimate", buf);
  }
  return h;
}

// Shared retry loop.  `parse` validates a 2xx body and throws
// ProtocolError to trigger another attempt (vocabulary slips and schema
// violations are often transient model output, so they are retried like
// 5xx); 400 and 404 are deterministic rejections and fail immediately.
template <typename T, typename ParseFn>
T post_with_retry(const Endpoint& ep, const std::string& path,
                  const httplib::Headers& headers, const std::string& body,
                  const RetryPolicy& policy, ParseFn parse) {
  if (policy.max_attempts < 1)
    throw DomainError("retry policy: max_attempts must be >= 1");
  std::exception_ptr last;
  for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
    try {
      const HttpReply reply = post_once(ep, path, headers, body);
      if (reply.status == 400 || reply.status == 404) {
        ProtocolError err(ProtocolError::Code::http_status,
                          "endpoint rejected request with status " +
                              std::to_string(reply.status) + ": " +
                              reply.body);
        err.set_http_status(reply.status);
        throw err;  // deterministic rejection, retrying cannot help
      }
      if (reply.status < 200 || reply.status >= 300) {
        ProtocolError err(ProtocolError::Code::http_status,
                          "endpoint returned status " +
                              std::to_string(reply.status));
        err.set_http_status(reply.status);
        last = std::make_exception_ptr(err);
        continue;
      }
      return parse(reply.body);
    } catch (const TransportError&) {
      last = std::current_exception();
    } catch (const ProtocolError& e) {
      if (e.http_status() == 400 || e.http_status() == 404) throw;
      last = std::current_exception();
    }
  }
  std::rethrow_exception(last);
}

}  // namespace detail

inline CastLabel remote_predict_cast(const std::string& endpoint_url,
                                     const CastRequest& req,
                                     const std::string& scene_id,
                                     const std::optional<Illuminant>& estimate,
                                     const RetryPolicy& policy = {}) {
  const Endpoint ep = parse_endpoint(endpoint_url);
  const std::string body = cast_request_to_json(req);
  if (body.size() > kMaxRequestBytes)
    throw ContractError("cast request body exceeds 4 MiB");
  return detail::post_with_retry<CastLabel>(
      ep, "/v1/cast", detail::wire_headers(scene_id, estimate), body, policy,
      [](const std::string& resp_body) {
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(resp_body);
        } catch (const nlohmann::json::exception&) {
          throw ProtocolError(ProtocolError::Code::malformed_json,
                              "cast response is not valid JSON");
        }
        if (!j.is_object() || !j.contains("cast") || !j["cast"].is_string())
          throw ProtocolError(ProtocolError::Code::schema,
                              "cast response must be {\"cast\": <label>}");
        const std::string s = j["cast"].get<std::string>();
        const auto label = parse_cast_label(s);
        if (!label)
          throw ProtocolError(ProtocolError::Code::vocabulary,
                              "cast label outside vocabulary: '" + s + "'");
        return *label;
      });
}

inline ColorPrior remote_extract_priors(const std::string& endpoint_url,
                                        const SrgbImage& image,
                                        const std::string& scene_id,
                                        const RetryPolicy& policy = {}) {
  const Endpoint ep = parse_endpoint(endpoint_url);
  const SrgbImage view = resize_shorter_side(image, kOracleViewShortSide);
  nlohmann::json j;
  j["image"] = base64_encode(encode_srgb_png8(view));
  const std::string body = j.dump();
  if (body.size() > kMaxRequestBytes)
    throw ContractError("priors request body exceeds 4 MiB");
  return detail::post_with_retry<ColorPrior>(
      ep, "/v1/priors", detail::wire_headers(scene_id, std::nullopt), body,
      policy, [](const std::string& resp_body) {
        nlohmann::json r;
        try {
          r = nlohmann::json::parse(resp_body);
        } catch (const nlohmann::json::exception&) {
          throw ProtocolError(ProtocolError::Code::malformed_json,
                              "priors response is not valid JSON");
        }
        if (!r.is_object() || !r.contains("items"))
          throw ProtocolError(ProtocolError::Code::schema,
                              "priors response must contain items");
        return prior_items_from_json(r["items"]);
      });
}

// Cast oracle backed by a remote endpoint speaking the /v1 protocol.
class RemoteOracle : public CastOracle {
 public:
  RemoteOracle(std::string endpoint_url, std::string scene_id,
               RetryPolicy policy = {})
      : endpoint_(std::move(endpoint_url)), scene_id_(std::move(scene_id)),
        policy_(policy) {
    parse_endpoint(endpoint_);  // validate eagerly
  }

  CastLabel assess(const SrgbImage& image, const ColorPrior& priors,
                   const AssessContext& ctx) override {
    const CastRequest req =
        make_cast_request(image, priors, "default", ctx.iteration);
    const std::string& sid =
        ctx.scene_id.empty() ? scene_id_ : ctx.scene_id;
    return remote_predict_cast(endpoint_, req, sid, ctx.current_estimate,
                               policy_);
  }

  bool supports_priors() const override { return true; }

  ColorPrior extract_priors(const SrgbImage& image) override {
    return remote_extract_priors(endpoint_, image, scene_id_, policy_);
  }

 private:
  std::string endpoint_;
  std::string scene_id_;
  RetryPolicy policy_;
};

}  // namespace vlmcc
