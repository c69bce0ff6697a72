#pragma once

// HTTP classification service.
//
//   POST /v1/classify      raw image/jpeg or image/png body, optional ?top_k=N
//   GET  /v1/labels        {"labels": [...]}
//   GET  /v1/model/info    {"params", "macs", "input_resolution", "format_version"}
//   GET  /v1/health        {"status": "ok", "ready": bool}
//
// Errors are {"error": {"code": string, "message": string}}.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "ycd/bundle.hpp"
#include "ycd/cost.hpp"
#include "ycd/image.hpp"
#include "ycd/model.hpp"

namespace ycd::serve {

inline constexpr std::size_t kDefaultMaxBody = 8u << 20;
inline constexpr std::size_t kMinBodyLimit = 64u << 10;

struct ServiceConfig {
  std::string host = "0.0.0.0";
  int port = 8080;
  std::string model_path;
  std::optional<std::size_t> top_k;  // unset: full distribution
  std::size_t max_body_bytes = kDefaultMaxBody;
  std::vector<std::string> allowed_origins;

  void validate() const {
    if (top_k && *top_k < 1) throw std::invalid_argument("top_k must be >= 1");
    if (max_body_bytes < kMinBodyLimit) throw std::invalid_argument("body limit must be >= 64 KiB");
    if (port < 0 || port > 65535) throw std::invalid_argument("port out of range");
  }
};

/// "host:port", "host" or ":port".
inline void parse_address(std::string_view addr, ServiceConfig& cfg) {
  const auto colon = addr.rfind(':');
  if (colon == std::string_view::npos) {
    if (!addr.empty()) cfg.host = std::string(addr);
    return;
  }
  if (colon > 0) cfg.host = std::string(addr.substr(0, colon));
  const std::string port(addr.substr(colon + 1));
  try {
    std::size_t used = 0;
    const int p = std::stoi(port, &used);
    if (used != port.size()) throw std::invalid_argument(port);
    cfg.port = p;
  } catch (const std::exception&) {
    throw std::invalid_argument("bad port in address '" + std::string(addr) + "'");
  }
}

struct Prediction {
  std::string label;
  float probability = 0.0f;
};

struct Reply {
  int status = 200;
  nlohmann::json body;
};

inline Reply error_reply(int status, std::string code, std::string message) {
  return {status, {{"error", {{"code", std::move(code)}, {"message", std::move(message)}}}}};
}

/// Probabilities sorted descending; equal probabilities keep label order.
inline std::vector<Prediction> rank_predictions(const std::vector<std::string>& labels,
                                                std::span<const float> probs, std::size_t top_k) {
  std::vector<Prediction> out;
  for (std::size_t i = 0; i < labels.size(); ++i) out.push_back({labels[i], probs[i]});
  std::stable_sort(out.begin(), out.end(),
                   [](const Prediction& a, const Prediction& b) { return a.probability > b.probability; });
  out.resize(std::min(top_k, out.size()));
  return out;
}

/// Holds one immutable model and answers requests against it; safe to call
/// from many server threads at once.
class ClassificationService {
 public:
  explicit ClassificationService(ServiceConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const ServiceConfig& config() const { return cfg_; }

  void set_model(ModelBundle bundle) {
    validate(bundle);
    auto m = std::make_shared<const Loaded>(Loaded{std::move(bundle), {}});
    const_cast<Loaded&>(*m).costs = nn::count_costs(m->bundle.arch);
    std::lock_guard lock(mutex_);
    model_ = std::move(m);
  }

  void load_model_file(const std::string& path) { set_model(load_bundle(path)); }

  bool ready() const { return snapshot() != nullptr; }

  std::uint64_t requests_served() const { return requests_.load(); }

  Reply health() const { return {200, {{"status", "ok"}, {"ready", ready()}}}; }

  Reply labels() const {
    const auto m = snapshot();
    if (!m) return not_ready();
    return {200, {{"labels", m->bundle.labels}}};
  }

  Reply model_info() const {
    const auto m = snapshot();
    if (!m) return not_ready();
    return {200,
            {{"params", m->costs.total_params},
             {"macs", m->costs.total_macs},
             {"input_resolution", m->bundle.arch.effective_resolution()},
             {"format_version", m->bundle.format_version}}};
  }

  /// `too_large` marks a body that was cut off at the configured limit.
  Reply classify(std::span<const std::uint8_t> body, std::string_view content_type,
                 std::optional<std::size_t> top_k_override = std::nullopt, bool too_large = false) const {
    ++requests_;
    const auto m = snapshot();
    if (!m) return not_ready();
    const auto media = content_type.substr(0, content_type.find(';'));
    if (media != "image/jpeg" && media != "image/png")
      return error_reply(415, "unsupported_media_type",
                         "content type must be image/jpeg or image/png, got '" + std::string(content_type) + "'");
    if (too_large || body.size() > cfg_.max_body_bytes)
      return error_reply(400, "body_too_large",
                         "request body exceeds " + std::to_string(cfg_.max_body_bytes) + " bytes");
    if (body.empty()) return error_reply(400, "empty_body", "request body is empty");

    const auto start = std::chrono::steady_clock::now();
    ForwardResult result;
    try {
      const Tensor image = preprocess_bytes(body, m->bundle.arch.effective_resolution());
      result = forward(m->bundle, image);
    } catch (const ImageError& e) {
      return error_reply(400, "undecodable_image", e.what());
    }
    const double latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

    const std::size_t k = top_k_override.value_or(cfg_.top_k.value_or(m->bundle.labels.size()));
    nlohmann::json preds = nlohmann::json::array();
    for (const auto& p : rank_predictions(m->bundle.labels, result.probs, k))
      preds.push_back({{"label", p.label}, {"probability", p.probability}});
    return {200, {{"predictions", std::move(preds)}, {"latency_ms", latency_ms}}};
  }

  /// Registers routes and CORS handling on `server`.
  void mount(httplib::Server& server) const {
    auto send = [this](const httplib::Request& req, httplib::Response& res, const Reply& reply) {
      res.status = reply.status;
      res.set_content(reply.body.dump(), "application/json");
      add_cors_headers(req, res);
    };

    server.Get("/v1/health", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(req, res, health());
    });
    server.Get("/v1/labels", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(req, res, labels());
    });
    server.Get("/v1/model/info", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(req, res, model_info());
    });
    server.Post("/v1/classify", [this, send](const httplib::Request& req, httplib::Response& res,
                                             const httplib::ContentReader& reader) {
      std::optional<std::size_t> top_k;
      if (req.has_param("top_k")) {
        const auto raw = req.get_param_value("top_k");
        const bool digits = !raw.empty() && raw.size() <= 9 &&
                            std::all_of(raw.begin(), raw.end(), [](unsigned char c) { return std::isdigit(c); });
        const std::size_t v = digits ? std::stoul(raw) : 0;
        if (v < 1) {
          send(req, res, error_reply(400, "invalid_parameter", "top_k must be a positive integer"));
          res.set_header("Connection", "close");
          return;
        }
        top_k = v;
      }
      const auto declared = req.get_header_value_u64("Content-Length");
      if (declared > cfg_.max_body_bytes) {
        send(req, res, classify({}, req.get_header_value("Content-Type"), top_k, true));
        res.set_header("Connection", "close");
        return;
      }
      std::vector<std::uint8_t> body;
      bool overflow = false;
      reader([&](const char* data, std::size_t len) {
        if (overflow || body.size() + len > cfg_.max_body_bytes) {
          overflow = true;
          return true;  // drain the rest of the body
        }
        body.insert(body.end(), data, data + len);
        return true;
      });
      send(req, res, classify(body, req.get_header_value("Content-Type"), top_k, overflow));
    });
    server.Options(R"(/v1/.*)", [this](const httplib::Request& req, httplib::Response& res) {
      res.status = 204;
      add_cors_headers(req, res);
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.set_header("Access-Control-Max-Age", "600");
    });
    server.set_payload_max_length(std::max<std::size_t>(cfg_.max_body_bytes * 2, kMinBodyLimit));
  }

 private:
  struct Loaded {
    ModelBundle bundle;
    nn::CostReport costs;
  };

  std::shared_ptr<const Loaded> snapshot() const {
    std::lock_guard lock(mutex_);
    return model_;
  }

  static Reply not_ready() { return error_reply(503, "model_not_loaded", "no model is loaded"); }

  void add_cors_headers(const httplib::Request& req, httplib::Response& res) const {
    if (!req.has_header("Origin") || cfg_.allowed_origins.empty()) return;
    const auto origin = req.get_header_value("Origin");
    const auto& allowed = cfg_.allowed_origins;
    if (std::find(allowed.begin(), allowed.end(), "*") != allowed.end()) {
      res.set_header("Access-Control-Allow-Origin", "*");
    } else if (std::find(allowed.begin(), allowed.end(), origin) != allowed.end()) {
      res.set_header("Access-Control-Allow-Origin", origin);
      res.set_header("Vary", "Origin");
    }
  }

  ServiceConfig cfg_;
  mutable std::mutex mutex_;
  std::shared_ptr<const Loaded> model_;
  mutable std::atomic<std::uint64_t> requests_{0};
};

}  // namespace ycd::serve
