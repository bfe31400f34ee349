#include <httplib.h>

#include <cmath>
#include <nlohmann/json.hpp>

#include "dattr/app.hpp"

namespace dattr::app {

using nlohmann::json;

namespace {

Response json_response(int status, const json& body) { return Response{status, body.dump()}; }

Response error_response(int status, const std::string& message) {
  return json_response(status, json{{"error", message}});
}

}  // namespace

AttributionService::AttributionService(registry::KeyRegistry registry, bool expose_keys)
    : registry_(std::move(registry)), expose_keys_(expose_keys) {}

Response AttributionService::handle(const std::string& method, const std::string& path,
                                    const std::string& body) const {
  try {
    if (path == "/health") {
      if (method != "GET") return error_response(405, "method not allowed");
      return health();
    }
    if (path == "/registry") {
      if (method != "GET") return error_response(405, "method not allowed");
      return metadata();
    }
    if (path == "/attribute") {
      if (method != "POST") return error_response(405, "method not allowed");
      return attribute(body);
    }
    return error_response(404, "unknown route " + path);
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

Response AttributionService::health() const { return json_response(200, json{{"status", "ok"}}); }

Response AttributionService::metadata() const {
  json j;
  j["dim"] = registry_.dim();
  j["n_keys"] = registry_.size();
  j["delta"] = registry_.delta();
  j["dataset_fingerprint"] = registry::fingerprint_hex(registry_.dataset_fingerprint());
  j["version"] = registry_.version();
  if (expose_keys_) {
    json keys = json::array();
    for (const auto& e : registry_.entries()) {
      keys.push_back(json{{"id", e.key.id}, {"vector", e.key.vector}, {"revoked", e.revoked}});
    }
    j["keys"] = std::move(keys);
  }
  return json_response(200, j);
}

Response AttributionService::attribute(const std::string& body) const {
  json req;
  try {
    req = json::parse(body);
  } catch (const json::exception&) {
    return error_response(400, "body is not valid JSON");
  }
  if (!req.is_object() || !req.contains("vector") || !req.at("vector").is_array())
    return error_response(400, "body must be {\"vector\": [numbers]}");
  const auto& arr = req.at("vector");
  Vec x;
  x.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_number()) return error_response(400, "vector entries must be numbers");
    x.push_back(v.get<double>());
    if (!std::isfinite(x.back())) return error_response(400, "vector entries must be finite");
  }
  if (x.size() != registry_.dim()) {
    return error_response(400, "vector has dimension " + std::to_string(x.size()) + ", registry expects " +
                                   std::to_string(registry_.dim()));
  }
  const auto v = registry::attribute(registry_, x);
  json out;
  out["verdict"] = registry::verdict_name(v.verdict);
  out["model_id"] = v.model_id ? json(*v.model_id) : json(nullptr);
  out["scores"] = v.scores;
  return json_response(200, out);
}

// ---------------------------------------------------------------------------

struct HttpServer::Impl {
  std::shared_ptr<const AttributionService> service;
  httplib::Server server;
};

HttpServer::HttpServer(std::shared_ptr<const AttributionService> service) : impl_(std::make_unique<Impl>()) {
  impl_->service = std::move(service);
  auto forward = [svc = impl_->service](const httplib::Request& req, httplib::Response& res) {
    const Response r = svc->handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  impl_->server.Get(".*", forward);
  impl_->server.Post(".*", forward);
  impl_->server.Put(".*", forward);
  impl_->server.Delete(".*", forward);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->server.bind_to_any_port(host);
    if (p < 0) throw Error(Errc::Io, "cannot bind " + host);
    return p;
  }
  if (!impl_->server.bind_to_port(host, port)) throw Error(Errc::Io, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

bool HttpServer::running() const { return impl_->server.is_running(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace dattr::app
