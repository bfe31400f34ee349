#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "dattr/core.hpp"
#include "dattr/postproc.hpp"
#include "dattr/registry.hpp"
#include "dattr/watermark.hpp"

namespace dattr::app {

// ---------------------------------------------------------------------------
// experiment drivers shared by the CLI, the bindings and the golden tests

// Models for every registry entry that carries a gamma; throws
// InvalidArgument if an entry has none.
std::vector<WatermarkModel> models_from_registry(const registry::KeyRegistry& reg, const DatasetPtr& dataset,
                                                 const NoisePtr& noise, bool clamp);

struct EvalRow {
  int model_id = 0;
  double distinguishability = 0.0;
  double a_contribution = 0.0;  // model's one-hot success rate / N; rows sum to A
  double delta_x_norm = 0.0;
  double gamma = 0.0;
  double theorem1_gamma = 0.0;  // closed-form minimum gamma for this model's noise
};

std::vector<EvalRow> evaluate_registry(const registry::KeyRegistry& reg, const DatasetPtr& dataset,
                                       const NoisePtr& noise, std::size_t n, std::uint64_t seed, bool clamp);
std::string format_eval_csv(const std::vector<EvalRow>& rows);
// whitespace-separated: model_id gamma theorem1_gamma D
std::string format_scatter(const std::vector<EvalRow>& rows);

struct RobustRow {
  std::string attack;
  double d_raw = 0.0, a_raw = 0.0;  // non-robust models, no attack
  double d_bfr = 0.0, a_bfr = 0.0;  // non-robust models, attacked
  double d_aft = 0.0, a_aft = 0.0;  // robust-gamma models, attacked
  double dx_plain = 0.0, dx_robust = 0.0;  // mean perturbation norms
  int diverged = 0;                        // keys whose robust search diverged (kept at plain gamma)
};

struct RobustEvalResult {
  MetricsReport before;
  MetricsReport after;
};

// D averaged over models and A, on raw and on attacked model draws.
RobustEvalResult robust_evaluate(std::span<const WatermarkModel> models, std::span<const Key> keys,
                                 const postproc::PostProcessSpec& attack, std::size_t n, std::uint64_t seed);

RobustRow robust_grid_row(const registry::KeyRegistry& reg, const DatasetPtr& dataset, const NoisePtr& noise,
                          const postproc::PostProcessSpec& attack, const watermark::GammaSearchConfig& cfg,
                          std::size_t n, bool clamp);
std::string format_robust_csv(const std::vector<RobustRow>& rows);

// ---------------------------------------------------------------------------
// HTTP attribution service

struct Response {
  int status = 200;
  std::string body;  // JSON
};

class AttributionService {
 public:
  AttributionService(registry::KeyRegistry registry, bool expose_keys);

  // Pure request handler; the network server only forwards to it.
  Response handle(const std::string& method, const std::string& path, const std::string& body) const;

  const registry::KeyRegistry& registry() const { return registry_; }

 private:
  Response health() const;
  Response metadata() const;
  Response attribute(const std::string& body) const;

  registry::KeyRegistry registry_;
  bool expose_keys_;
};

class HttpServer {
 public:
  explicit HttpServer(std::shared_ptr<const AttributionService> service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds host:port (port 0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port);
  void listen();  // blocks until stop()
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// ---------------------------------------------------------------------------
// CLI: exit 0 on success, 2 on usage errors, 1 on runtime errors.

int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_run(int argc, char** argv);

}  // namespace dattr::app
