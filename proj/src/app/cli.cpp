#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "dattr/app.hpp"
#include "dattr/capacity.hpp"
#include "dattr/dataio.hpp"
#include "dattr/keygen.hpp"
#include "dattr/metrics.hpp"
#include "dattr/theory.hpp"

namespace dattr::app {

namespace {

struct DatasetOptions {
  std::string idx;
  std::string labels;
  std::string csv;
  std::string synth;
  std::vector<double> range{-1.0, 1.0};
  std::vector<double> csv_clamp;
  std::size_t limit = 0;

  void add(CLI::App* cmd) {
    auto* g = cmd->add_option_group("dataset", "authentic dataset (exactly one source)");
    g->add_option("--idx", idx, "IDX image file (optionally gzip-compressed)");
    g->add_option("--csv", csv, "CSV matrix, one sample per row");
    g->add_option("--synth", synth, "synthetic dataset spec (JSON)");
    g->require_option(1);
    cmd->add_option("--labels", labels, "IDX label file");
    cmd->add_option("--range", range, "pixel value range lo,hi for IDX data")->delimiter(',')->expected(2);
    cmd->add_option("--csv-clamp", csv_clamp, "clamp bounds lo,hi recorded on CSV data")->delimiter(',')->expected(2);
    cmd->add_option("--limit", limit, "use only the first N samples (IDX)");
  }

  DatasetPtr load() const {
    if (!idx.empty()) {
      std::optional<std::string> lp;
      if (!labels.empty()) lp = labels;
      std::optional<std::size_t> lim;
      if (limit > 0) lim = limit;
      return std::make_shared<DatasetHandle>(dataio::load_idx(idx, lp, {range[0], range[1]}, lim));
    }
    if (!csv.empty()) {
      std::optional<dataio::ValueRange> clamp;
      if (csv_clamp.size() == 2) clamp = dataio::ValueRange{csv_clamp[0], csv_clamp[1]};
      return std::make_shared<DatasetHandle>(dataio::load_csv(csv, csv, clamp));
    }
    return std::make_shared<DatasetHandle>(dataio::load_synth_spec(synth));
  }
};

struct NoiseOptions {
  double sigma = 0.0;
  double mean = 0.0;
  std::string residuals;
  bool empirical = false;

  void add(CLI::App* cmd) {
    cmd->add_option("--noise-sigma", sigma, "isotropic per-component noise std")->check(CLI::NonNegativeNumber);
    cmd->add_option("--noise-mean", mean, "constant per-component noise mean");
    cmd->add_option("--noise-residuals", residuals, "CSV of residual vectors to fit the noise model from");
    cmd->add_flag("--noise-empirical", empirical, "resample fitted residuals instead of a diagonal Gaussian");
  }

  NoisePtr build(std::size_t d) const {
    if (!residuals.empty()) {
      const auto bytes = dataio::read_file(residuals);
      const auto rows = dataio::parse_csv_rows(std::string(bytes.begin(), bytes.end()));
      Vec flat;
      for (const auto& r : rows) {
        require_same_dim(r.size(), d, "noise residuals");
        flat.insert(flat.end(), r.begin(), r.end());
      }
      return std::make_shared<NoiseModel>(watermark::fit_noise(rows.size(), d, flat, empirical));
    }
    return std::make_shared<NoiseModel>(NoiseModel::diagonal(Vec(d, mean), Vec(d, sigma * sigma)));
  }
};

struct GammaOptions {
  double alpha = 1.1;
  std::size_t mc_samples = 5000;
  int max_rounds = 60;
  bool clamp = false;

  void add(CLI::App* cmd) {
    cmd->add_option("--alpha", alpha, "geometric growth factor for gamma")->capture_default_str();
    cmd->add_option("--mc-samples", mc_samples, "Monte-Carlo draws per round")->capture_default_str();
    cmd->add_option("--max-rounds", max_rounds, "round budget")->capture_default_str();
    cmd->add_flag("--clamp", clamp, "clip model outputs to the dataset bounds");
  }

  watermark::GammaSearchConfig config(double delta, std::uint64_t seed) const {
    watermark::GammaSearchConfig c;
    c.delta = delta;
    c.alpha = alpha;
    c.mc_samples = mc_samples;
    c.max_rounds = max_rounds;
    c.seed = seed;
    return c;
  }
};

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::Io, "cannot write '" + path + "'");
  f << text;
}

registry::VectorEncoding parse_encoding(const std::string& s) {
  return s == "base64" ? registry::VectorEncoding::Base64 : registry::VectorEncoding::Decimal;
}

void check_fingerprint(const registry::KeyRegistry& reg, const DatasetHandle& ds, std::ostream& err) {
  if (reg.dataset_fingerprint() != ds.fingerprint()) {
    err << "warning: dataset fingerprint " << registry::fingerprint_hex(ds.fingerprint())
        << " differs from registry " << registry::fingerprint_hex(reg.dataset_fingerprint()) << "\n";
  }
}

}  // namespace

int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Decentralized attribution of generative models with linear keys", "dattr"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value configuration file (command-line flags take precedence)");

  std::uint64_t seed = 0;
  double delta = 0.01;
  std::string registry_path, out_path, encoding = "decimal";
  DatasetOptions data;
  NoiseOptions noise;
  GammaOptions gopt;

  auto add_seed = [&](CLI::App* cmd) { cmd->add_option("--seed", seed, "64-bit seed")->capture_default_str(); };

  // keygen
  auto* keygen_cmd = app.add_subcommand("keygen", "generate data-compliant keys into a new registry");
  int n_keys = 10;
  std::int64_t created_at = 0;
  keygen::KeygenConfig kcfg;
  data.add(keygen_cmd);
  add_seed(keygen_cmd);
  keygen_cmd->add_option("--keys", n_keys, "number of keys")->check(CLI::PositiveNumber)->capture_default_str();
  keygen_cmd->add_option("--out", out_path, "registry output path")->required();
  keygen_cmd->add_option("--delta", delta, "global delta")->capture_default_str();
  keygen_cmd->add_option("--max-iters", kcfg.max_iters)->capture_default_str();
  keygen_cmd->add_option("--batch-size", kcfg.batch_size)->capture_default_str();
  keygen_cmd->add_option("--step-size", kcfg.step_size)->capture_default_str();
  keygen_cmd->add_option("--step-decay", kcfg.step_decay)->capture_default_str();
  keygen_cmd->add_option("--tol", kcfg.tol)->capture_default_str();
  keygen_cmd->add_option("--orthogonality-weight", kcfg.orthogonality_weight)->capture_default_str();
  keygen_cmd->add_option("--compliance-threshold", kcfg.compliance_threshold)->capture_default_str();
  keygen_cmd->add_option("--created-at", created_at, "timestamp stored on every key")->capture_default_str();
  keygen_cmd->add_option("--encoding", encoding, "vector encoding")->check(CLI::IsMember({"decimal", "base64"}));

  // gamma-search
  auto* gamma_cmd = app.add_subcommand("gamma-search", "search the watermark length of every key");
  gamma_cmd->add_option("--registry", registry_path)->required();
  gamma_cmd->add_option("--out", out_path, "updated registry (default: overwrite --registry)");
  data.add(gamma_cmd);
  noise.add(gamma_cmd);
  gopt.add(gamma_cmd);
  add_seed(gamma_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "distinguishability, attributability and perturbation norms");
  std::size_t n_eval = 5000;
  std::string scatter_path;
  eval_cmd->add_option("--registry", registry_path)->required();
  eval_cmd->add_option("--out", out_path, "CSV output (default stdout)");
  eval_cmd->add_option("--scatter", scatter_path, "data file of gamma vs minimum gamma per model");
  eval_cmd->add_option("--n", n_eval, "samples per model")->capture_default_str();
  eval_cmd->add_flag("--clamp", gopt.clamp, "clip model outputs to the dataset bounds");
  data.add(eval_cmd);
  noise.add(eval_cmd);
  add_seed(eval_cmd);

  // robust-eval
  auto* robust_cmd = app.add_subcommand("robust-eval", "before/after grid under post-processing attacks");
  std::vector<std::string> attacks{"blur", "crop", "noise", "jpeg", "combination"};
  int quality = postproc::kDefaultJpegQuality;
  robust_cmd->add_option("--registry", registry_path)->required();
  robust_cmd->add_option("--out", out_path, "CSV output (default stdout)");
  robust_cmd->add_option("--attacks", attacks, "attacks to evaluate")->delimiter(',');
  robust_cmd->add_option("--quality", quality, "JPEG quality")->check(CLI::Range(1, 100))->capture_default_str();
  robust_cmd->add_option("--n", n_eval, "samples per model")->capture_default_str();
  data.add(robust_cmd);
  noise.add(robust_cmd);
  gopt.add(robust_cmd);
  add_seed(robust_cmd);

  // capacity
  auto* cap_cmd = app.add_subcommand("capacity", "greedy estimate of the number of admissible keys");
  capacity::CapacityConfig ccfg;
  double d_max_ceiling = 0.0;
  cap_cmd->add_option("--max-keys", ccfg.max_keys)->capture_default_str();
  cap_cmd->add_option("--restarts", ccfg.restarts)->capture_default_str();
  cap_cmd->add_option("--d-max-ceiling", d_max_ceiling, "reject candidates above this d_max");
  cap_cmd->add_option("--delta", delta)->capture_default_str();
  cap_cmd->add_option("--out", out_path, "registry holding the accepted keys and the report");
  data.add(cap_cmd);
  noise.add(cap_cmd);
  add_seed(cap_cmd);

  // attribute
  auto* attr_cmd = app.add_subcommand("attribute", "attribute every vector of a CSV file");
  std::string input_path;
  attr_cmd->add_option("--registry", registry_path)->required();
  attr_cmd->add_option("--input", input_path, "CSV of query vectors")->required();
  attr_cmd->add_option("--out", out_path, "CSV output (default stdout)");
  add_seed(attr_cmd);

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "HTTP attribution endpoint");
  std::string bind_addr = "127.0.0.1:8080";
  bool expose_keys = false;
  serve_cmd->add_option("--registry", registry_path)->required();
  serve_cmd->add_option("--bind", bind_addr, "host:port")->capture_default_str();
  serve_cmd->add_flag("--expose-keys", expose_keys, "include key vectors in GET /registry");
  add_seed(serve_cmd);

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    if (!app.get_subcommands().empty()) err << "run with --help for usage\n";
    return 2;
  }

  try {
    if (keygen_cmd->parsed()) {
      auto ds = data.load();
      kcfg.seed = seed;
      auto keys = keygen::generate_keys(*ds, n_keys, kcfg);
      registry::KeyRegistry reg(ds->dim(), ds->fingerprint(), delta);
      std::ostringstream summary;
      summary << "id,d_max,d_min,compliance_fraction\n";
      for (auto& k : keys) {
        k.created_at = created_at;
        reg = reg.append(k);
        summary << k.id << ',' << dataio::format_double(k.d_max) << ',' << dataio::format_double(k.d_min) << ','
                << dataio::format_double(k.compliance_fraction) << '\n';
      }
      registry::save(reg, out_path, parse_encoding(encoding));
      out << summary.str();
      if (keys.size() > 1) err << "max off-diagonal gram entry: " << keygen::max_off_diagonal(keys) << "\n";
      return 0;
    }
    if (gamma_cmd->parsed()) {
      auto reg = registry::load(registry_path);
      auto ds = data.load();
      check_fingerprint(reg, *ds, err);
      auto nz = noise.build(ds->dim());
      std::ostringstream table;
      table << "model_id,gamma,rounds,gamma_bound\n";
      const auto entries = reg.entries();
      for (const auto& e : entries) {
        if (e.revoked) continue;
        const auto cfg = gopt.config(reg.delta(), derive_seed(seed, static_cast<std::uint64_t>(e.key.id)));
        const auto res = watermark::gamma_search(e.key, ds, nz, cfg, gopt.clamp);
        const double sigma = projected_std(*nz, e.key);
        reg = reg.with_model(e.key.id, res.gamma, sigma, nz->mean_projection(e.key.vector));
        table << e.key.id << ',' << dataio::format_double(res.gamma) << ',' << res.rounds << ','
              << dataio::format_double(theory::theorem1_min_gamma(e.key, *ds, *nz, reg.delta())) << '\n';
      }
      registry::save(reg, out_path.empty() ? registry_path : out_path);
      out << table.str();
      return 0;
    }
    if (eval_cmd->parsed()) {
      const auto reg = registry::load(registry_path);
      auto ds = data.load();
      check_fingerprint(reg, *ds, err);
      const auto rows = evaluate_registry(reg, ds, noise.build(ds->dim()), n_eval, seed, gopt.clamp);
      write_text(out_path, format_eval_csv(rows), out);
      if (!scatter_path.empty()) write_text(scatter_path, format_scatter(rows), out);
      return 0;
    }
    if (robust_cmd->parsed()) {
      const auto reg = registry::load(registry_path);
      auto ds = data.load();
      check_fingerprint(reg, *ds, err);
      auto nz = noise.build(ds->dim());
      std::vector<RobustRow> rows;
      for (std::size_t a = 0; a < attacks.size(); ++a) {
        postproc::PostProcessSpec spec;
        spec.kind = postproc::parse_kind(attacks[a]);
        spec.quality = quality;
        spec.seed = derive_seed(seed, 0xa77acc, a);
        rows.push_back(robust_grid_row(reg, ds, nz, spec, gopt.config(reg.delta(), seed), n_eval, gopt.clamp));
      }
      write_text(out_path, format_robust_csv(rows), out);
      return 0;
    }
    if (cap_cmd->parsed()) {
      auto ds = data.load();
      auto nz = noise.build(ds->dim());
      if (d_max_ceiling > 0.0) ccfg.d_max_ceiling = d_max_ceiling;
      keygen::KeygenConfig kc;
      kc.seed = seed;
      const auto rep = capacity::estimate_capacity(*ds, *nz, delta, ccfg, kc);
      out << "count," << rep.count << "\n";
      out << "min_pairwise_margin," << dataio::format_double(rep.min_pairwise_margin) << "\n";
      out << "failure_reason," << (rep.failure_reason ? capacity::failure_name(*rep.failure_reason) : "none") << "\n";
      if (!out_path.empty()) {
        registry::KeyRegistry reg(ds->dim(), ds->fingerprint(), delta);
        for (const auto& k : rep.keys) reg = reg.append(k);
        reg = reg.with_capacity({rep.count, rep.min_pairwise_margin, rep.failure_reason});
        registry::save(reg, out_path);
      }
      return 0;
    }
    if (attr_cmd->parsed()) {
      const auto reg = registry::load(registry_path);
      const auto bytes = dataio::read_file(input_path);
      const auto rows = dataio::parse_csv_rows(std::string(bytes.begin(), bytes.end()));
      std::ostringstream os;
      os << "row,verdict,model_id\n";
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto v = registry::attribute(reg, rows[i]);
        os << i << ',' << registry::verdict_name(v.verdict) << ',';
        if (v.model_id) os << *v.model_id;
        os << '\n';
      }
      write_text(out_path, os.str(), out);
      return 0;
    }
    if (serve_cmd->parsed()) {
      auto reg = registry::load(registry_path);
      const auto colon = bind_addr.rfind(':');
      if (colon == std::string::npos) {
        err << "error: --bind expects host:port\n";
        return 2;
      }
      const std::string host = bind_addr.substr(0, colon);
      const int port = std::stoi(bind_addr.substr(colon + 1));
      auto svc = std::make_shared<const AttributionService>(std::move(reg), expose_keys);
      HttpServer server(svc);
      const int bound = server.bind(host, port);
      out << "listening on " << host << ":" << bound << std::endl;
      server.listen();
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

int cli_run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return cli_run(args, std::cout, std::cerr);
}

}  // namespace dattr::app
