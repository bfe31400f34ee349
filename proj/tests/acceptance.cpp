// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <httplib.h>
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

#include "dattr/app.hpp"
#include "dattr/capacity.hpp"
#include "dattr/dataio.hpp"
#include "dattr/keygen.hpp"
#include "dattr/metrics.hpp"
#include "dattr/registry.hpp"
#include "dattr/theory.hpp"
#include "dattr/watermark.hpp"

using namespace dattr;
namespace fs = std::filesystem;

namespace {

constexpr double kDelta = 0.01;
const std::string kData = DATTR_DATA_DIR;
const std::string kGolden = DATTR_GOLDEN_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

double binom3(double p, double n) { return 3.0 * std::sqrt(p * (1.0 - p) / n); }

// shared fixtures, built lazily so each criterion's time includes what it needs
struct Shared {
  DatasetPtr mnist;
  std::vector<Key> mnist_keys;  // 20 compliant, near-orthogonal
  NoisePtr mnist_noise;
  std::vector<watermark::GammaSearchResult> plain;  // gamma_search per key

  const DatasetPtr& dataset() {
    if (!mnist) {
      mnist = std::make_shared<DatasetHandle>(dataio::load_idx(kData + "/mnist5k-images-idx3-ubyte.gz",
                                                               kData + "/mnist5k-labels-idx1-ubyte.gz"));
      mnist_noise = std::make_shared<NoiseModel>(NoiseModel::isotropic(mnist->dim(), 0.05));
    }
    return mnist;
  }
  const std::vector<Key>& keys() {
    if (mnist_keys.empty()) {
      keygen::KeygenConfig cfg;
      cfg.seed = 2024;
      mnist_keys = keygen::generate_keys(*dataset(), 20, cfg);
    }
    return mnist_keys;
  }
  watermark::GammaSearchConfig search_cfg(std::size_t i) const {
    watermark::GammaSearchConfig cfg;
    cfg.delta = kDelta;
    cfg.seed = derive_seed(77, i);
    return cfg;
  }
  const std::vector<watermark::GammaSearchResult>& plain_models() {
    if (plain.empty()) {
      for (std::size_t i = 0; i < keys().size(); ++i)
        plain.push_back(watermark::gamma_search(keys()[i], dataset(), mnist_noise, search_cfg(i)));
    }
    return plain;
  }
};

Shared shared;

DatasetHandle synth16(std::uint64_t seed) {
  Vec center(16);
  Rng rng(seed);
  for (double& c : center) c = -0.5 - 0.5 * rng.uniform();
  return dataio::synth_gaussian(2000, 16, center, 0.25, std::nullopt, seed);
}

// ---------------------------------------------------------------------------

Outcome c1_prop1() {
  std::size_t checked = 0, positive = 0;
  auto check = [&](const DatasetHandle& ds, const std::vector<Key>& keys) {
    for (const Key& k : keys) {
      const Vec dx = theory::prop1_perturbation(k, ds);
      Vec x(ds.dim());
      for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto row = ds.row(i);
        for (std::size_t j = 0; j < x.size(); ++j) x[j] = row[j] + dx[j];
        ++checked;
        positive += dot(k.vector, x) > 0.0;
      }
    }
  };
  check(*shared.dataset(), shared.keys());
  const auto s = synth16(1);
  keygen::KeygenConfig cfg;
  cfg.seed = 1;
  check(s, keygen::generate_keys(s, 20, cfg));
  return {checked > 0 && positive == checked, std::to_string(positive) + "/" + std::to_string(checked) + " positive"};
}

Outcome c2_min_gamma() {
  const auto ds = std::make_shared<DatasetHandle>(synth16(2));
  Rng rng(22);
  const double scales[] = {0.05, 0.1, 0.5};
  const std::size_t n = 10000;
  const double floor = 0.995 - binom3(0.995, n);
  double worst = 1.0;
  int keys = 0;
  for (int attempt = 0; keys < 50 && attempt < 10000; ++attempt) {
    Vec v(16);
    for (std::size_t j = 0; j < 16; ++j) v[j] = -ds->mean()[j] + 0.4 * rng.normal();
    const Key k = keygen::with_stats(Key::unit(v), *ds);
    if (k.compliance_fraction < 1.0) continue;
    // diagonal noise with random shape, scaled so that sigma(phi) hits the target
    const double target = scales[keys % 3] * k.d_max;
    Vec var(16), mean(16);
    for (std::size_t j = 0; j < 16; ++j) {
      var[j] = std::pow(rng.uniform(0.2, 1.0), 2);
      mean[j] = 0.01 * rng.normal();
    }
    double proj = 0.0;
    for (std::size_t j = 0; j < 16; ++j) proj += k.vector[j] * k.vector[j] * var[j];
    for (double& x : var) x *= target * target / proj;
    auto noise = std::make_shared<NoiseModel>(NoiseModel::diagonal(mean, var));
    const double gamma = theory::theorem1_min_gamma(k, *ds, *noise, kDelta);
    const WatermarkModel m(ds, k, gamma, noise, false);
    worst = std::min(worst, metrics::distinguishability(m, *ds, n, derive_seed(2, keys)));
    ++keys;
  }
  return {keys == 50 && worst >= floor, "min D " + fmt(worst, 5) + " over " + std::to_string(keys) +
                                            " keys, floor " + fmt(floor, 5)};
}

Outcome c3_orthogonal() {
  const auto& keys = shared.keys();
  const double gram = keygen::max_off_diagonal(keys);
  std::vector<WatermarkModel> models;
  for (const auto& r : shared.plain_models()) models.push_back(r.model);
  bool compliant = true;
  for (const Key& k : keys) compliant = compliant && k.compliance_fraction == 1.0;
  const double a = metrics::attributability(models, keys, 5000, 31);
  const double bound = theory::attributability_lower_bound(static_cast<int>(keys.size()), kDelta);
  return {compliant && gram <= 1e-2 && a >= bound,
          "A " + fmt(a) + " >= " + fmt(bound) + ", max gram " + fmt(gram, 3)};
}

Outcome c4_collapse() {
  const auto& ds = shared.dataset();
  auto tilted = keygen::make_equiangular_keys(shared.keys(), 45.0);
  std::vector<WatermarkModel> models;
  double min_d = 1.0;
  for (std::size_t i = 0; i < tilted.size(); ++i) {
    tilted[i] = keygen::with_stats(tilted[i], *ds);
    const auto r = watermark::gamma_search(tilted[i], ds, shared.mnist_noise, shared.search_cfg(i));
    models.push_back(r.model);
    min_d = std::min(min_d, metrics::distinguishability(r.model, *ds, 5000, derive_seed(4, i)));
  }
  const double a = metrics::attributability(models, tilted, 5000, 41);
  const auto g = keygen::gram_matrix(tilted);
  return {min_d >= 0.97 && a <= 0.5,
          "min D " + fmt(min_d) + ", A " + fmt(a) + ", inner product " + fmt(g[1], 3)};
}

Outcome c5_reduction() {
  Rng rng(5);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t d = 2 + rng.index(30);
    Vec center(d);
    for (double& c : center) c = rng.normal();
    const auto ds = dataio::synth_gaussian(50 + rng.index(200), d, center, rng.uniform(0.1, 2.0), std::nullopt,
                                           rng.next_u64());
    Vec v(d), w(d);
    for (double& x : v) x = rng.normal();
    for (double& x : w) x = rng.normal();
    const Key other = keygen::with_stats(Key::unit(v), ds);
    const double a = theory::theorem2_rhs(Key::unit(w), other, ds, NoiseModel::zero(d), kDelta);
    worst = std::max(worst, std::abs(a - other.d_min / other.d_max));
  }
  return {worst <= 1e-9, "max deviation " + fmt(worst, 3)};
}

Outcome c6_oracle() {
  Rng rng(6);
  double worst = 0.0, lo = 1.0, hi = 0.0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t d = 4 + rng.index(28);
    Vec center(d);
    for (double& c : center) c = -std::abs(rng.normal()) - 0.1;
    auto ds = std::make_shared<DatasetHandle>(
        dataio::synth_gaussian(200 + rng.index(300), d, center, rng.uniform(0.1, 0.5), std::nullopt, rng.next_u64()));
    Vec v(d), mean(d), var(d);
    for (double& x : v) x = 1.0 + 0.5 * rng.normal();
    for (std::size_t j = 0; j < d; ++j) {
      mean[j] = 0.05 * rng.normal();
      var[j] = std::pow(rng.uniform(0.05, 1.0), 2);
    }
    const Key k = keygen::with_stats(Key::unit(v), *ds);
    const WatermarkModel m(ds, k, rng.uniform(0.3, 1.5) * k.d_max,
                           std::make_shared<NoiseModel>(NoiseModel::diagonal(mean, var)), false);
    const double exact = metrics::distinguishability_analytic(m, *ds);
    lo = std::min(lo, exact);
    hi = std::max(hi, exact);
    worst = std::max(worst, std::abs(metrics::distinguishability(m, *ds, 10000, rng.next_u64()) - exact));
  }
  return {worst <= 0.01, "max |MC - analytic| " + fmt(worst, 4) + " over D in [" + fmt(lo) + ", " + fmt(hi) + "]"};
}

Outcome c7_search() {
  bool geometric = true, terminated = true;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const std::size_t d = 8 + s;
    Rng rng(700 + s);
    Vec center(d);
    for (double& c : center) c = -0.5 - rng.uniform();
    auto ds = std::make_shared<DatasetHandle>(dataio::synth_gaussian(500, d, center, 0.3, std::nullopt, s));
    Vec v(d);
    for (std::size_t j = 0; j < d; ++j) v[j] = -center[j];
    const Key k = keygen::with_stats(Key::unit(v), *ds);
    auto noise = std::make_shared<NoiseModel>(NoiseModel::isotropic(d, rng.uniform(0.05, 1.0)));
    watermark::GammaSearchConfig cfg;
    cfg.seed = s;
    const auto r = watermark::gamma_search(k, ds, noise, cfg);
    for (std::size_t i = 1; i < r.gamma_history.size(); ++i)
      geometric = geometric && std::abs(r.gamma_history[i] / r.gamma_history[i - 1] - 1.1) <= 1e-12;
    geometric = geometric && r.gamma_history.front() == k.d_max;
    const double bound = theory::theorem1_min_gamma(k, *ds, *noise, cfg.delta);
    const int limit = static_cast<int>(std::ceil(std::log(bound / k.d_max) / std::log(1.1))) + 1;
    terminated = terminated && r.rounds <= std::max(limit, 1);
  }

  // clamping to the pixel bounds on MNIST
  const auto& keys = shared.keys();
  const auto& plain = shared.plain_models();
  int larger = 0;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const auto r = watermark::gamma_search(keys[i], shared.dataset(), shared.mnist_noise, shared.search_cfg(i), true);
    larger += r.gamma > plain[i].gamma;
  }
  const double frac = larger / double(keys.size());
  return {geometric && terminated && frac >= 0.8, std::string("geometric ") + (geometric ? "yes" : "no") +
                                                     ", round limit " + (terminated ? "held" : "exceeded") +
                                                     ", clamped gamma larger on " + fmt(frac) + " of keys"};
}

Outcome c8_robust() {
  const auto& ds = shared.dataset();
  const auto& plain_all = shared.plain_models();
  std::vector<Key> keys(shared.keys().begin(), shared.keys().begin() + 10);
  postproc::PostProcessSpec attack;
  attack.kind = postproc::Kind::Noise;
  attack.seed = 808;
  std::vector<WatermarkModel> plain, robust;
  bool norms = true;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    plain.push_back(plain_all[i].model);
    robust.push_back(
        watermark::robust_gamma_search(keys[i], ds, shared.mnist_noise, attack, shared.search_cfg(i)).model);
    norms = norms && metrics::perturbation_norm(robust[i], 5000, derive_seed(8, i)) >=
                         metrics::perturbation_norm(plain[i], 5000, derive_seed(8, i));
  }
  const auto before = app::robust_evaluate(plain, keys, attack, 5000, 88);
  const auto after = app::robust_evaluate(robust, keys, attack, 5000, 88);
  const double a_bfr = *before.after.attributability, a_aft = *after.after.attributability;
  const double d_aft = after.after.distinguishability;
  return {a_bfr < a_aft && d_aft >= 0.9 && norms, "attacked A " + fmt(a_bfr) + " -> " + fmt(a_aft) +
                                                      ", robust attacked D " + fmt(d_aft) + ", norms " +
                                                      (norms ? "ordered" : "not ordered")};
}

Outcome c9_bounds() {
  Rng rng(9);
  const int n = 1000000;
  bool tail = true;
  std::string detail;
  for (double y : {0.5, 1.0, 2.0, 3.0}) {
    const double sigma = 0.8;
    int below = 0;
    for (int i = 0; i < n; ++i) below += sigma * rng.normal() <= sigma * y;
    const double bound = 1.0 - std::exp(-y * y / 2.0);
    tail = tail && below / double(n) >= bound - binom3(bound, n);
  }
  int union_ok = 0;
  for (int t = 0; t < 1000; ++t) {
    const double rho = rng.uniform(-0.95, 0.95), ta = rng.uniform(-1.5, 2.5), tb = rng.uniform(-1.5, 2.5);
    const int m = 1000;
    int not_a = 0, not_b = 0, both = 0;
    for (int i = 0; i < m; ++i) {
      const double z1 = rng.normal(), z2 = rho * z1 + std::sqrt(1.0 - rho * rho) * rng.normal();
      const bool a = z1 <= ta, b = z2 <= tb;
      not_a += !a;
      not_b += !b;
      both += a && b;
    }
    union_ok += both >= m - not_a - not_b;
  }
  return {tail && union_ok == 1000,
          std::string("tail bound ") + (tail ? "held" : "failed") + ", union bound " + std::to_string(union_ok) + "/1000"};
}

Outcome c10_capacity() {
  const double s = 1.0 / std::sqrt(3.0);
  const auto ds = dataio::synth_gaussian(300, 3, {-s, -s, -s}, 0.01, std::nullopt, 10);
  const auto zero = NoiseModel::zero(3);
  keygen::KeygenConfig kc;
  kc.seed = 10;
  const auto rep = capacity::estimate_capacity(ds, zero, kDelta, {}, kc);
  const std::vector<NoiseModel> noises(rep.keys.size(), zero);
  const auto check = theory::check_pairwise_condition(rep.keys, noises, ds, kDelta);
  return {rep.count >= 3 && check.violations == 0,
          "count " + std::to_string(rep.count) + ", violations " + std::to_string(check.violations)};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Outcome c11_plumbing() {
  const fs::path tmp = fs::temp_directory_path() / ("dattr_accept_" + std::to_string(::getpid()));
  fs::create_directories(tmp);
  std::vector<std::string> failed;

  // registry
  Rng rng(11);
  registry::KeyRegistry reg(12, rng.next_u64(), kDelta);
  for (int i = 0; i < 30; ++i) {
    Vec v(12);
    for (double& x : v) x = rng.normal();
    Key k = Key::unit(v);
    k.d_max = rng.uniform(0, 3);
    k.d_min = rng.uniform(0, k.d_max);
    k.compliance_fraction = 1.0;
    reg = reg.append(k, rng.uniform(0, 5), rng.uniform(0, 1), rng.normal());
  }
  reg = reg.revoke(4);
  for (auto enc : {registry::VectorEncoding::Decimal, registry::VectorEncoding::Base64}) {
    const std::string a = (tmp / "a.json").string(), b = (tmp / "b.json").string();
    registry::save(reg, a, enc);
    const auto back = registry::load(a);
    registry::save(back, b, enc);
    if (!(back == reg) || slurp(a) != slurp(b)) failed.push_back("registry");
  }

  // IDX
  dataio::IdxImages img{25, 7, 6, {}};
  for (int i = 0; i < 25 * 42; ++i) img.pixels.push_back(static_cast<std::uint8_t>(rng.index(256)));
  const auto bytes = dataio::encode_idx_images(img);
  dataio::write_file((tmp / "i.idx").string(), bytes);
  const auto ds = dataio::load_idx((tmp / "i.idx").string(), std::nullopt);
  dataio::IdxImages back{25, 7, 6, {}};
  for (double v : ds.samples()) back.pixels.push_back(dataio::to_pixel(v, {}));
  if (dataio::encode_idx_images(back) != bytes || dataio::read_file((tmp / "i.idx").string()) != bytes)
    failed.push_back("idx");

  // HTTP
  {
    auto svc = std::make_shared<const app::AttributionService>(reg, false);
    app::HttpServer server(svc);
    const int port = server.bind("127.0.0.1", 0);
    std::thread th([&] { server.listen(); });
    for (int i = 0; i < 500 && !server.running(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
    httplib::Client cli("127.0.0.1", port);
    int agree = 0;
    for (int t = 0; t < 1000; ++t) {
      Vec x(12);
      for (double& v : x) v = rng.normal();
      const auto res = cli.Post("/attribute", nlohmann::json{{"vector", x}}.dump(), "application/json");
      if (!res || res->status != 200) continue;
      const auto body = nlohmann::json::parse(res->body);
      const auto want = registry::attribute(reg, x);
      const bool same_id = want.model_id ? body["model_id"] == *want.model_id : body["model_id"].is_null();
      agree += body["verdict"] == registry::verdict_name(want.verdict) && same_id;
    }
    server.stop();
    th.join();
    if (agree != 1000) failed.push_back("http " + std::to_string(agree) + "/1000");
  }

  // CLI golden files
  const std::string cli = DATTR_CLI_PATH, synth = "--synth " + kGolden + "/synth.json";
  const std::string r = (tmp / "r.json").string();
  auto run = [&](const std::string& args, const std::string& out) {
    const int rc = std::system((cli + " " + args + " > " + out + " 2>/dev/null").c_str());
    return WIFEXITED(rc) && WEXITSTATUS(rc) == 0;
  };
  const std::string o = (tmp / "out").string();
  bool golden = run("keygen " + synth + " --keys 3 --seed 5 --out " + r, o + "1") &&
                slurp(o + "1") == slurp(kGolden + "/keygen.csv") && slurp(r) == slurp(kGolden + "/registry_keys.json");
  golden = golden &&
           run("gamma-search " + synth + " --registry " + r + " --noise-sigma 0.05 --mc-samples 2000 --seed 5",
               o + "2") &&
           slurp(o + "2") == slurp(kGolden + "/gamma.csv") && slurp(r) == slurp(kGolden + "/registry.json");
  golden = golden &&
           run("eval " + synth + " --registry " + r + " --noise-sigma 0.05 --n 2000 --seed 5 --scatter " + o + "s",
               o + "3") &&
           slurp(o + "3") == slurp(kGolden + "/eval.csv") && slurp(o + "s") == slurp(kGolden + "/scatter.dat");
  if (!golden) failed.push_back("golden");
  fs::remove_all(tmp);

  std::string detail = "registry, idx, http 1000/1000, golden files";
  if (!failed.empty()) {
    detail = "failed:";
    for (const auto& f : failed) detail += " " + f;
  }
  return {failed.empty(), detail};
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;  // 0 = no limit
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> all{
      {1, "optimal perturbation exactness", 10, c1_prop1},
      {2, "minimum gamma Monte-Carlo", 60, c2_min_gamma},
      {3, "attributability with near-orthogonal keys", 300, c3_orthogonal},
      {4, "45 degree collapse", 300, c4_collapse},
      {5, "noiseless pairwise bound", 0, c5_reduction},
      {6, "estimator vs analytic D", 0, c6_oracle},
      {7, "gamma search behaviour", 0, c7_search},
      {8, "robustness trade-off", 300, c8_robust},
      {9, "tail and union bounds", 0, c9_bounds},
      {10, "capacity", 0, c10_capacity},
      {11, "plumbing", 0, c11_plumbing},
  };
  int failures = 0;
  for (const auto& c : all) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool pass = o.pass;
    if (c.limit_s > 0 && secs > c.limit_s) {
      pass = false;
      o.detail += ", over the " + fmt(c.limit_s) + " s limit";
    }
    failures += !pass;
    std::printf("C%-2d %s  %s: %s [%.1fs]\n", c.id, pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
