#include <doctest.h>
#include <httplib.h>
#include <sys/wait.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

#include "dattr/app.hpp"
#include "dattr/dataio.hpp"
#include "dattr/keygen.hpp"
#include "support.hpp"

using namespace dattr;
using namespace dattr::app;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kGolden = DATTR_GOLDEN_DIR;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("dattr_app_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// runs the installed CLI binary; stdout goes to out_path
int run_cli(const std::string& args, const std::string& out_path) {
  const std::string cmd = std::string(DATTR_CLI_PATH) + " " + args + " > " + out_path + " 2>/dev/null";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

struct InProcess {
  int code;
  std::string out, err;
};

InProcess run_inline(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli_run(args, out, err);
  return {code, out.str(), err.str()};
}

registry::KeyRegistry demo_registry() {
  registry::KeyRegistry r(2, 0, 0.01);
  r = r.append(Key::unit({1.0, 0.0}), 2.0);
  r = r.append(Key::unit({0.0, 1.0}), 2.0);
  return r;
}

DatasetPtr golden_dataset() {
  return std::make_shared<DatasetHandle>(dataio::load_synth_spec(kGolden + "/synth.json"));
}

}  // namespace

TEST_CASE("service routes") {
  const AttributionService svc(demo_registry(), false);
  auto r = svc.handle("GET", "/health", "");
  CHECK(r.status == 200);
  CHECK(json::parse(r.body)["status"] == "ok");

  r = svc.handle("GET", "/registry", "");
  CHECK(r.status == 200);
  auto meta = json::parse(r.body);
  CHECK(meta["dim"] == 2);
  CHECK(meta["n_keys"] == 2);
  CHECK_FALSE(meta.contains("keys"));
  const AttributionService open(demo_registry(), true);
  meta = json::parse(open.handle("GET", "/registry", "").body);
  REQUIRE(meta["keys"].size() == 2);
  CHECK(meta["keys"][1]["vector"] == json::array({0.0, 1.0}));

  r = svc.handle("POST", "/attribute", R"({"vector":[1,-1]})");
  CHECK(r.status == 200);
  auto body = json::parse(r.body);
  CHECK(body["verdict"] == "model");
  CHECK(body["model_id"] == 1);
  body = json::parse(svc.handle("POST", "/attribute", R"({"vector":[-1,-1]})").body);
  CHECK(body["verdict"] == "authentic");
  CHECK(body["model_id"].is_null());
  CHECK(json::parse(svc.handle("POST", "/attribute", R"({"vector":[1,1]})").body)["verdict"] == "ambiguous");

  CHECK(svc.handle("POST", "/attribute", R"({"vector":[1,2,3]})").status == 400);
  CHECK(svc.handle("POST", "/attribute", "nope").status == 400);
  CHECK(svc.handle("POST", "/attribute", R"({"vector":[1,"a"]})").status == 400);
  CHECK(svc.handle("POST", "/attribute", R"({"v":[1,2]})").status == 400);
  CHECK(svc.handle("GET", "/attribute", "").status == 405);
  CHECK(svc.handle("POST", "/health", "").status == 405);
  CHECK(svc.handle("GET", "/nowhere", "").status == 404);
}

TEST_CASE("HTTP server agrees with the library on random queries") {
  Rng rng(17);
  registry::KeyRegistry reg(6, 1, 0.01);
  for (int i = 0; i < 4; ++i) {
    Vec v(6);
    for (double& x : v) x = rng.normal();
    reg = reg.append(Key::unit(v), 1.0);
  }
  auto svc = std::make_shared<const AttributionService>(reg, false);
  HttpServer server(svc);
  const int port = server.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread th([&] { server.listen(); });
  for (int i = 0; i < 500 && !server.running(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  REQUIRE(server.running());

  httplib::Client cli("127.0.0.1", port);
  auto health = cli.Get("/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  int mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    Vec x(6);
    for (double& v : x) v = rng.normal();
    const auto res = cli.Post("/attribute", json{{"vector", x}}.dump(), "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 200);
    const auto body = json::parse(res->body);
    const auto want = registry::attribute(reg, x);
    if (body["verdict"] != registry::verdict_name(want.verdict)) ++mismatches;
    if (want.model_id && body["model_id"] != *want.model_id) ++mismatches;
  }
  CHECK(mismatches == 0);
  auto bad = cli.Post("/attribute", R"({"vector":[1]})", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  server.stop();
  th.join();
}

TEST_CASE("CLI exit codes") {
  TempDir tmp;
  CHECK(run_cli("--help", tmp / "o") == 0);
  CHECK(run_cli("keygen --bogus-flag", tmp / "o") == 2);
  CHECK(run_cli("keygen --synth x.json", tmp / "o") == 2);  // --out missing
  CHECK(run_cli("nosuchcommand", tmp / "o") == 2);
  CHECK(run_cli("keygen --synth /nonexistent/spec.json --out " + (tmp / "r.json"), tmp / "o") == 1);
  CHECK(run_cli("eval --registry /nonexistent/r.json --synth " + kGolden + "/synth.json", tmp / "o") == 1);
  const auto r = run_inline({"keygen", "--synth", "a", "--csv", "b", "--out", tmp / "x"});
  CHECK(r.code == 2);  // two dataset sources
  CHECK(r.err.find("error") != std::string::npos);
}

TEST_CASE("CLI pipeline reproduces the golden files") {
  TempDir tmp;
  const std::string synth = "--synth " + kGolden + "/synth.json";
  const std::string reg = tmp / "registry.json";
  REQUIRE(run_cli("keygen " + synth + " --keys 3 --seed 5 --out " + reg, tmp / "keygen.csv") == 0);
  CHECK(slurp(tmp / "keygen.csv") == slurp(kGolden + "/keygen.csv"));
  CHECK(slurp(reg) == slurp(kGolden + "/registry_keys.json"));
  REQUIRE(run_cli("gamma-search " + synth + " --registry " + reg +
                      " --noise-sigma 0.05 --mc-samples 2000 --seed 5",
                  tmp / "gamma.csv") == 0);
  CHECK(slurp(tmp / "gamma.csv") == slurp(kGolden + "/gamma.csv"));
  CHECK(slurp(reg) == slurp(kGolden + "/registry.json"));
  REQUIRE(run_cli("eval " + synth + " --registry " + reg + " --noise-sigma 0.05 --n 2000 --seed 5 --scatter " +
                      (tmp / "scatter.dat"),
                  tmp / "eval.csv") == 0);
  CHECK(slurp(tmp / "eval.csv") == slurp(kGolden + "/eval.csv"));
  CHECK(slurp(tmp / "scatter.dat") == slurp(kGolden + "/scatter.dat"));

  // the same pipeline through the library
  auto ds = golden_dataset();
  keygen::KeygenConfig kc;
  kc.seed = 5;
  const auto keys = keygen::generate_keys(*ds, 3, kc);
  const auto loaded = registry::load(reg);
  REQUIRE(loaded.size() == keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) CHECK(loaded.entries()[i].key.vector == keys[i].vector);
  auto noise = testing::iso_noise(ds->dim(), 0.05);
  for (const auto& e : loaded.entries()) {
    watermark::GammaSearchConfig cfg;
    cfg.delta = loaded.delta();
    cfg.mc_samples = 2000;
    cfg.seed = derive_seed(5, static_cast<std::uint64_t>(e.key.id));
    CHECK(watermark::gamma_search(e.key, ds, noise, cfg).gamma == *e.gamma);
  }
  CHECK(format_eval_csv(evaluate_registry(loaded, ds, noise, 2000, 5, false)) == slurp(tmp / "eval.csv"));

  // in-process and subprocess runs agree
  const auto inline_run = run_inline({"eval", "--synth", kGolden + "/synth.json", "--registry", reg, "--noise-sigma",
                                      "0.05", "--n", "2000", "--seed", "5"});
  CHECK(inline_run.code == 0);
  CHECK(inline_run.out == slurp(tmp / "eval.csv"));
}

TEST_CASE("eval CSV layout") {
  const std::vector<EvalRow> rows{{1, 0.995, 0.5, 2.25, 2.0, 1.9}, {2, 1.0, 0.25, 3.0, 2.0, 1.9}};
  CHECK(format_eval_csv(rows) == "model_id,D,A_contribution,delta_x_norm\n1,0.995,0.5,2.25\n2,1,0.25,3\n");
  CHECK(format_scatter(rows).find("2 2 1.9 1\n") != std::string::npos);
}

TEST_CASE("CLI attribution of authentic samples") {
  TempDir tmp;
  const std::string reg = tmp / "registry.json";
  REQUIRE(run_inline({"keygen", "--synth", kGolden + "/synth.json", "--keys", "3", "--seed", "9", "--out", reg}).code ==
          0);
  const auto r = registry::load(reg);
  auto ds = golden_dataset();
  {
    std::ofstream csv(tmp / "queries.csv");
    for (std::size_t i = 0; i < ds->size(); ++i) {
      for (std::size_t j = 0; j < ds->dim(); ++j) csv << (j ? "," : "") << dataio::format_double(ds->row(i)[j]);
      csv << "\n";
    }
  }
  const auto res = run_inline({"attribute", "--registry", reg, "--input", tmp / "queries.csv"});
  REQUIRE(res.code == 0);
  std::istringstream lines(res.out);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "row,verdict,model_id");
  std::size_t rows = 0, authentic = 0;
  while (std::getline(lines, line)) {
    ++rows;
    authentic += line.find(",authentic,") != std::string::npos;
  }
  CHECK(rows == ds->size());
  double bound = 1.0;
  for (const auto& e : r.entries()) bound -= 1.0 - e.key.compliance_fraction;
  CHECK(authentic / double(rows) >= bound);
}

TEST_CASE("robust evaluation CSV through the CLI") {
  TempDir tmp;
  const std::string reg = tmp / "registry.json";
  const std::string plain = kGolden + "/synth.json";
  const std::string image = tmp / "image.json";
  std::ofstream(image) << R"({"n": 200, "d": 16, "center": -0.6, "sigma": 0.2, "clamp": [-1, 1], "seed": 7,
                              "layout": {"height": 4, "width": 4}})";
  REQUIRE(run_inline({"keygen", "--synth", image, "--keys", "2", "--seed", "3", "--out", reg}).code == 0);
  REQUIRE(run_inline({"gamma-search", "--synth", image, "--registry", reg, "--mc-samples", "1000"}).code == 0);
  const auto res = run_inline({"robust-eval", "--synth", image, "--registry", reg, "--attacks", "noise,blur", "--n",
                               "200", "--mc-samples", "500"});
  CHECK(res.code == 0);
  std::istringstream lines(res.out);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "attack,D_raw,A_raw,D_bfr,A_bfr,D_aft,A_aft,dx_plain,dx_robust,diverged");
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == 2);
  CHECK(run_inline({"robust-eval", "--synth", image, "--registry", reg, "--attacks", "sharpen"}).code != 0);

  // a dataset without an image layout cannot be attacked
  const std::string reg2 = tmp / "plain.json";
  REQUIRE(run_inline({"keygen", "--synth", plain, "--keys", "1", "--out", reg2}).code == 0);
  REQUIRE(run_inline({"gamma-search", "--synth", plain, "--registry", reg2, "--mc-samples", "1000"}).code == 0);
  CHECK(run_inline({"robust-eval", "--synth", plain, "--registry", reg2, "--attacks", "noise", "--n", "100"}).code ==
        1);
}
