#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include "doctest.h"
#include "mvlab/csv.hpp"
#include "mvlab/experiment.hpp"

using namespace mvlab;
using lab::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch() {
  static const fs::path dir = fs::temp_directory_path() / ("mv_ergo_test_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

std::string binary() {
  const char* b = std::getenv("MV_ERGO_BIN");
  return b ? b : "";
}

struct Run {
  int code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Run mv_ergo(const std::string& args) {
  const fs::path o = scratch() / "stdout.txt", e = scratch() / "stderr.txt";
  const std::string cmd = "'" + binary() + "' " + args + " >'" + o.string() + "' 2>'" + e.string() + "'";
  const int st = std::system(cmd.c_str());
  return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, slurp(o), slurp(e)};
}

fs::path write_config(const std::string& name, const json& j) {
  const fs::path p = scratch() / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

json decay_config() {
  return {{"experiment", "w2-decay"},
          {"seed", 7},
          {"model", {{"name", "ou"}, {"params", {{"theta", 1.0}, {"sigma", 1.4142135623730951}}}}},
          {"sim", {{"dt", 1e-2}, {"t_end", 2.0}, {"n_particles", 512}}},
          {"init", {{"type", "dirac"}, {"point", {3.0}}}},
          {"params",
           {{"sample_times", {0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4}},
            {"reference", {{"type", "gaussian"}, {"mean", {0.0}}, {"cov", {{1.0}}}}}}}};
}

}  // namespace

TEST_CASE("config validation reports field paths") {
  auto bad = decay_config();
  bad["sim"]["dt"] = -1.0;
  CHECK_THROWS_WITH_AS(lab::parse_config(bad), doctest::Contains("sim.dt"), lab::SchemaError);

  bad = decay_config();
  bad["sim"]["stepsize"] = 0.1;
  CHECK_THROWS_WITH_AS(lab::parse_config(bad), doctest::Contains("sim.stepsize: unknown key"), lab::SchemaError);

  bad = decay_config();
  bad["model"]["params"]["gamma"] = 1.0;
  CHECK_THROWS_WITH_AS(lab::parse_config(bad), doctest::Contains("model.params.gamma"), lab::SchemaError);

  bad = decay_config();
  bad["init"]["point"] = {1.0, 2.0};
  CHECK_THROWS_WITH_AS(lab::parse_config(bad), doctest::Contains("init.point"), lab::SchemaError);

  bad = decay_config();
  bad["params"]["sample_times"] = {0.0, 0.001};
  CHECK_THROWS_AS(lab::parse_config(bad), lab::SchemaError);

  CHECK_THROWS_WITH_AS(lab::parse_config(decay_config(), "phi"), doctest::Contains("subcommand"), lab::SchemaError);

  auto ok = lab::parse_config(decay_config());
  CHECK(ok.sim.seed == 7);
  CHECK(ok.params["cap"] == measures::kExactCap);
  CHECK(ok.model_params.at("theta") == 1.0);
}

TEST_CASE("linear stationary law from the Lyapunov equation") {
  json cfg = {{"model", {{"name", "kinetic_gradient"}}},
              {"sim", {{"dt", 1e-2}, {"t_end", 1.0}}},
              {"init", {{"type", "gaussian"}, {"mean", {2.0, 0.0}}, {"cov", {{0.5, 0.0}, {0.0, 0.5}}}}},
              {"params", {{"sample_times", {0.0, 0.5, 1.0}}}}};
  const auto c = lab::parse_config(cfg, "entropy-decay");
  const auto r = lab::run_experiment(c, scratch() / "lyap");
  const auto& inv = r.summary["invariant"]["cov"];
  CHECK(inv[0][0].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(inv[1][1].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(inv[0][1].get<double>()) < 1e-12);
}

TEST_CASE("mv-ergo binary") {
  REQUIRE_MESSAGE(!binary().empty(), "MV_ERGO_BIN is not set");

  SUBCASE("version and model listing") {
    auto v = mv_ergo("--version");
    CHECK(v.code == 0);
    CHECK(v.out.find("mv-ergo 0.1.0") != std::string::npos);
    auto l = mv_ergo("list-models");
    CHECK(l.code == 0);
    CHECK(l.out.find("exabc") != std::string::npos);
    CHECK(l.out.find("kinetic_gradient") != std::string::npos);
    int models = 0;
    std::istringstream is(l.out);
    for (std::string line; std::getline(is, line);)
      if (!line.empty() && line[0] != ' ' && line.rfind("model", 0) != 0) ++models;
    CHECK(models >= 4);
  }

  SUBCASE("exit codes") {
    auto bad = decay_config();
    bad["sim"]["dt"] = 0.0;
    auto r = mv_ergo("run --config '" + write_config("bad.json", bad).string() + "'");
    CHECK(r.code == lab::exit_code::schema);
    CHECK(r.err.find("sim.dt") != std::string::npos);
    CHECK(mv_ergo("run --config '" + (scratch() / "missing.json").string() + "'").code == lab::exit_code::io);
    std::ofstream(scratch() / "garbage.json") << "{ not json";
    CHECK(mv_ergo("run --config '" + (scratch() / "garbage.json").string() + "'").code == lab::exit_code::schema);
  }

  SUBCASE("decay run writes series and fit") {
    const auto cfg = write_config("decay.json", decay_config());
    const fs::path out = scratch() / "decay";
    auto r = mv_ergo("run --config '" + cfg.string() + "' --output-dir '" + out.string() + "'");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    REQUIRE(fs::exists(out / "series.csv"));
    REQUIRE(fs::exists(out / "fit.json"));
    REQUIRE(fs::exists(out / "manifest.json"));
    const auto fit = json::parse(slurp(out / "fit.json"));
    CHECK(fit["lambda"].get<double>() == doctest::Approx(1.0).epsilon(0.15));
    const auto table = csv::read(out / "series.csv");
    CHECK(table.header == std::vector<std::string>{"t", "w2", "oracle_w2"});
    CHECK(table.rows.size() == 8);
    const std::string raw = slurp(out / "series.csv");
    CHECK(raw.find("\r\n") != std::string::npos);
    const auto manifest = json::parse(slurp(out / "manifest.json"));
    CHECK(manifest["config"] == decay_config());
    for (const char* k : {"timestamp", "created", "date"}) CHECK(slurp(out / "manifest.json").find(k) == std::string::npos);
  }

  SUBCASE("outputs do not depend on the thread count") {
    auto c = decay_config();
    c["model"] = {{"name", "mean_field_linear"}};
    c["experiment"] = "simulate";
    c["params"] = json::object();
    c["sim"]["n_particles"] = 300;
    const auto cfg = write_config("det.json", c);
    const fs::path a = scratch() / "det1", b = scratch() / "det3";
    REQUIRE(mv_ergo("run -c '" + cfg.string() + "' --threads 1 -o '" + a.string() + "'").code == 0);
    REQUIRE(mv_ergo("run -c '" + cfg.string() + "' --threads 3 -o '" + b.string() + "'").code == 0);
    for (const char* f : {"moments.csv", "final.csv", "summary.json", "manifest.json"})
      CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
  }

  SUBCASE("violated inequality exits with 2") {
    json c = {{"model", {{"name", "exabc"}}},
              {"constants", {{"K1", 1.0}, {"K2", 4.0}, {"r0", 0.5}, {"delta1", 2.0}, {"delta2", 1.0}}},
              {"params", {{"condition", "A"}, {"n_pairs", 2000}, {"radius", 3.0}}}};
    auto r = mv_ergo("check -c '" + write_config("check.json", c).string() + "' -o '" + (scratch() / "chk").string() + "'");
    CHECK(r.code == lab::exit_code::violated);
    const auto rep = json::parse(slurp(scratch() / "chk" / "report.json"));
    CHECK(rep["satisfied"] == false);
    CHECK(rep.contains("witness"));
  }
}
