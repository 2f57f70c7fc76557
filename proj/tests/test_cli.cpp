// End-to-end tests of the command-line tool. The binary path arrives as the
// first non-doctest argument (wired up by CTest).
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string g_binary;
fs::path g_work;

struct RunResult {
  int code;
  std::string output;  // stdout + stderr
};

RunResult run(const std::string& args) {
  const fs::path log = g_work / "run.log";
  const std::string cmd = g_binary + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream f(log);
  std::stringstream ss;
  ss << f.rdbuf();
  r.output = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  REQUIRE(f.good());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s)
    if (c == '\n') ++n;
  return n;
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(run("").code == 2);
  CHECK(run("no-such-command").code == 2);
  const RunResult r = run("state-sweep --no-such-flag");
  CHECK(r.code == 2);
  CHECK(r.output.find("\"code\":2") != std::string::npos);
}

TEST_CASE("state sweep artifacts are deterministic") {
  const fs::path out = g_work / "sweep";
  const std::string args = "state-sweep --grid 36 --out " + out.string();
  REQUIRE(run(args).code == 0);
  const std::string csv = slurp(out / "state_sweep.csv");
  CHECK(csv.rfind("phi_p_deg,concurrence,fidelity_phi_minus,fidelity_psi_plus\n", 0) == 0);
  CHECK(count_lines(csv) == 37);  // header + 36 rows
  const json manifest = json::parse(slurp(out / "state_sweep_manifest.json"));
  CHECK(manifest.at("command") == "state_sweep");
  CHECK(manifest.at("metrics").at("min_concurrence").get<double>() > 1.0 - 1e-10);

  // repeated run: byte-identical CSV
  REQUIRE(run(args).code == 0);
  CHECK(slurp(out / "state_sweep.csv") == csv);
}

TEST_CASE("config file fills unset options") {
  const fs::path cfg = g_work / "cfg.json";
  std::ofstream(cfg) << R"({"grid": 12})";
  const fs::path out = g_work / "sweep_cfg";
  REQUIRE(run("state-sweep --config " + cfg.string() + " --out " + out.string()).code == 0);
  CHECK(count_lines(slurp(out / "state_sweep.csv")) == 13);
  // explicit flag wins over the config value
  REQUIRE(run("state-sweep --config " + cfg.string() + " --grid 6 --out " + out.string())
              .code == 0);
  CHECK(count_lines(slurp(out / "state_sweep.csv")) == 7);
}

TEST_CASE("rate sweep emits the long-format table") {
  const fs::path out = g_work / "rates";
  REQUIRE(run("rate-sweep --grid 24 --analyzer-deg 55 --out " + out.string()).code == 0);
  const std::string csv = slurp(out / "rate_sweep.csv");
  CHECK(csv.rfind("phi_p_deg,rate,analyzer_mode,analyzer_deg\n", 0) == 0);
  CHECK(count_lines(csv) == 1 + 4 * 24);
  CHECK(csv.find("corotating_parallel") != std::string::npos);
  CHECK(csv.find("fixed") != std::string::npos);
}

TEST_CASE("paraxial Green's-function run reports near-unit fidelity") {
  const fs::path out = g_work / "gf";
  REQUIRE(run("gf-density-matrix --na 0.01 --phi-p-deg 90 --n-theta 3 --n-phi 8 --out " +
              out.string())
              .code == 0);
  const json j = json::parse(slurp(out / "gf_density_matrix.json"));
  CHECK(j.at("report").at("fidelity_phi_minus").get<double>() >= 0.999);
  CHECK(j.at("meta").at("na").get<double>() == doctest::Approx(0.01));
  CHECK(j.at("re").size() == 4);
}

TEST_CASE("tomography simulate/reconstruct round trip through files") {
  const fs::path out = g_work / "tomo";
  REQUIRE(run("tomography-simulate --phi-p-deg 90 --n-total 100000 --out " + out.string())
              .code == 0);
  const fs::path counts = out / "tomography_counts.csv";
  CHECK(slurp(counts).rfind("qwp_s_deg,hwp_s_deg,qwp_i_deg,hwp_i_deg,counts,duration_s\n",
                            0) == 0);

  REQUIRE(run("tomography-reconstruct --input " + counts.string() +
              " --target phi_minus --out " + out.string())
              .code == 0);
  const json j = json::parse(slurp(out / "tomography_result.json"));
  CHECK(j.at("fidelity_phi_minus").get<double>() >= 0.999);
  CHECK(j.at("concurrence").at("mean").get<double>() >= 0.999);
  CHECK(j.contains("likelihood"));

  // linear method also works on the same file
  REQUIRE(run("tomography-reconstruct --input " + counts.string() +
              " --method linear --out " + out.string())
              .code == 0);
}

TEST_CASE("malformed counts CSV names the missing column") {
  const fs::path bad = g_work / "bad_counts.csv";
  std::ofstream(bad) << "qwp_s_deg,hwp_s_deg,qwp_i_deg,hwp_i_deg,duration_s\n"
                     << "0,0,0,0,1\n";
  const RunResult r =
      run("tomography-reconstruct --input " + bad.string() + " --out " + g_work.string());
  CHECK(r.code == 3);
  CHECK(r.output.find("counts") != std::string::npos);
  CHECK(r.output.find("\"code\":3") != std::string::npos);
}

TEST_CASE("efficiency budget run") {
  const fs::path out = g_work / "eff";
  REQUIRE(run("efficiency --out " + out.string()).code == 0);
  const json j = json::parse(slurp(out / "efficiency.json"));
  CHECK(j.at("eta_tot").get<double>() == doctest::Approx(0.006).epsilon(0.04));
}

TEST_CASE("histogram and spectrum pipeline") {
  const fs::path out = g_work / "hist";
  REQUIRE(run("histogram --pair-rate 1.0 --singles-s 20000 --singles-i 20000 "
              "--duration-s 120 --window-ps 500 --n-bins 401 --seed 5 --out " +
              out.string())
              .code == 0);
  const json j = json::parse(slurp(out / "histogram.json"));
  CHECK(j.at("car").get<double>() > 2.0);
  CHECK(j.at("pair_evidence").get<bool>());

  REQUIRE(run("spectrum --input " + (out / "histogram.csv").string() + " --out " +
              out.string())
              .code == 0);
  const std::string spectrum = slurp(out / "spectrum.csv");
  CHECK(spectrum.rfind("lambda_nm,counts_rel,std,flagged\n", 0) == 0);
  CHECK(count_lines(spectrum) > 10);
}

TEST_CASE("report aggregates manifests") {
  const fs::path out = g_work / "bundle";
  REQUIRE(run("state-sweep --grid 8 --out " + out.string()).code == 0);
  REQUIRE(run("efficiency --out " + out.string()).code == 0);
  REQUIRE(run("report --out " + out.string()).code == 0);
  const json j = json::parse(slurp(out / "report.json"));
  CHECK(j.at("n_runs").get<int>() == 2);
  CHECK(j.at("runs").size() == 2);

  const fs::path empty = g_work / "empty";
  fs::create_directories(empty);
  CHECK(run("report --dir " + empty.string() + " --out " + empty.string()).code == 3);
}

int main(int argc, char** argv) {
  doctest::Context ctx;
  ctx.applyCommandLine(argc, argv);
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (!a.empty() && a[0] != '-') g_binary = a;
  }
  if (g_binary.empty()) {
    std::fprintf(stderr, "usage: test_cli <path-to-cli-binary>\n");
    return 1;
  }
  g_work = fs::temp_directory_path() / "spdcsim_cli_test";
  fs::remove_all(g_work);
  fs::create_directories(g_work);
  const int rc = ctx.run();
  fs::remove_all(g_work);
  return rc;
}
