#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "spcp/matrix_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kRoot = fs::path(SPCP_TEST_TMP) / "cli";

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Run cli(const std::string& args) {
  fs::create_directories(kRoot);
  const fs::path out = kRoot / "stdout.txt", err = kRoot / "stderr.txt";
  const std::string cmd = "cd '" + kRoot.string() + "' && '" + std::string(SPCP_CLI_PATH) + "' " + args +
                          " > '" + out.string() + "' 2> '" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

json config_line(const std::string& out) {
  const auto pos = out.find("CONFIG: ");
  REQUIRE(pos != std::string::npos);
  const auto end = out.find('\n', pos);
  return json::parse(out.substr(pos + 8, end - pos - 8));
}

}  // namespace

TEST_CASE("cli: help for every subcommand exits 0") {
  for (const char* sub : {"gen", "solve", "certify", "phase", "tau-sweep", "lemmas", "formats"}) {
    const Run r = cli(std::string(sub) + " --help");
    CHECK_MESSAGE(r.code == 0, sub);
    CHECK(r.out.find("--help") != std::string::npos);
  }
  CHECK(cli("tau-sweep --help").out.find("1e-3, 1e-2, 1e-1, 1, 10") != std::string::npos);
  CHECK(cli("--help").code == 0);
}

TEST_CASE("cli: gen echoes the resolved configuration and is reproducible") {
  fs::remove_all(kRoot / "g1");
  fs::remove_all(kRoot / "g2");
  const Run a = cli("gen --n 20 --r 2 --rho 0.05 --p 20 --seed 7 --out g1");
  REQUIRE(a.code == 0);
  const json cfg = config_line(a.out);
  CHECK(cfg["lambda"].get<double>() == doctest::Approx(1.0 / std::sqrt(20.0)));
  CHECK(cfg["tau_mode"] == "criterion");
  REQUIRE(cli("gen --n 20 --r 2 --rho 0.05 --p 20 --seed 7 --out g2").code == 0);
  for (const char* f : {"M.bin", "L0.bin", "S0.bin", "qperp_basis.bin", "manifest.json"})
    CHECK_MESSAGE(slurp(kRoot / "g1" / f) == slurp(kRoot / "g2" / f), f);

  const Run lam = cli("gen --n 60 --r 2 --rho 0.05 --p 60 --seed 7 --out g3");
  REQUIRE(lam.code == 0);
  CHECK(config_line(lam.out)["lambda"].get<double>() == doctest::Approx(0.12910).epsilon(1e-4));
}

TEST_CASE("cli: validation failures exit 2 naming the constraint") {
  const Run rho = cli("gen --n 20 --rho 1.5 --out bad");
  CHECK(rho.code == 2);
  CHECK(rho.err.find("[0,1]") != std::string::npos);
  CHECK(cli("gen --n 20 --bogus 3 --out bad").code == 2);
  CHECK(cli("gen --n 20").code == 2);
  CHECK(cli("phase --config missing.json").code == 2);
  CHECK(cli("solve --instance nowhere").code == 2);
}

TEST_CASE("cli: solve exit codes") {
  fs::remove_all(kRoot / "s");
  REQUIRE(cli("gen --n 20 --r 1 --rho 0.05 --p 10 --seed 3 --out s").code == 0);
  const Run ok = cli("solve --instance s --out s/sol --trace");
  CHECK(ok.code == 0);
  CHECK(ok.out.find("errL=") != std::string::npos);
  CHECK(fs::exists(kRoot / "s" / "sol" / "solution.json"));
  CHECK(fs::exists(kRoot / "s" / "sol" / "trace.csv"));
  const json sol = json::parse(slurp(kRoot / "s" / "sol" / "solution.json"));
  CHECK(sol["err_low_rank"].get<double>() <= 1e-3);
  CHECK(cli("solve --instance s --max-iters 1").code == 3);

  // Zero data: converges at the first iteration.
  spcp::ProblemInstance zero;
  zero.n = 4;
  zero.data = spcp::Matrix::Zero(4, 4);
  zero.q = std::make_shared<const spcp::SubspaceProjector>(spcp::gen_subspace(4, 2, 1));
  zero.lambda = 0.5;
  zero.tau = 1.0;
  zero.mode = spcp::tau_mode::Explicit{1.0};
  spcp::save_instance(zero, kRoot / "zero");
  const Run z = cli("solve --instance zero");
  CHECK(z.code == 0);
  CHECK(z.out.find("iters=1 ") != std::string::npos);
}

TEST_CASE("cli: certify exit codes") {
  fs::remove_all(kRoot / "c");
  REQUIRE(cli("gen --n 40 --r 1 --rho 0.02 --p 10 --seed 11 --out c").code == 0);
  const Run bad = cli("certify --instance c --alpha 0.5 --beta 0.6");
  CHECK(bad.code == 2);
  CHECK(bad.err.find("alpha + beta <= 1") != std::string::npos);
  const Run run = cli("certify --instance c --out c/cert.json");
  const json cfg = config_line(run.out);
  CHECK(cfg["alpha"].get<double>() == 0.375);
  CHECK(cfg["beta"].get<double>() == 0.625);
  CHECK((run.code == 0 || run.code == 4));
  const json report = json::parse(slurp(kRoot / "c" / "cert.json"));
  CHECK(report["verdict"] == (run.code == 0 ? "certified" : "inconclusive"));
  CHECK(report.contains("wq"));
}

TEST_CASE("cli: batch commands and thread-count determinism") {
  fs::remove_all(kRoot / "batch");
  fs::create_directories(kRoot / "batch");
  {
    std::ofstream cfg(kRoot / "batch" / "phase.json");
    cfg << R"({"n": 12, "grid": {"r": [1], "rho": [0.05], "p": [0, 6]}, "trials_per_cell": 2,
               "base_seed": 3, "timing": false})";
  }
  const Run one = cli("phase --config batch/phase.json --out-dir batch/t1 --threads 1");
  const Run four = cli("phase --config batch/phase.json --out-dir batch/t4 --threads 4");
  REQUIRE(one.code == 0);
  REQUIRE(four.code == 0);
  CHECK(config_line(four.out)["threads"] == 4);
  CHECK(slurp(kRoot / "batch" / "t1" / "records.csv") == slurp(kRoot / "batch" / "t4" / "records.csv"));

  const Run sweep = cli("tau-sweep --config batch/phase.json --out-dir batch/sw --multipliers 1 10");
  CHECK(sweep.code == 0);
  CHECK(fs::exists(kRoot / "batch" / "sw" / "tau_sweep.csv"));
  const Run lem = cli("lemmas --config batch/phase.json --out-dir batch/lm");
  CHECK(lem.code == 0);
  CHECK(fs::exists(kRoot / "batch" / "lm" / "lemmas.json"));
  const Run formats = cli("formats");
  CHECK(formats.code == 0);
  CHECK(formats.out.find("SCPCP1") != std::string::npos);
}
