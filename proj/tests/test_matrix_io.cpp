#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "doctest.h"
#include "oracles.hpp"
#include "spcp/error.hpp"
#include "spcp/matrix_io.hpp"

using namespace spcp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::path(SPCP_TEST_TMP) / "matrix_io" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("csv and binary round trips are exact") {
  const fs::path dir = scratch("roundtrip");
  Pcg64 rng(1);
  Matrix m = oracle::gaussian(4, 3, rng) * 1e5;
  m(0, 0) = 1.0 / 3.0;
  m(1, 1) = -0.0;
  m(2, 2) = 5e-300;
  write_matrix(dir / "m.csv", m, MatrixFormat::csv);
  write_matrix(dir / "m.bin", m, MatrixFormat::binary);
  CHECK(read_matrix(dir / "m.csv") == m);
  CHECK(read_matrix(dir / "m.bin") == m);
  CHECK(read_matrix_binary(dir / "m.bin") == m);

  const Matrix empty(5, 0);
  write_matrix(dir / "e.bin", empty, MatrixFormat::binary);
  const Matrix back = read_matrix(dir / "e.bin");
  CHECK(back.rows() == 5);
  CHECK(back.cols() == 0);
}

TEST_CASE("binary layout: magic, u64 dims, column-major doubles") {
  const fs::path dir = scratch("layout");
  Matrix m(2, 2);
  m << 1, 2, 3, 4;
  write_matrix_binary(dir / "m.bin", m);
  const std::string bytes = slurp(dir / "m.bin");
  REQUIRE(bytes.size() == 6 + 16 + 32);
  CHECK(bytes.substr(0, 6) == "SCPCP1");
  double second = 0.0;
  std::memcpy(&second, bytes.data() + 22 + 8, 8);
  CHECK(second == 3.0);
}

TEST_CASE("malformed files are rejected with a location") {
  const fs::path dir = scratch("bad");
  {
    std::ofstream out(dir / "bad.csv");
    out << "1,2\n3,x\n";
  }
  CHECK_THROWS_WITH_AS(read_matrix_csv(dir / "bad.csv"), doctest::Contains(":2:"), ValidationError);
  {
    std::ofstream out(dir / "ragged.csv");
    out << "1,2\n3\n";
  }
  CHECK_THROWS_AS(read_matrix_csv(dir / "ragged.csv"), ValidationError);
  Matrix m = Matrix::Ones(3, 3);
  write_matrix_binary(dir / "t.bin", m);
  fs::resize_file(dir / "t.bin", 40);
  CHECK_THROWS_AS(read_matrix_binary(dir / "t.bin"), ValidationError);
  CHECK_THROWS_AS(read_matrix(dir / "missing.bin"), ValidationError);
  CHECK_THROWS_AS(parse_matrix_format("xml"), ValidationError);
}

TEST_CASE("instance save and load preserve every field") {
  const ProblemInstance inst = build_instance({12, 2, 0.1, 5, 1.0, 3, tau_mode::Criterion{}});
  for (MatrixFormat format : {MatrixFormat::binary, MatrixFormat::csv}) {
    const fs::path dir = scratch("instance_" + to_string(format));
    save_instance(inst, dir, format);
    const ProblemInstance back = load_instance(dir);
    CHECK(back.n == inst.n);
    CHECK(back.lambda == inst.lambda);
    CHECK(back.tau == inst.tau);
    CHECK(back.seed == inst.seed);
    CHECK(back.data == inst.data);
    CHECK(back.projector().basis() == inst.projector().basis());
    REQUIRE(back.truth);
    CHECK(back.truth->low_rank == inst.truth->low_rank);
    CHECK(back.truth->support == inst.truth->support);
    CHECK(load_instance(dir / "manifest.json").n == inst.n);
  }
}

TEST_CASE("solution and trace files") {
  const fs::path dir = scratch("solution");
  Solution sol;
  sol.low_rank = Matrix::Identity(3, 3);
  sol.sparse = Matrix::Zero(3, 3);
  sol.dual = Matrix::Ones(3, 3);
  sol.iters = 7;
  sol.converged = true;
  save_solution(sol, dir, MatrixFormat::csv, {{"err_low_rank", 0.5}});
  CHECK(read_matrix(dir / "L_hat.csv") == sol.low_rank);
  std::ifstream in(dir / "solution.json");
  const nlohmann::json j = nlohmann::json::parse(in);
  CHECK(j["iters"] == 7);
  CHECK(j["err_low_rank"] == 0.5);
  write_trace_csv(dir / "trace.csv", {{1, 0.5, 0.1, 0.2, -3.0}});
  std::ifstream tin(dir / "trace.csv");
  std::string header;
  std::getline(tin, header);
  CHECK(header == "iter,feas,fixL,fixS,dual");
}
