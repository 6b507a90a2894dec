#include "doctest.h"
#include "oracles.hpp"
#include "spcp/cgls.hpp"

using namespace spcp;

namespace {

CgResult run(const Matrix& a, const Vector& b, CgOptions opts = {}) {
  return cgls([&a](const Vector& x) { return Vector(a * x); },
              [&a](const Vector& y) { return Vector(a.transpose() * y); }, b, a.cols(), opts);
}

}  // namespace

TEST_CASE("cgls solves an overdetermined least-squares problem") {
  Pcg64 rng(1);
  const Matrix a = oracle::gaussian(40, 10, rng);
  const Vector b = oracle::gaussian(40, 1, rng);
  const Vector ref = a.householderQr().solve(b);
  const CgResult res = run(a, b, {500, 1e-12, CgStop::normal_residual});
  CHECK(res.converged);
  CHECK((res.x - ref).norm() < 1e-9 * ref.norm());
}

TEST_CASE("cgls returns the minimum-norm solution of an underdetermined system") {
  Pcg64 rng(2);
  const Matrix a = oracle::gaussian(8, 30, rng);
  const Vector b = oracle::gaussian(8, 1, rng);
  const Vector ref = a.completeOrthogonalDecomposition().pseudoInverse() * b;
  const CgResult res = run(a, b);
  CHECK(res.converged);
  CHECK((res.x - ref).norm() < 1e-8 * ref.norm());
  CHECK((a * res.x - b).norm() <= 10 * 1e-10 * b.norm());
}

TEST_CASE("cgls reports non-convergence at the iteration cap and handles zero rhs") {
  Pcg64 rng(3);
  const Matrix a = oracle::gaussian(50, 50, rng);
  const Vector b = oracle::gaussian(50, 1, rng);
  CHECK_FALSE(run(a, b, {2, 1e-14, CgStop::residual}).converged);
  const CgResult zero = run(a, Vector::Zero(50));
  CHECK(zero.converged);
  CHECK(zero.x.norm() == 0.0);
}
