#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "spcp/error.hpp"
#include "spcp/linops.hpp"
#include "spcp/model.hpp"

using namespace spcp;

namespace {

double prox_l1_objective(const Matrix& x, const Matrix& y, double t) {
  return 0.5 * (x - y).squaredNorm() + t * x.cwiseAbs().sum();
}

double prox_nuclear_objective(const Matrix& x, const Matrix& y, double t) {
  return 0.5 * (x - y).squaredNorm() + t * nuclear_norm(x);
}

SupportSet random_support(Index n, double rho, Pcg64& rng) {
  std::vector<SupportSet::Entry> e;
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i)
      if (rng.bernoulli(rho)) e.push_back({i, j});
  return SupportSet(n, e);
}

}  // namespace

TEST_CASE("soft_threshold matches the scalar brute-force prox") {
  Pcg64 rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix y = oracle::gaussian(4, 5, rng);
    const double t = 0.1 + rng.uniform();
    const Matrix x = soft_threshold(y, t);
    Matrix ref(4, 5);
    for (Index j = 0; j < 5; ++j)
      for (Index i = 0; i < 4; ++i) ref(i, j) = oracle::scalar_prox_l1(y(i, j), t);
    CHECK(std::abs(prox_l1_objective(x, y, t) - prox_l1_objective(ref, y, t)) < 1e-9);
    CHECK((x - ref).cwiseAbs().maxCoeff() < 1e-6);
  }
  const Matrix y = oracle::gaussian(3, 3, rng);
  CHECK((soft_threshold(y, 0.0) - y).norm() == 0.0);
}

TEST_CASE("svt matches the factored alternating-minimization oracle") {
  Pcg64 rng(202);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix y = oracle::gaussian(4, 4, rng);
    const double t = 0.2 + rng.uniform();
    const Matrix x = svt(y, t);
    const double ref = oracle::nuclear_prox_value(y, t, rng);
    CHECK(std::abs(prox_nuclear_objective(x, y, t) - ref) < 1e-6);
  }
}

TEST_CASE("svt edge cases") {
  Pcg64 rng(3);
  const Matrix y = oracle::gaussian(5, 5, rng);
  CHECK((svt(y, 0.0) - y).norm() < 1e-12);
  CHECK(svt(y, 1e6).norm() == doctest::Approx(0.0));
  CHECK_THROWS_AS(svt(y, -1.0), ValidationError);
}

TEST_CASE("support set validation and projections") {
  CHECK_THROWS_AS(SupportSet(3, {{0, 0}, {0, 0}}), ValidationError);
  CHECK_THROWS_AS(SupportSet(3, {{3, 0}}), ValidationError);
  const SupportSet s(3, {{2, 1}, {0, 0}});
  CHECK(s.size() == 2);
  CHECK(s.contains(2, 1));
  CHECK_FALSE(s.contains(1, 2));
  Pcg64 rng(4);
  const Matrix x = oracle::gaussian(3, 3, rng);
  const Matrix p = project_support(x, s);
  CHECK(p(2, 1) == x(2, 1));
  CHECK(p(1, 1) == 0.0);
  CHECK((p + project_support_complement(x, s) - x).norm() == 0.0);
  CHECK(SupportSet::full(3).size() == 9);
  CHECK(SupportSet::empty(3).size() == 0);
}

TEST_CASE("tangent projector equals the dense projector onto the spanning set") {
  Pcg64 rng(5);
  const Index n = 7, r = 2;
  const TangentSpace t(oracle::orthonormal(n, r, rng), oracle::orthonormal(n, r, rng));
  CHECK(t.dimension() == 2 * n * r - r * r);
  const Matrix ref = oracle::range_projector(oracle::tangent_span(t.u(), t.v()));
  CHECK(ref.trace() == doctest::Approx(static_cast<double>(t.dimension())));
  const Matrix got = oracle::dense(tangent_map(t), n);
  CHECK((got - ref).norm() < 1e-10);
  const Matrix comp = oracle::dense(tangent_complement_map(t), n);
  CHECK((comp + got - Matrix::Identity(n * n, n * n)).norm() < 1e-10);
}

TEST_CASE("tangent space construction") {
  Pcg64 rng(6);
  CHECK_THROWS_AS(TangentSpace(oracle::gaussian(5, 2, rng), oracle::orthonormal(5, 2, rng)),
                  ValidationError);
  const Matrix l = oracle::gaussian(8, 3, rng) * oracle::gaussian(8, 3, rng).transpose();
  const TangentSpace t = TangentSpace::of_matrix(l);
  CHECK(t.rank() == 3);
  CHECK((project_tangent(l, t) - l).norm() < 1e-10 * l.norm());
}

TEST_CASE("subspace projector equals the pseudo-inverse projector") {
  Pcg64 rng(7);
  const Index n = 6, p = 9;
  const Matrix h = oracle::gaussian(n * n, p, rng);
  const SubspaceProjector q = make_subspace_projector(h);
  CHECK(q.p() == p);
  const Matrix ref = oracle::range_projector(h);
  CHECK((oracle::dense(q_perp_map(q), n) - ref).norm() < 1e-10);
  CHECK((oracle::dense(q_map(q), n) - (Matrix::Identity(n * n, n * n) - ref)).norm() < 1e-10);
  Matrix dependent(n * n, 2);
  dependent.col(0) = h.col(0);
  dependent.col(1) = 2.0 * h.col(0);
  CHECK_THROWS_AS(make_subspace_projector(dependent), ValidationError);
  const SubspaceProjector trivial(n, Matrix(n * n, 0));
  const Matrix x = oracle::gaussian(n, n, rng);
  CHECK(trivial.apply_q_perp(x).norm() == 0.0);
  CHECK((trivial.apply_q(x) - x).norm() == 0.0);
}

TEST_CASE("projector algebra on random probes") {
  Pcg64 rng(8);
  const Index n = 10;
  const TangentSpace t(oracle::orthonormal(n, 2, rng), oracle::orthonormal(n, 2, rng));
  const SupportSet omega = random_support(n, 0.1, rng);
  const SubspaceProjector q = make_subspace_projector(oracle::gaussian(n * n, 8, rng));
  const std::vector<LinearMap> maps{tangent_map(t), support_map(omega), q_map(q), q_perp_map(q)};
  for (const auto& p : maps) {
    for (int probe = 0; probe < 10; ++probe) {
      const Matrix x = oracle::gaussian(n, n, rng), y = oracle::gaussian(n, n, rng);
      const Matrix px = p(x);
      CHECK((p(px) - px).norm() <= 1e-8 * x.norm());
      CHECK(std::abs(inner(px, y) - inner(x, p(y))) <= 1e-8 * x.norm() * y.norm());
      CHECK(std::abs(x.squaredNorm() - px.squaredNorm() - (x - px).squaredNorm()) <= 1e-8 * x.squaredNorm());
    }
  }
}

TEST_CASE("direct-sum projector equals the dense projector onto T + Omega") {
  Pcg64 rng(9);
  const Index n = 8;
  const TangentSpace t(oracle::orthonormal(n, 1, rng), oracle::orthonormal(n, 1, rng));
  const SupportSet omega = random_support(n, 0.1, rng);
  Matrix stacked(n * n, 2 * n + omega.size());
  stacked.leftCols(2 * n) = oracle::tangent_span(t.u(), t.v());
  Index col = 2 * n;
  for (const auto& [i, j] : omega.entries()) {
    stacked.col(col).setZero();
    stacked(i + j * n, col++) = 1.0;
  }
  const Matrix ref = oracle::range_projector(stacked);
  const DirectSumProjector sum(tangent_map(t), support_map(omega), n);
  CHECK(sum.transversality() < 1.0);
  for (int probe = 0; probe < 5; ++probe) {
    const Matrix x = oracle::gaussian(n, n, rng);
    const Matrix got = sum(x);
    CHECK((vec(got) - ref * vec(x)).norm() < 1e-8 * x.norm());
    // Residual orthogonal to both summands.
    const Matrix res = x - got;
    CHECK(project_tangent(res, t).norm() < 1e-8 * x.norm());
    CHECK(project_support(res, omega).norm() < 1e-8 * x.norm());
  }
  CHECK_THROWS_AS(DirectSumProjector(tangent_map(t), tangent_map(t), n), ValidationError);
}

TEST_CASE("operator_norm matches the dense singular value") {
  Pcg64 rng(10);
  const Index n = 8;
  const TangentSpace t(oracle::orthonormal(n, 2, rng), oracle::orthonormal(n, 2, rng));
  const SubspaceProjector q = make_subspace_projector(oracle::gaussian(n * n, 10, rng));
  const Matrix dense = oracle::dense(q_perp_map(q), n) * oracle::dense(tangent_map(t), n);
  const NormEstimate est = projector_product_norm(q_perp_map(q), tangent_map(t), n);
  CHECK(est.converged);
  CHECK(est.value == doctest::Approx(oracle::spectral(dense)).epsilon(1e-6));

  const Matrix a = oracle::gaussian(n, n, rng);
  const LinearMap left = [&a](const Matrix& x) { return Matrix(a * x); };
  const LinearMap left_t = [&a](const Matrix& x) { return Matrix(a.transpose() * x); };
  CHECK(operator_norm(left, left_t, n).value == doctest::Approx(oracle::spectral(a)).epsilon(1e-6));
}

TEST_CASE("vec and unvec are inverse column-major reshapes") {
  Matrix x(2, 2);
  x << 1, 2, 3, 4;
  const Vector v = vec(x);
  CHECK(v(1) == 3.0);
  CHECK(unvec(v, 2) == x);
  CHECK(max_abs(x) == 4.0);
  CHECK(inner(x, x) == doctest::Approx(30.0));
}
