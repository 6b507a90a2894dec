#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "spcp/certificate.hpp"
#include "spcp/error.hpp"
#include "spcp/solver.hpp"

using namespace spcp;

namespace {

ProblemInstance regime(Index n, Index r, double rho, Index p, std::uint64_t seed) {
  return build_instance({n, r, rho, p, 1.0, seed, tau_mode::Criterion{}});
}

WqResult wq_of(const ProblemInstance& inst, WqMethod method) {
  const GroundTruth& t = *inst.truth;
  return build_wq(t.tangent, t.low_rank, inst.data, inst.tau, inst.projector(), t.support, method);
}

// Dense basis (columns) of Q-perp + T + Omega.
Matrix stacked_basis(const ProblemInstance& inst) {
  const GroundTruth& t = *inst.truth;
  const Index n = inst.n;
  const Matrix span = oracle::tangent_span(t.tangent.u(), t.tangent.v());
  Matrix out(n * n, inst.p() + span.cols() + t.support.size());
  out.leftCols(inst.p()) = inst.projector().basis();
  out.middleCols(inst.p(), span.cols()) = span;
  Index col = inst.p() + span.cols();
  for (const auto& [i, j] : t.support.entries()) {
    out.col(col).setZero();
    out(i + j * n, col++) = 1.0;
  }
  return out;
}

}  // namespace

TEST_CASE("W^Q vanishes without measurements") {
  const ProblemInstance inst = regime(20, 2, 0.05, 0, 1);
  for (WqMethod m : {WqMethod::least_squares, WqMethod::neumann}) {
    const WqResult r = wq_of(inst, m);
    CHECK(r.wq.norm() == 0.0);
    CHECK(check_wq(r.wq, inst.truth->support, inst.lambda).passed());
  }
}

TEST_CASE("W^Q: both methods agree and satisfy the constraints") {
  const ProblemInstance inst = regime(20, 1, 0.05, 20, 2);
  const WqResult ls = wq_of(inst, WqMethod::least_squares);
  const WqResult nm = wq_of(inst, WqMethod::neumann);
  CHECK((ls.wq - nm.wq).norm() <= 1e-6 * ls.wq.norm());
  for (const WqResult* r : {&ls, &nm}) {
    CHECK(r->residual_q_perp <= 1e-8 * r->xi);
    CHECK(r->residual_pi <= 1e-8 * r->wq.norm());
  }
  const GroundTruth& t = *inst.truth;
  CHECK(ls.xi == doctest::Approx((t.tangent.uv() + t.low_rank / inst.tau).norm()));
  // Independent check of the constraints with dense projectors.
  const Matrix target = t.tangent.uv() + t.low_rank / inst.tau;
  const Matrix qp = oracle::range_projector(inst.projector().basis());
  CHECK((qp * vec(ls.wq) + qp * vec(target)).norm() <= 1e-8 * ls.xi);
  CHECK(nm.decay_ratio <= nm.transversality * nm.transversality + 1e-6);
  CHECK(nm.series_norm == doctest::Approx(1.0 / (1.0 - nm.transversality * nm.transversality)));
  CHECK(nm.term_norms.size() >= 2);
}

TEST_CASE("W^Q least-squares solution is orthogonal to the constraint kernel") {
  const ProblemInstance inst = regime(10, 1, 0.05, 8, 3);
  const WqResult ls = wq_of(inst, WqMethod::least_squares);
  const Matrix kernel = Matrix::Identity(100, 100) - oracle::range_projector(stacked_basis(inst));
  Pcg64 rng(4);
  for (int k = 0; k < 10; ++k) {
    const Vector dir = kernel * oracle::gaussian(100, 1, rng);
    CHECK(std::abs(vec(ls.wq).dot(dir)) <= 1e-8 * ls.wq.norm() * dir.norm());
  }
}

TEST_CASE("W^Q preconditions and bound checks") {
  const ProblemInstance inst = regime(20, 1, 0.05, 20, 5);
  const GroundTruth& t = *inst.truth;
  CHECK_THROWS_AS(build_wq(t.tangent, t.low_rank, inst.data, 0.5 * inst.data.norm(), inst.projector(),
                           t.support, WqMethod::least_squares),
                  ValidationError);
  CHECK(check_wq(Matrix::Zero(20, 20), t.support, inst.lambda).passed());
  const WqResult ls = wq_of(inst, WqMethod::least_squares);
  const Matrix big = 10.0 * ls.wq;
  const WqBoundReport scaled = check_wq(big, t.support, inst.lambda);
  CHECK(scaled.spectral.measured == doctest::Approx(10.0 * spectral_norm(ls.wq)));
  if (scaled.spectral.measured > 1.0 / 8.0) CHECK_FALSE(scaled.spectral.passed);
}

TEST_CASE("generic W^L and W^S bound checks") {
  const ProblemInstance inst = regime(10, 1, 0.1, 0, 6);
  const GroundTruth& t = *inst.truth;
  const auto wl = check_wl(-t.tangent.uv(), t.tangent, t.support, inst.lambda);
  REQUIRE(wl.size() == 3);
  CHECK_FALSE(wl[0].passed);  // ||UV^T|| = 1
  CHECK(wl[1].passed);
  CHECK(wl[2].passed);
  const auto ws = check_ws(Matrix::Zero(10, 10), t.support, inst.lambda);
  CHECK(ws[0].passed);
  CHECK(ws[1].passed);
}

TEST_CASE("subspace angle inequality for three subspaces") {
  // Disjoint coordinate subspaces are mutually orthogonal: measured = bound = 0.
  const SupportSet a(4, {{0, 0}, {1, 0}}), b(4, {{2, 2}}), c(4, {{3, 3}, {0, 3}});
  const Lemma25Report orth = check_lemma25(support_map(a), support_map(b), support_map(c), 4);
  CHECK(orth.precondition_ok);
  CHECK(orth.measured == doctest::Approx(0.0));
  CHECK(orth.bound == doctest::Approx(0.0));
  CHECK(orth.passed);

  // S3 inside S1 forces a31 = 1.
  const SupportSet sub(4, {{0, 0}});
  const Lemma25Report nested = check_lemma25(support_map(a), support_map(b), support_map(sub), 4);
  CHECK_FALSE(nested.precondition_ok);
  CHECK_FALSE(nested.passed);

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ProblemInstance inst = regime(30, 2, 0.05, 20, seed);
    const GroundTruth& t = *inst.truth;
    const Lemma25Report r = check_lemma25(tangent_map(t.tangent), support_map(t.support),
                                          q_perp_map(inst.projector()), inst.n);
    CHECK(r.precondition_ok);
    CHECK(r.passed);
  }
}

TEST_CASE("measurement/tangent angle bound") {
  CHECK(lemma26_bound(100, 5, 100) == doctest::Approx(3.3298).epsilon(1e-4));
  const ProblemInstance none = regime(20, 2, 0.05, 0, 1);
  const Lemma26Report zero = check_lemma26(none.projector(), none.truth->tangent);
  CHECK(zero.measured == 0.0);
  CHECK(zero.bound == doctest::Approx(8.0 * std::sqrt(80.0) / 20.0));
  CHECK(zero.passed);

  const ProblemInstance inst = regime(20, 2, 0.05, 20, 2);
  const Lemma26Report r = check_lemma26(inst.projector(), inst.truth->tangent);
  const Matrix dense = oracle::range_projector(inst.projector().basis()) *
                       oracle::dense(tangent_map(inst.truth->tangent), 20);
  CHECK(r.measured == doctest::Approx(oracle::spectral(dense)).epsilon(1e-6));
  CHECK(r.measured <= std::min(1.0, r.bound));

  Pcg64 rng(1);
  const SubspaceProjector quarter = make_subspace_projector(oracle::gaussian(16, 4, rng));
  const TangentSpace t(oracle::orthonormal(4, 1, rng), oracle::orthonormal(4, 1, rng));
  CHECK_THROWS_AS(check_lemma26(quarter, t), ValidationError);
}

TEST_CASE("dimension condition") {
  int verified = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const ProblemInstance inst = regime(15, 1, 0.05, 10, seed);
    const DimConditionReport r = check_dim_condition(inst.projector(), inst.truth->tangent, inst.truth->support);
    CHECK(r.exact);
    CHECK(r.dim_t == 2 * 15 - 1);
    Eigen::JacobiSVD<Matrix> svd(stacked_basis(inst));
    const auto& s = svd.singularValues();
    Index rank = 0;
    while (rank < s.size() && s(rank) > 1e-10 * s(0)) ++rank;
    CHECK(r.stacked_rank == rank);
    verified += r.verified ? 1 : 0;
  }
  CHECK(verified >= 19);

  Pcg64 rng(2);
  const TangentSpace t(oracle::orthonormal(6, 1, rng), oracle::orthonormal(6, 1, rng));
  const SubspaceProjector q = gen_subspace(6, 2, 3);
  const DimConditionReport full = check_dim_condition(q, t, SupportSet::full(6));
  CHECK_FALSE(full.verified);

  // Coordinate toy: T spanned by e1 e1^T directions, Omega elsewhere, no Q-perp.
  Matrix e1 = Matrix::Zero(6, 1);
  e1(0, 0) = 1.0;
  const TangentSpace te(e1, e1);
  const SupportSet far(6, {{5, 5}, {4, 3}});
  const DimConditionReport toy = check_dim_condition(SubspaceProjector(6, Matrix(36, 0)), te, far);
  CHECK(toy.exact);
  CHECK(toy.verified);
  CHECK(toy.stacked_rank == 11 + 2);
}

TEST_CASE("tangent basis is orthonormal and spans T") {
  Pcg64 rng(9);
  const TangentSpace t(oracle::orthonormal(7, 2, rng), oracle::orthonormal(7, 2, rng));
  const Matrix b = tangent_basis(t);
  CHECK(b.cols() == t.dimension());
  CHECK((b.transpose() * b - Matrix::Identity(b.cols(), b.cols())).norm() < 1e-10);
  CHECK((b * b.transpose() - oracle::range_projector(oracle::tangent_span(t.u(), t.v()))).norm() < 1e-10);
}

TEST_CASE("certificate search: preconditions") {
  const ProblemInstance inst = regime(20, 1, 0.02, 5, 1);
  const CertificateResult bad = certificate_search(*inst.truth, inst.projector(), inst.tau, inst.lambda, 0.5, 0.6);
  CHECK(bad.report.verdict == Verdict::precondition_failed);
  CHECK(bad.report.message.find("alpha + beta <= 1") != std::string::npos);
  const CertificateResult lam = certificate_search(*inst.truth, inst.projector(), inst.tau, 1.5);
  CHECK(lam.report.verdict == Verdict::precondition_failed);
}

TEST_CASE("certificate search: conditions hold by construction and imply recovery") {
  const ProblemInstance inst = regime(40, 1, 0.02, 10, 11);
  const GroundTruth& t = *inst.truth;
  const CertificateResult res = certificate_search(t, inst.projector(), inst.tau, inst.lambda);
  const CertificateReport& r = res.report;
  CHECK(r.scale == doctest::Approx(t.tangent.uv().norm() + inst.lambda * std::sqrt(static_cast<double>(t.support.size())) +
                                   (t.low_rank - t.sparse).norm() / inst.tau));
  CHECK(r.equality_residual <= 1e-6 * r.scale);
  CHECK(r.q_membership_residual <= 1e-6 * r.scale);
  CHECK(r.pt_w_residual <= 1e-6 * r.scale);
  CHECK(r.pomega_f_residual <= 1e-6 * r.scale);
  const CertificateReport again =
      evaluate_certificate(res.candidate, t, inst.projector(), inst.tau, inst.lambda, r.transversality);
  CHECK(again.verdict == r.verdict);
  CHECK(again.norm_w == doctest::Approx(r.norm_w));
  if (r.verdict == Verdict::certified) {
    const RecoveryError err = recovery_error(solve(inst), t);
    CHECK(err.err_low_rank <= 1e-3);
    CHECK(err.err_sparse <= 1e-3);
  }
  CHECK(to_json(r)["verdict"].get<std::string>() == to_string(r.verdict));

  // A candidate with a tangent component is caught.
  CertificateCandidate broken = res.candidate;
  broken.w += t.tangent.uv();
  const CertificateReport caught =
      evaluate_certificate(broken, t, inst.projector(), inst.tau, inst.lambda, r.transversality);
  CHECK(caught.verdict == Verdict::inconclusive);
  CHECK(caught.pt_w_residual > 1e-6 * caught.scale);
}

TEST_CASE("certificate residual ratios are scale invariant") {
  const ProblemInstance inst = regime(20, 1, 0.05, 10, 12);
  const GroundTruth& t = *inst.truth;
  const double c = 7.0;
  const GroundTruth scaled = GroundTruth::from_parts(c * t.low_rank, c * t.sparse, t.rho, c * t.magnitude);
  CertificateOptions opts;
  opts.refine_iters = 0;
  const CertificateReport a = certificate_search(t, inst.projector(), inst.tau, inst.lambda, kDefaultAlpha, kDefaultBeta, opts).report;
  const CertificateReport b = certificate_search(scaled, inst.projector(), c * inst.tau, inst.lambda, kDefaultAlpha, kDefaultBeta, opts).report;
  CHECK(std::abs(a.equality_residual / a.scale - b.equality_residual / b.scale) <= 1e-10);
  CHECK(std::abs(a.q_membership_residual / a.scale - b.q_membership_residual / b.scale) <= 1e-10);
  CHECK(std::abs(a.pt_w_residual / a.scale - b.pt_w_residual / b.scale) <= 1e-10);
  CHECK(a.norm_w == doctest::Approx(b.norm_w).epsilon(1e-8));
  CHECK(a.inf_f == doctest::Approx(b.inf_f).epsilon(1e-8));
}
