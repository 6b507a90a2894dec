#include "spcp/certificate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/SVD>

#include "spcp/error.hpp"

namespace spcp {

using nlohmann::json;

namespace {

// Stacked linear conditions X -> (P_T X, B^T vec X, P_Omega X) shared by the
// W^Q construction and the certificate search. Unknown: vec(X) in R^{n^2}.
class ConstraintOperator {
 public:
  ConstraintOperator(const TangentSpace& t, const SubspaceProjector& q, const SupportSet& omega)
      : t_(t), q_(q), omega_(omega), n_(t.n()), nn_(n_ * n_) {}

  Index rows() const { return 2 * nn_ + q_.p(); }
  Index cols() const { return nn_; }

  Vector forward(const Vector& x) const {
    const Matrix m = unvec(x, n_);
    Vector out(rows());
    out.segment(0, nn_) = vec(project_tangent(m, t_));
    out.segment(nn_, q_.p()) = q_.coefficients(m);
    out.segment(nn_ + q_.p(), nn_) = vec(project_support(m, omega_));
    return out;
  }

  Vector adjoint(const Vector& e) const {
    const Matrix sum = project_tangent(unvec(e.segment(0, nn_), n_), t_) +
                       q_.from_coefficients(e.segment(nn_, q_.p())) +
                       project_support(unvec(e.segment(nn_ + q_.p(), nn_), n_), omega_);
    return vec(sum);
  }

  Vector rhs(const Matrix& tangent_part, const Vector& q_perp_coeffs, const Matrix& support_part) const {
    Vector out(rows());
    out.segment(0, nn_) = vec(tangent_part);
    out.segment(nn_, q_.p()) = q_perp_coeffs;
    out.segment(nn_ + q_.p(), nn_) = vec(support_part);
    return out;
  }

  /// Minimum-norm correction: x + argmin ||d|| s.t. A(x + d) = b.
  Matrix project(const Matrix& x, const Vector& b, const CgOptions& cg, int* iterations = nullptr) const {
    const Vector r = b - forward(vec(x));
    const CgResult res = cgls([this](const Vector& v) { return forward(v); },
                              [this](const Vector& v) { return adjoint(v); }, r, cols(), cg);
    if (iterations) *iterations = res.iterations;
    if (!res.converged) {
      std::ostringstream msg;
      msg << "constraint solve: CGLS did not converge (relative residual "
          << res.residual / std::max(r.norm(), 1e-300) << " after " << res.iterations
          << " iterations)";
      throw ConvergenceError(msg.str());
    }
    return x + unvec(res.x, n_);
  }

 private:
  const TangentSpace& t_;
  const SubspaceProjector& q_;
  const SupportSet& omega_;
  Index n_;
  Index nn_;
};

Matrix sign_matrix(const Matrix& x) {
  return x.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Matrix clip_spectral(const Matrix& x, double radius) {
  Eigen::BDCSVD<Matrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector sigma = svd.singularValues().cwiseMin(radius);
  return svd.matrixU() * sigma.asDiagonal() * svd.matrixV().transpose();
}

BoundCheck strict_check(std::string name, double measured, double bound) {
  return {std::move(name), measured, bound, measured < bound};
}

}  // namespace

json to_json(const BoundCheck& check) {
  return json{{"name", check.name},
              {"measured", check.measured},
              {"bound", check.bound},
              {"passed", check.passed}};
}

std::string to_string(WqMethod method) {
  return method == WqMethod::least_squares ? "least_squares" : "neumann";
}

std::string to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::certified: return "certified";
    case Verdict::inconclusive: return "inconclusive";
    case Verdict::precondition_failed: return "precondition_failed";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// W^Q

WqResult build_wq(const TangentSpace& tangent, const Matrix& low_rank, const Matrix& data,
                  double tau, const SubspaceProjector& q, const SupportSet& omega, WqMethod method,
                  const WqOptions& opts) {
  const Index n = tangent.n();
  if (low_rank.rows() != n || data.rows() != n || q.n() != n || omega.n() != n)
    throw ValidationError("build_wq: dimension mismatch");
  const double data_norm = data.norm();
  if (!(tau >= data_norm)) {
    std::ostringstream msg;
    msg << "build_wq: requires tau >= ||M||_F (tau = " << tau << ", ||M||_F = " << data_norm << ")";
    throw ValidationError(msg.str());
  }

  WqResult out;
  const Matrix target = tangent.uv() + low_rank / tau;  // U V^T + L0 / tau
  out.xi = target.norm();
  const Vector target_coeffs = q.coefficients(target);

  DirectSumOptions ds = opts.direct_sum;
  ds.norm = opts.norm;
  const DirectSumProjector p_pi(tangent_map(tangent), support_map(omega), n, ds);
  const LinearMap pi_map = [&p_pi](const Matrix& x) { return p_pi(x); };
  const LinearMap qp_map = q_perp_map(q);

  out.transversality = q.p() == 0 ? 0.0 : projector_product_norm(qp_map, pi_map, n, opts.norm).value;
  if (out.transversality >= 1.0 - ds.transversality_margin) {
    std::ostringstream msg;
    msg << "build_wq: Q-perp and T + Omega are not transversal (||P_Qperp P_Pi|| = "
        << out.transversality << ")";
    throw ValidationError(msg.str());
  }
  out.series_norm = 1.0 / (1.0 - out.transversality * out.transversality);

  if (q.p() == 0) {
    out.wq = Matrix::Zero(n, n);
  } else if (method == WqMethod::least_squares) {
    const ConstraintOperator constraints(tangent, q, omega);
    const Vector rhs = constraints.rhs(Matrix::Zero(n, n), -target_coeffs, Matrix::Zero(n, n));
    out.wq = constraints.project(Matrix::Zero(n, n), rhs, opts.cg, &out.iterations);
  } else {
    // sum_{k>=0} (P_Qperp P_Pi P_Qperp)^k b with b = -P_Qperp(target), then P_{Pi-perp}.
    Matrix term = q.from_coefficients(-target_coeffs);
    Matrix sum = term;
    out.term_norms.push_back(term.norm());
    for (int k = 1; k <= opts.max_terms; ++k) {
      term = q.apply_q_perp(p_pi(term));
      sum += term;
      const double norm = term.norm();
      const double prev = out.term_norms.back();
      if (prev > 0.0) out.decay_ratio = std::max(out.decay_ratio, norm / prev);
      out.term_norms.push_back(norm);
      out.iterations = k;
      if (norm <= opts.term_tol * sum.norm()) break;
    }
    out.wq = sum - p_pi(sum);
  }

  out.residual_q_perp = (q.coefficients(out.wq) + target_coeffs).norm();
  out.residual_pi = p_pi(out.wq).norm();
  const double tol_q = 1e-8 * std::max(out.xi, 1e-300);
  const double tol_pi = 1e-8 * std::max(out.wq.norm(), 1e-300);
  if (out.residual_q_perp > tol_q || out.residual_pi > tol_pi) {
    std::ostringstream msg;
    msg << "construction_failed (" << to_string(method) << "): ||P_Qperp(W + UV^T + L0/tau)||_F = "
        << out.residual_q_perp << ", ||P_Pi W||_F = " << out.residual_pi;
    throw ConvergenceError(msg.str());
  }
  return out;
}

WqBoundReport check_wq(const Matrix& wq, const SupportSet& omega, double lambda) {
  WqBoundReport out;
  out.spectral = strict_check("wq_spectral", spectral_norm(wq), 1.0 / 8.0);
  out.off_support_inf =
      strict_check("wq_off_support_inf", max_abs(project_support_complement(wq, omega)), lambda / 8.0);
  return out;
}

std::vector<BoundCheck> check_wl(const Matrix& wl, const TangentSpace& tangent,
                                 const SupportSet& omega, double lambda) {
  const Matrix shifted = tangent.uv() + wl;
  return {strict_check("wl_spectral", spectral_norm(wl), 0.25),
          strict_check("wl_support_frobenius", project_support(shifted, omega).norm(), lambda / 4.0),
          strict_check("wl_off_support_inf", max_abs(project_support_complement(shifted, omega)),
                       lambda / 4.0)};
}

std::vector<BoundCheck> check_ws(const Matrix& ws, const SupportSet& omega, double lambda) {
  return {strict_check("ws_spectral", spectral_norm(ws), 1.0 / 8.0),
          strict_check("ws_off_support_inf", max_abs(project_support_complement(ws, omega)),
                       lambda / 8.0)};
}

// ---------------------------------------------------------------------------
// Certificates

json to_json(const CertificateReport& r) {
  return json{{"equality_residual", r.equality_residual},
              {"q_membership_residual", r.q_membership_residual},
              {"pt_w_residual", r.pt_w_residual},
              {"pomega_f_residual", r.pomega_f_residual},
              {"scale", r.scale},
              {"norm_W", r.norm_w},
              {"inf_F", r.inf_f},
              {"frob_PD", r.frob_pd},
              {"transversality", r.transversality},
              {"alpha", r.alpha},
              {"beta", r.beta},
              {"lambda", r.lambda},
              {"refine_iterations", r.refine_iterations},
              {"verdict", to_string(r.verdict)},
              {"message", r.message}};
}

double gamma_transversality(const SubspaceProjector& q, const TangentSpace& tangent,
                            const SupportSet& omega, const DirectSumOptions& opts) {
  const DirectSumProjector p_gamma_perp(q_perp_map(q), tangent_map(tangent), tangent.n(), opts);
  return projector_product_norm(support_map(omega),
                                [&p_gamma_perp](const Matrix& x) { return p_gamma_perp(x); },
                                tangent.n(), opts.norm)
      .value;
}

CertificateReport evaluate_certificate(const CertificateCandidate& cand, const GroundTruth& truth,
                                       const SubspaceProjector& q, double tau, double lambda,
                                       double transversality, double residual_tol) {
  const SupportSet& omega = truth.support;
  const Matrix uv = truth.tangent.uv();
  const Matrix sgn = sign_matrix(truth.sparse);
  const Matrix lhs = uv + cand.w + truth.low_rank / tau;
  const Matrix rhs = lambda * (sgn + cand.f + project_support(cand.d, omega)) + truth.sparse / tau;

  CertificateReport r;
  r.alpha = cand.alpha;
  r.beta = cand.beta;
  r.lambda = lambda;
  r.transversality = transversality;
  r.equality_residual = (lhs - rhs).norm();
  r.q_membership_residual = q.coefficients(lhs).norm();
  r.pt_w_residual = project_tangent(cand.w, truth.tangent).norm();
  r.pomega_f_residual = project_support(cand.f, omega).norm();
  r.scale = uv.norm() + lambda * sgn.norm() + (truth.low_rank - truth.sparse).norm() / tau;
  r.norm_w = spectral_norm(cand.w);
  r.inf_f = max_abs(cand.f);
  r.frob_pd = project_support(cand.d, omega).norm();

  const double tol = residual_tol * r.scale;
  std::vector<std::string> failures;
  if (r.equality_residual > tol) failures.push_back("equality residual");
  if (r.q_membership_residual > tol) failures.push_back("Q membership residual");
  if (r.pt_w_residual > tol) failures.push_back("P_T W residual");
  if (r.pomega_f_residual > tol) failures.push_back("P_Omega F residual");
  if (r.norm_w > r.beta) failures.push_back("||W|| <= beta");
  if (r.inf_f > r.beta) failures.push_back("||F||_inf <= beta");
  if (r.frob_pd > r.alpha) failures.push_back("||P_Omega D||_F <= alpha");
  if (!(r.transversality < 0.5)) failures.push_back("||P_Omega P_Gamma-perp|| < 1/2");

  if (failures.empty()) {
    r.verdict = Verdict::certified;
    r.message = "all conditions hold";
  } else {
    r.verdict = Verdict::inconclusive;
    std::ostringstream msg;
    msg << "violated:";
    for (const auto& f : failures) msg << ' ' << f << ';';
    r.message = msg.str();
  }
  return r;
}

CertificateResult certificate_search(const GroundTruth& truth, const SubspaceProjector& q,
                                     double tau, double lambda, double alpha, double beta,
                                     const CertificateOptions& opts) {
  CertificateResult out;
  out.candidate.alpha = alpha;
  out.candidate.beta = beta;
  out.report.alpha = alpha;
  out.report.beta = beta;
  out.report.lambda = lambda;
  try {
    validate_alpha_beta(alpha, beta);
    if (!(lambda > 0.0 && lambda < 1.0))
      throw ValidationError("0 < lambda < 1 violated (lambda = " + std::to_string(lambda) + ")");
    if (!(tau > 0.0)) throw ValidationError("tau > 0 violated");
  } catch (const ValidationError& e) {
    out.report.verdict = Verdict::precondition_failed;
    out.report.message = e.what();
    return out;
  }

  const Index n = truth.tangent.n();
  const SupportSet& omega = truth.support;
  const Matrix uv = truth.tangent.uv();
  const Matrix sgn = sign_matrix(truth.sparse);
  const Matrix shift = uv + truth.low_rank / tau;  // UV^T + L0/tau

  DirectSumOptions ds = opts.direct_sum;
  ds.norm = opts.norm;
  double transversality = 1.0;
  std::string hypothesis_note;
  try {
    transversality = gamma_transversality(q, truth.tangent, omega, ds);
  } catch (const ValidationError& e) {
    hypothesis_note = std::string(" (") + e.what() + ")";
  }

  // Linear conditions with D = 0: P_T W = 0, P_Qperp(W + shift) = 0,
  // P_Omega(W + shift) = lambda sgn(S0) + S0/tau.
  const ConstraintOperator constraints(truth.tangent, q, omega);
  const Vector rhs = constraints.rhs(Matrix::Zero(n, n), -q.coefficients(shift),
                                     project_support(lambda * sgn + truth.sparse / tau - shift, omega));

  auto assemble = [&](const Matrix& w) {
    CertificateCandidate cand;
    cand.alpha = alpha;
    cand.beta = beta;
    cand.w = w;
    const Matrix lhs = shift + w;
    cand.f = project_support_complement(lhs, omega) / lambda;
    cand.d = project_support(lhs - truth.sparse / tau, omega) / lambda - sgn;
    return cand;
  };
  auto bounds_hold = [&](const CertificateCandidate& c) {
    return spectral_norm(c.w) <= beta && max_abs(c.f) <= beta &&
           project_support(c.d, omega).norm() <= alpha;
  };

  Matrix w = constraints.project(Matrix::Zero(n, n), rhs, opts.cg);
  CertificateCandidate cand = assemble(w);

  const double radius = opts.refine_shrink * beta;
  const double box = opts.refine_shrink * beta * lambda;
  int it = 0;
  for (; it < opts.refine_iters && !bounds_hold(cand); ++it) {
    Matrix shifted = shift + w;
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < n; ++i)
        if (!omega.contains(i, j)) shifted(i, j) = std::clamp(shifted(i, j), -box, box);
    w = clip_spectral(shifted - shift, radius);
    w = constraints.project(w, rhs, opts.cg);
    cand = assemble(w);
  }

  out.candidate = std::move(cand);
  out.report = evaluate_certificate(out.candidate, truth, q, tau, lambda, transversality,
                                    opts.residual_tol);
  out.report.refine_iterations = it;
  out.report.message += hypothesis_note;
  return out;
}

// ---------------------------------------------------------------------------
// Subspace-angle lemmas

Lemma25Report check_lemma25(const LinearMap& pa, const LinearMap& pb, const LinearMap& pc,
                            Index n, const DirectSumOptions& opts) {
  Lemma25Report out;
  out.a12 = projector_product_norm(pa, pb, n, opts.norm).value;
  out.a23 = projector_product_norm(pb, pc, n, opts.norm).value;
  out.a31 = projector_product_norm(pc, pa, n, opts.norm).value;
  const double limit = 1.0 - opts.transversality_margin;
  if (out.a12 >= limit || out.a23 >= limit || out.a31 >= limit) {
    std::ostringstream msg;
    msg << "pairwise norms must be < 1 (a12 = " << out.a12 << ", a23 = " << out.a23
        << ", a31 = " << out.a31 << ")";
    out.message = msg.str();
    return out;
  }
  out.precondition_ok = true;
  out.bound = std::sqrt((out.a23 * out.a23 + out.a31 * out.a31) / (1.0 - out.a12));
  const DirectSumProjector p_sum(pa, pb, n, opts);
  out.measured = projector_product_norm([&p_sum](const Matrix& x) { return p_sum(x); }, pc, n,
                                        opts.norm)
                     .value;
  // Power-iteration estimates carry relative error around the norm tolerance.
  out.passed = out.measured <= out.bound * (1.0 + 1e-6) + 1e-9;
  out.message = out.passed ? "bound holds" : "bound violated";
  return out;
}

double lemma26_bound(Index n, Index r, Index p) {
  return 8.0 * (std::sqrt(static_cast<double>(p)) + std::sqrt(2.0 * static_cast<double>(n * r))) /
         static_cast<double>(n);
}

Lemma26Report check_lemma26(const SubspaceProjector& q, const TangentSpace& tangent,
                            const NormOptions& opts) {
  const Index n = tangent.n();
  if (4 * q.p() >= n * n) throw ValidationError("check_lemma26: requires p < n^2/4");
  Lemma26Report out;
  out.bound = lemma26_bound(n, tangent.rank(), q.p());
  out.measured = q.p() == 0 ? 0.0
                            : projector_product_norm(q_perp_map(q), tangent_map(tangent), n, opts).value;
  out.passed = out.measured <= out.bound;
  return out;
}

Matrix tangent_basis(const TangentSpace& tangent) {
  const Index n = tangent.n();
  const Index r = tangent.rank();
  if (r == 0) return Matrix(n * n, 0);
  // Spanning set {u_i e_j^T, e_j v_i^T}; it has the r^2 redundant directions u_i v_k^T.
  Matrix span(n * n, 2 * n * r);
  Index col = 0;
  for (Index i = 0; i < r; ++i) {
    for (Index j = 0; j < n; ++j) {
      Matrix a = Matrix::Zero(n, n);
      a.col(j) = tangent.u().col(i);
      span.col(col++) = vec(a);
      Matrix b = Matrix::Zero(n, n);
      b.row(j) = tangent.v().col(i).transpose();
      span.col(col++) = vec(b);
    }
  }
  Eigen::BDCSVD<Matrix> svd(span, Eigen::ComputeThinU);
  return svd.matrixU().leftCols(tangent.dimension());
}

DimConditionReport check_dim_condition(const SubspaceProjector& q, const TangentSpace& tangent,
                                       const SupportSet& omega, const NormOptions& opts) {
  const Index n = tangent.n();
  DimConditionReport out;
  out.dim_q_perp = q.p();
  out.dim_t = tangent.dimension();
  out.dim_omega = omega.size();
  const Index total = out.dim_q_perp + out.dim_t + out.dim_omega;
  if (total > n * n) {
    out.message = "p + dim T + |Omega| exceeds n^2; the direct sum is impossible";
    return out;
  }
  const LinearMap pq = q_perp_map(q);
  const LinearMap pt = tangent_map(tangent);
  const LinearMap po = support_map(omega);
  out.norm_q_t = q.p() == 0 ? 0.0 : projector_product_norm(pq, pt, n, opts).value;
  out.norm_t_omega = projector_product_norm(pt, po, n, opts).value;
  out.norm_omega_q = q.p() == 0 ? 0.0 : projector_product_norm(po, pq, n, opts).value;
  const double limit = 1.0 - 1e-8;
  const bool pairwise = out.norm_q_t < limit && out.norm_t_omega < limit && out.norm_omega_q < limit;

  if (n <= 20) {
    Matrix stacked(n * n, total);
    stacked.leftCols(out.dim_q_perp) = q.basis();
    stacked.middleCols(out.dim_q_perp, out.dim_t) = tangent_basis(tangent);
    Index col = out.dim_q_perp + out.dim_t;
    for (const auto& [i, j] : omega.entries()) {
      stacked.col(col).setZero();
      stacked(i + j * n, col) = 1.0;
      ++col;
    }
    out.exact = true;
    if (total == 0) {
      out.stacked_rank = 0;
    } else {
      Eigen::BDCSVD<Matrix> svd(stacked);
      const Vector& sigma = svd.singularValues();
      out.stacked_rank = 0;
      while (out.stacked_rank < sigma.size() && sigma(out.stacked_rank) > 1e-10 * sigma(0))
        ++out.stacked_rank;
    }
    out.verified = pairwise && out.stacked_rank == total;
    out.message = out.verified ? "verified (stacked-basis rank)" : "rank deficient or non-transversal";
  } else {
    out.verified = pairwise;
    out.message = pairwise ? "partial: pairwise transversality only" : "non-transversal pair";
  }
  return out;
}

}  // namespace spcp
