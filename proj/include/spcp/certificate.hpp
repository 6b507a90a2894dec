#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "spcp/cgls.hpp"
#include "spcp/model.hpp"

namespace spcp {

nlohmann::json to_json(const BoundCheck& check);

// ---------------------------------------------------------------------------
// W^Q: minimum-Frobenius-norm X with
//   P_{Q-perp} X = -P_{Q-perp}(U V^T + L0 / tau)   and   P_Pi X = 0,  Pi = T + Omega.

enum class WqMethod { least_squares, neumann };

std::string to_string(WqMethod method);

struct WqOptions {
  CgOptions cg{5000, 1e-10, CgStop::residual};
  /// Neumann truncation: stop once ||term||_F <= term_tol ||sum||_F.
  double term_tol = 1e-12;
  int max_terms = 1000;
  DirectSumOptions direct_sum;
  NormOptions norm;
};

struct WqResult {
  Matrix wq;
  /// xi = ||U V^T + L0 / tau||_F.
  double xi = 0.0;
  /// ||P_{Q-perp} P_Pi|| estimate; both methods require it below 1.
  double transversality = 0.0;
  /// ||P_{Q-perp} W + P_{Q-perp}(U V^T + L0/tau)||_F.
  double residual_q_perp = 0.0;
  /// ||P_Pi W||_F.
  double residual_pi = 0.0;
  /// CGLS iterations or Neumann terms.
  int iterations = 0;
  /// Neumann only: ||term_k||_F, k >= 0, and the largest ratio of successive terms.
  std::vector<double> term_norms;
  double decay_ratio = 0.0;
  /// 1 / (1 - ||P_{Q-perp} P_Pi||^2): norm of sum_{k>=0} (P_{Q-perp} P_Pi P_{Q-perp})^k.
  double series_norm = 0.0;
};

/// Requires tau >= ||M||_F. Throws ValidationError for a smaller tau or a
/// non-transversal (Q-perp, Pi) pair, and ConvergenceError
/// ("construction_failed") when a constraint residual exceeds 1e-8 of its scale.
WqResult build_wq(const TangentSpace& tangent, const Matrix& low_rank, const Matrix& data,
                  double tau, const SubspaceProjector& q, const SupportSet& omega, WqMethod method,
                  const WqOptions& opts = {});

/// (a) ||W^Q|| < 1/8 and (b) ||P_{Omega-perp} W^Q||_inf < lambda / 8.
struct WqBoundReport {
  BoundCheck spectral;
  BoundCheck off_support_inf;
  bool passed() const { return spectral.passed && off_support_inf.passed; }
};

WqBoundReport check_wq(const Matrix& wq, const SupportSet& omega, double lambda);

/// Bound checks for externally constructed W^L:
///   ||W^L|| < 1/4, ||P_Omega(UV^T + W^L)||_F < lambda/4, ||P_{Omega-perp}(UV^T + W^L)||_inf < lambda/4.
std::vector<BoundCheck> check_wl(const Matrix& wl, const TangentSpace& tangent,
                                 const SupportSet& omega, double lambda);
/// ... and for W^S: ||W^S|| < 1/8, ||P_{Omega-perp} W^S||_inf < lambda/8.
std::vector<BoundCheck> check_ws(const Matrix& ws, const SupportSet& omega, double lambda);

// ---------------------------------------------------------------------------
// Dual certificate search.

struct CertificateCandidate {
  Matrix w;
  Matrix f;
  Matrix d;
  double alpha = kDefaultAlpha;
  double beta = kDefaultBeta;
};

enum class Verdict { certified, inconclusive, precondition_failed };

std::string to_string(Verdict verdict);

/// Residuals and bounds of the optimality conditions
///   U V^T + W + L0/tau = lambda (sgn(S0) + F + P_Omega D) + S0/tau  in Q,
///   P_T W = 0, ||W|| <= beta, P_Omega F = 0, ||F||_inf <= beta, ||P_Omega D||_F <= alpha,
/// under the hypothesis ||P_Omega P_{Gamma-perp}|| < 1/2, Gamma-perp = Q-perp + T.
///
/// "inconclusive" means the candidate found violates a bound or the
/// hypothesis fails; it does not exclude some other valid certificate.
struct CertificateReport {
  double equality_residual = 0.0;
  double q_membership_residual = 0.0;
  double pt_w_residual = 0.0;
  double pomega_f_residual = 0.0;
  /// Residual scale: ||UV^T||_F + lambda ||sgn(S0)||_F + ||L0 - S0||_F / tau.
  double scale = 0.0;
  double norm_w = 0.0;
  double inf_f = 0.0;
  double frob_pd = 0.0;
  double transversality = 0.0;
  double alpha = kDefaultAlpha;
  double beta = kDefaultBeta;
  double lambda = 0.0;
  int refine_iterations = 0;
  Verdict verdict = Verdict::inconclusive;
  std::string message;
};

nlohmann::json to_json(const CertificateReport& report);

struct CertificateOptions {
  CgOptions cg{5000, 1e-10, CgStop::residual};
  /// Alternating-projection passes after the least-norm start; 0 disables.
  int refine_iters = 200;
  /// Targets beta and lambda beta are shrunk by this factor during refinement.
  double refine_shrink = 0.95;
  /// Residuals must stay below residual_tol * scale.
  double residual_tol = 1e-6;
  DirectSumOptions direct_sum;
  NormOptions norm;
};

struct CertificateResult {
  CertificateCandidate candidate;
  CertificateReport report;
};

/// Starts from the least-norm W satisfying the linear conditions (with the
/// Omega block imposed exactly, so D = 0), then refines it by alternating
/// projections between that affine set, the spectral ball and the
/// Omega-perp box. F and D follow from the equality.
CertificateResult certificate_search(const GroundTruth& truth, const SubspaceProjector& q,
                                     double tau, double lambda, double alpha = kDefaultAlpha,
                                     double beta = kDefaultBeta,
                                     const CertificateOptions& opts = {});

/// Re-evaluates all conditions for a given candidate.
CertificateReport evaluate_certificate(const CertificateCandidate& cand, const GroundTruth& truth,
                                       const SubspaceProjector& q, double tau, double lambda,
                                       double transversality, double residual_tol = 1e-6);

/// ||P_Omega P_{Gamma-perp}|| with P_{Gamma-perp} the projector onto Q-perp + T.
double gamma_transversality(const SubspaceProjector& q, const TangentSpace& tangent,
                            const SupportSet& omega, const DirectSumOptions& opts = {});

// ---------------------------------------------------------------------------
// Subspace-angle lemmas.

struct Lemma25Report {
  double a12 = 0.0;
  double a23 = 0.0;
  double a31 = 0.0;
  /// ||P_{S1 + S2} P_{S3}||.
  double measured = 0.0;
  /// sqrt((a23^2 + a31^2) / (1 - a12)).
  double bound = 0.0;
  bool precondition_ok = false;
  bool passed = false;
  std::string message;
};

/// Measures ||P_{A+B} P_C|| for three subspaces given by projectors and
/// compares it with the bound built from the pairwise norms. Any pairwise
/// norm >= 1 - 1e-6 fails the precondition.
Lemma25Report check_lemma25(const LinearMap& pa, const LinearMap& pb, const LinearMap& pc,
                            Index n, const DirectSumOptions& opts = {});

struct Lemma26Report {
  double measured = 0.0;
  /// 8 (sqrt(p) + sqrt(2 n r)) / n; vacuous above 1.
  double bound = 0.0;
  bool passed = false;
};

/// ||P_{Q-perp} P_T|| against 8 (sqrt(p) + sqrt(2nr)) / n. Requires p < n^2/4.
Lemma26Report check_lemma26(const SubspaceProjector& q, const TangentSpace& tangent,
                            const NormOptions& opts = {});

double lemma26_bound(Index n, Index r, Index p);

struct DimConditionReport {
  Index dim_q_perp = 0;
  Index dim_t = 0;
  Index dim_omega = 0;
  double norm_q_t = 0.0;
  double norm_t_omega = 0.0;
  double norm_omega_q = 0.0;
  /// Rank of the stacked explicit bases (-1 when not computed).
  Index stacked_rank = -1;
  bool exact = false;  // rank check performed (n <= 20)
  bool verified = false;
  std::string message;
};

/// dim(Q-perp + T + Omega) = p + dim T + |Omega|: pairwise transversality
/// always, plus an explicit stacked-basis rank check when n <= 20.
DimConditionReport check_dim_condition(const SubspaceProjector& q, const TangentSpace& tangent,
                                       const SupportSet& omega, const NormOptions& opts = {});

/// Orthonormal basis (n^2 x (2nr - r^2)) of vec(T).
Matrix tangent_basis(const TangentSpace& tangent);

}  // namespace spcp
