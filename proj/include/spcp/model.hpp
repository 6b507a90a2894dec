#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "spcp/linops.hpp"

namespace spcp {

/// Ground-truth decomposition M = L0 + S0 of a generated instance.
struct GroundTruth {
  Matrix low_rank;   // L0
  Matrix sparse;     // S0
  SupportSet support;  // Omega = supp(S0)
  TangentSpace tangent;  // T at L0
  Index rank = 0;
  double rho = 0.0;
  double magnitude = 1.0;

  /// Recomputes support, tangent space and rank from (L0, S0).
  static GroundTruth from_parts(Matrix low_rank, Matrix sparse, double rho = 0.0,
                                double magnitude = 1.0);
};

namespace tau_mode {
struct Criterion {};
struct Oracle {};
struct Explicit {
  double value = 0.0;
};
}  // namespace tau_mode

using TauMode = std::variant<tau_mode::Criterion, tau_mode::Oracle, tau_mode::Explicit>;

std::string to_string(const TauMode& mode);
/// Accepts "criterion", "oracle", or a positive number.
TauMode parse_tau_mode(const std::string& text);

/// Data of one strongly convex PCP problem with reduced measurements.
struct ProblemInstance {
  Index n = 0;
  Matrix data;  // M
  std::shared_ptr<const SubspaceProjector> q;
  double lambda = 0.0;
  double tau = 0.0;
  std::optional<GroundTruth> truth;
  std::uint64_t seed = 0;

  // Generation parameters, kept for manifests.
  Index r = 0;
  double rho = 0.0;
  double magnitude = 1.0;
  TauMode mode = tau_mode::Criterion{};

  Index p() const { return q ? q->p() : 0; }
  const SubspaceProjector& projector() const { return *q; }
};

/// A B^T with A, B n x r standard normal.
Matrix gen_low_rank(Index n, Index r, std::uint64_t seed);

struct SparseSample {
  Matrix values;
  SupportSet support;
};

/// Bernoulli(rho) support with i.i.d. uniform signs times `magnitude`.
SparseSample gen_sparse(Index n, double rho, double magnitude, std::uint64_t seed);

/// H in R^{n^2 x p} with i.i.d. N(0, 1/n^2) entries.
Matrix gaussian_measurements(Index n, Index p, std::uint64_t seed);

/// Random p-dimensional Q-perp spanned by gaussian_measurements(n, p, seed).
/// Requires p < n^2 / 4.
SubspaceProjector gen_subspace(Index n, Index p, std::uint64_t seed);

/// Incoherence of L0 = U S V^T (standard robust-PCA definition):
///   mu = max( (n/r) max_i ||U^T e_i||^2, (n/r) max_i ||V^T e_i||^2, (n^2/r) ||U V^T||_inf^2 ).
struct Incoherence {
  double mu = 0.0;
  Index rank = 0;
  double row_u = 0.0;  // (n/r) max row norm^2 of U
  double row_v = 0.0;  // (n/r) max row norm^2 of V
  double joint = 0.0;  // (n^2/r) ||U V^T||_inf^2
};

Incoherence incoherence(const Matrix& low_rank);

/// Data-driven penalty: 8 sqrt(15) ||M||_F / (3 lambda).
double tau_criterion(const Matrix& data, double lambda);

/// Ground-truth penalty bound max(tau1, tau2, tau3, ||M||_F) where
///   tau1 = ||P_{Omega-perp} L0||_inf / ((beta - 1/2) lambda)
///   tau2 = ||P_Omega (L0 - S0)||_F / ((alpha - 1/4) lambda)
///   tau3 = 4 (||P_{Omega-perp} L0||_inf + ||P_Omega (L0 - S0)||_F) / lambda.
struct TauOracle {
  double tau = 0.0;
  double tau1 = 0.0;
  double tau2 = 0.0;
  double tau3 = 0.0;
  double frob_data = 0.0;
};

inline constexpr double kDefaultAlpha = 3.0 / 8.0;
inline constexpr double kDefaultBeta = 5.0 / 8.0;

/// Throws ValidationError naming the violated inequality when
/// alpha > 1/4, beta > 1/2 or alpha + beta <= 1 fails.
void validate_alpha_beta(double alpha, double beta);

TauOracle tau_oracle(const GroundTruth& truth, const Matrix& data, double lambda,
                     double alpha = kDefaultAlpha, double beta = kDefaultBeta);

struct InstanceParams {
  Index n = 0;
  Index r = 1;
  double rho = 0.0;
  Index p = 0;
  double magnitude = 1.0;
  std::uint64_t seed = 0;
  TauMode mode = tau_mode::Criterion{};
};

/// M = L0 + S0 with lambda = 1/sqrt(n); every component draws from its own
/// sub-seed of params.seed.
ProblemInstance build_instance(const InstanceParams& params);

/// Primal objective ||L||_* + lambda ||S||_1 + (||L||_F^2 + ||S||_F^2) / (2 tau).
double primal_objective(const Matrix& low_rank, const Matrix& sparse, double lambda, double tau);

double nuclear_norm(const Matrix& x);

/// One measured quantity against its bound.
struct BoundCheck {
  std::string name;
  double measured = 0.0;
  double bound = 0.0;
  bool passed = false;
};

/// Norm chain relating the ground truth to the data, all with M = L0 + S0:
///   pomega_l0:      ||P_Omega L0||_F          <= (sqrt(3)/3) ||M||_F
///   pomega_l0_s0:   ||P_Omega (L0 - S0)||_F   <= (sqrt(15)/3) ||M||_F
///   l0:             ||L0||_F                  <= (sqrt(3)/3 + 2) ||M||_F
///   xi:             ||U V^T + L0 / tau||_F    <= r + sqrt(3)/3 + 2   (tau >= ||M||_F)
/// These are with-high-probability statements; the checks only measure.
std::vector<BoundCheck> inequality_chain(const GroundTruth& truth, const Matrix& data, double tau);

}  // namespace spcp
