#pragma once

#include <vector>

#include "spcp/model.hpp"

namespace spcp {

struct SolverOptions {
  /// Step on the scaled dual variable; 1/2 is 1/Lipschitz in these units.
  double step = 0.5;
  bool accelerate = true;
  int max_iters = 50000;
  double tol_feas = 1e-7;
  double tol_fix = 1e-7;
  /// Record fixed-point residuals every iteration (one extra SVD each).
  bool trace = false;
};

struct TraceRow {
  int iter = 0;
  double feas = 0.0;
  double fix_low_rank = 0.0;
  double fix_sparse = 0.0;
  double dual = 0.0;
};

struct Solution {
  Matrix low_rank;  // L-hat
  Matrix sparse;    // S-hat
  Matrix dual;      // scaled multiplier tau * Y, lives in Q
  int iters = 0;
  double feas_residual = 0.0;
  double fix_residual = 0.0;
  bool converged = false;
  /// Momentum restarts (accelerated) or step halvings (plain) after a dual decrease.
  int backtracks = 0;
  /// Dual objective at the point where each iteration's gradient was taken.
  std::vector<double> dual_values;
  std::vector<TraceRow> trace;
};

/// Dual gradient ascent for
///   min ||L||_* + lambda ||S||_1 + (||L||_F^2 + ||S||_F^2) / (2 tau)
///   s.t. P_Q M = P_Q (L + S).
///
/// Works in the scaled multiplier Yt = tau Y:
///   L <- svt(Yt, tau);  S <- soft_threshold(Yt, lambda tau);
///   Yt <- P_Q(Yt + step (M - L - S)).
/// With `accelerate`, Nesterov extrapolation is applied to Yt and reset
/// whenever the dual objective decreases. In plain mode a dual decrease
/// halves the step and retries. Stops when both the feasibility and the
/// fixed-point residual fall below tolerance; otherwise returns with
/// converged = false after max_iters.
Solution solve(const ProblemInstance& instance, const SolverOptions& opts = {});

/// Lagrange dual d(Y) at Y = Yt / tau. Rejects Yt with a Q-perp component
/// above 1e-8 (1 + ||Yt||_F).
double dual_objective(const Matrix& scaled_dual, const ProblemInstance& instance);

struct KktResidual {
  double feas = 0.0;
  double fix_low_rank = 0.0;
  double fix_sparse = 0.0;
};

/// feas = ||P_Q(M - L - S)||_F / max(1, ||P_Q M||_F);
/// fix_low_rank = ||L - svt(Yt, tau)||_F / (1 + ||L||_F), fix_sparse analogous.
KktResidual kkt_residual(const Matrix& low_rank, const Matrix& sparse, const Matrix& scaled_dual,
                         const ProblemInstance& instance);

struct RecoveryError {
  double err_low_rank = 0.0;
  double err_sparse = 0.0;
  double support_f1 = 0.0;
};

/// Relative Frobenius errors and the F1 score of {|S-hat| > magnitude / 2}
/// against Omega.
RecoveryError recovery_error(const Solution& sol, const GroundTruth& truth);
RecoveryError recovery_error(const Matrix& low_rank, const Matrix& sparse,
                             const GroundTruth& truth);

}  // namespace spcp
