#include "spcp/solver.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "spcp/error.hpp"

namespace spcp {

namespace {

// Primal minimizers of the Lagrangian at a scaled multiplier, plus the dual
// value there. With Yt = tau Y the conjugates collapse to
// g*(Y) = ||L*||_F^2 / (2 tau) and h*(Y) = ||S*||_F^2 / (2 tau).
struct Minimizers {
  Matrix low_rank;
  Matrix sparse;
  double dual = 0.0;
};

Minimizers minimizers(const Matrix& scaled_dual, const ProblemInstance& inst,
                      const Matrix& measured) {
  Minimizers out;
  out.low_rank = svt(scaled_dual, inst.tau);
  out.sparse = soft_threshold(scaled_dual, inst.lambda * inst.tau);
  out.dual = (inner(scaled_dual, measured) -
              0.5 * (out.low_rank.squaredNorm() + out.sparse.squaredNorm())) /
             inst.tau;
  return out;
}

void validate(const ProblemInstance& inst) {
  if (!(inst.tau > 0.0)) throw ValidationError("solve: tau must be positive");
  if (!(inst.lambda > 0.0)) throw ValidationError("solve: lambda must be positive");
  if (!inst.q) throw ValidationError("solve: instance has no measurement subspace");
  if (inst.data.rows() != inst.n || inst.data.cols() != inst.n || inst.q->n() != inst.n)
    throw ValidationError("solve: instance dimensions disagree");
}

double ascent_slack(double value) { return 1e-12 * (1.0 + std::abs(value)); }

}  // namespace

Solution solve(const ProblemInstance& inst, const SolverOptions& opts) {
  validate(inst);
  if (!(opts.step > 0.0 && opts.step <= 0.5)) throw ValidationError("solve: step must lie in (0, 1/2]");
  if (!(opts.tol_feas > 0.0 && opts.tol_fix > 0.0))
    throw ValidationError("solve: tolerances must be positive");
  if (opts.max_iters < 1) throw ValidationError("solve: max_iters must be >= 1");

  const SubspaceProjector& q = *inst.q;
  const Matrix measured = q.apply_q(inst.data);  // P_Q M
  const double feas_scale = std::max(1.0, measured.norm());
  const Index n = inst.n;

  Solution sol;
  double step = opts.step;
  Matrix y = Matrix::Zero(n, n);
  Matrix y_prev = y;
  double momentum_t = 1.0;
  double last_dual = -std::numeric_limits<double>::infinity();

  // Plain-mode state for step halving.
  Matrix plain_anchor = y;
  Matrix plain_gradient;

  for (int k = 1; k <= opts.max_iters; ++k) {
    Matrix z;
    double next_t = 1.0;
    if (opts.accelerate) {
      next_t = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum_t * momentum_t));
      z = y + ((momentum_t - 1.0) / next_t) * (y - y_prev);
    } else {
      z = y;
    }

    Minimizers mz = minimizers(z, inst, measured);
    if (mz.dual < last_dual - ascent_slack(last_dual)) {
      ++sol.backtracks;
      if (opts.accelerate) {
        // Restart: drop the momentum and take a plain step from y.
        momentum_t = 1.0;
        next_t = 1.0;
        y_prev = y;
        z = y;
        mz = minimizers(z, inst, measured);
      } else if (plain_gradient.size() > 0 && step > 1e-8) {
        step *= 0.5;
        y = plain_anchor + step * plain_gradient;
        --k;
        continue;
      }
    }
    last_dual = mz.dual;
    sol.dual_values.push_back(mz.dual);

    const Matrix gradient = q.apply_q(inst.data - mz.low_rank - mz.sparse);
    const double feas = gradient.norm() / feas_scale;
    Matrix y_next = z + step * gradient;

    sol.iters = k;
    sol.feas_residual = feas;

    const bool check_fix = feas <= opts.tol_feas || opts.trace || k == opts.max_iters;
    if (check_fix) {
      const KktResidual kkt = kkt_residual(mz.low_rank, mz.sparse, y_next, inst);
      sol.fix_residual = std::max(kkt.fix_low_rank, kkt.fix_sparse);
      if (opts.trace)
        sol.trace.push_back({k, feas, kkt.fix_low_rank, kkt.fix_sparse, mz.dual});
      if (feas <= opts.tol_feas && sol.fix_residual <= opts.tol_fix) sol.converged = true;
    }

    if (sol.converged || k == opts.max_iters) {
      sol.low_rank = std::move(mz.low_rank);
      sol.sparse = std::move(mz.sparse);
      sol.dual = std::move(y_next);
      break;
    }

    if (k % 100 == 0) {
      const double drift = q.apply_q_perp(y_next).norm();
      if (drift > 1e-8 * (1.0 + y_next.norm())) {
        std::ostringstream msg;
        msg << "solve: dual variable left Q (||P_Qperp Yt||_F = " << drift << ")";
        throw std::logic_error(msg.str());
      }
      // Both iterates, so the momentum difference carries no Q-perp part.
      y_next = q.apply_q(y_next);
      y = q.apply_q(y);
    }

    if (!opts.accelerate) {
      plain_anchor = z;
      plain_gradient = gradient;
    }
    y_prev = std::move(y);
    y = std::move(y_next);
    momentum_t = next_t;
  }
  return sol;
}

double dual_objective(const Matrix& scaled_dual, const ProblemInstance& inst) {
  validate(inst);
  const double leak = inst.q->apply_q_perp(scaled_dual).norm();
  if (leak > 1e-8 * (1.0 + scaled_dual.norm())) {
    std::ostringstream msg;
    msg << "dual_objective: multiplier is not in Q (||P_Qperp Yt||_F = " << leak << ")";
    throw ValidationError(msg.str());
  }
  return minimizers(scaled_dual, inst, inst.q->apply_q(inst.data)).dual;
}

KktResidual kkt_residual(const Matrix& low_rank, const Matrix& sparse, const Matrix& scaled_dual,
                         const ProblemInstance& inst) {
  validate(inst);
  const Matrix measured = inst.q->apply_q(inst.data);
  KktResidual out;
  out.feas = inst.q->apply_q(inst.data - low_rank - sparse).norm() / std::max(1.0, measured.norm());
  out.fix_low_rank = (low_rank - svt(scaled_dual, inst.tau)).norm() / (1.0 + low_rank.norm());
  out.fix_sparse = (sparse - soft_threshold(scaled_dual, inst.lambda * inst.tau)).norm() /
                   (1.0 + sparse.norm());
  return out;
}

RecoveryError recovery_error(const Matrix& low_rank, const Matrix& sparse,
                             const GroundTruth& truth) {
  if (low_rank.rows() != truth.low_rank.rows() || sparse.rows() != truth.sparse.rows())
    throw ValidationError("recovery_error: shape mismatch with ground truth");
  RecoveryError out;
  out.err_low_rank = (low_rank - truth.low_rank).norm() / std::max(1e-30, truth.low_rank.norm());
  out.err_sparse = (sparse - truth.sparse).norm() / std::max(1e-30, truth.sparse.norm());

  const double threshold = truth.magnitude / 2.0;
  Index tp = 0, fp = 0, fn = 0;
  for (Index j = 0; j < sparse.cols(); ++j) {
    for (Index i = 0; i < sparse.rows(); ++i) {
      const bool predicted = std::abs(sparse(i, j)) > threshold;
      const bool actual = truth.support.contains(i, j);
      tp += predicted && actual;
      fp += predicted && !actual;
      fn += !predicted && actual;
    }
  }
  out.support_f1 = (tp + fp + fn == 0) ? 1.0
                                       : 2.0 * static_cast<double>(tp) /
                                             static_cast<double>(2 * tp + fp + fn);
  return out;
}

RecoveryError recovery_error(const Solution& sol, const GroundTruth& truth) {
  return recovery_error(sol.low_rank, sol.sparse, truth);
}

}  // namespace spcp
