#include "spcp/cgls.hpp"

#include <cmath>

namespace spcp {

CgResult cgls(const VectorMap& forward, const VectorMap& adjoint, const Vector& rhs,
              Index cols, const CgOptions& opts) {
  CgResult out;
  out.x = Vector::Zero(cols);
  const double rhs_norm = rhs.norm();
  if (rhs_norm == 0.0) {
    out.converged = true;
    return out;
  }

  Vector r = rhs;
  Vector s = adjoint(r);
  Vector p = s;
  double gamma = s.squaredNorm();
  const double target = opts.tol * rhs_norm;

  auto done = [&](double res, double nres) {
    return opts.stop == CgStop::residual ? res <= target : nres <= target;
  };

  out.residual = rhs_norm;
  out.normal_residual = std::sqrt(gamma);
  if (done(out.residual, out.normal_residual)) {
    out.converged = true;
    return out;
  }

  for (int k = 1; k <= opts.max_iters; ++k) {
    const Vector q = forward(p);
    const double qq = q.squaredNorm();
    if (qq == 0.0) break;
    const double alpha = gamma / qq;
    out.x += alpha * p;
    r -= alpha * q;
    s = adjoint(r);
    const double gamma_next = s.squaredNorm();
    out.iterations = k;
    out.residual = r.norm();
    out.normal_residual = std::sqrt(gamma_next);
    if (done(out.residual, out.normal_residual)) {
      out.converged = true;
      break;
    }
    p = s + (gamma_next / gamma) * p;
    gamma = gamma_next;
  }
  // The recursive residual drifts from the true one over long runs.
  const Vector true_r = rhs - forward(out.x);
  out.residual = true_r.norm();
  out.normal_residual = adjoint(true_r).norm();
  if (opts.stop == CgStop::residual) out.converged = out.residual <= 10.0 * target;
  return out;
}

}  // namespace spcp
