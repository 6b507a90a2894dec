#pragma once

#include <functional>

#include "spcp/linops.hpp"

namespace spcp {

using VectorMap = std::function<Vector(const Vector&)>;

enum class CgStop {
  /// ||b - A x|| <= tol ||b||; for consistent systems.
  residual,
  /// ||A^T (b - A x)|| <= tol ||b||; for least-squares problems.
  normal_residual,
};

struct CgOptions {
  int max_iters = 5000;
  double tol = 1e-10;
  CgStop stop = CgStop::residual;
};

struct CgResult {
  Vector x;
  int iterations = 0;
  double residual = 0.0;
  double normal_residual = 0.0;
  bool converged = false;
};

/// CGLS (CG on the normal equations A^T A x = A^T b) from x0 = 0, so the
/// iterates stay in range(A^T) and the limit is the minimum-norm
/// least-squares solution.
CgResult cgls(const VectorMap& forward, const VectorMap& adjoint, const Vector& rhs,
              Index cols, const CgOptions& opts = {});

}  // namespace spcp
