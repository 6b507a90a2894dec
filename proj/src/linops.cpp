#include "spcp/linops.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "spcp/cgls.hpp"
#include "spcp/error.hpp"
#include "spcp/random.hpp"

namespace spcp {

namespace {

void require_square(const Matrix& x, Index n, const char* what) {
  if (x.rows() != n || x.cols() != n) {
    std::ostringstream msg;
    msg << what << ": expected " << n << "x" << n << " matrix, got " << x.rows() << "x"
        << x.cols();
    throw ValidationError(msg.str());
  }
}

double orthonormality_residual(const Matrix& b) {
  return (b.transpose() * b - Matrix::Identity(b.cols(), b.cols())).norm();
}

}  // namespace

double spectral_norm(const Matrix& x) {
  if (x.size() == 0) return 0.0;
  Eigen::BDCSVD<Matrix> svd(x);
  return svd.singularValues()(0);
}

Matrix unvec(const Vector& v, Index n) { return Eigen::Map<const Matrix>(v.data(), n, n); }

// ---------------------------------------------------------------------------
// SupportSet

SupportSet::SupportSet(Index n, std::vector<Entry> entries)
    : n_(n), entries_(std::move(entries)), mask_(Matrix::Zero(n, n)) {
  if (n < 0) throw ValidationError("SupportSet: negative side length");
  for (const auto& [row, col] : entries_) {
    if (row < 0 || row >= n || col < 0 || col >= n) {
      std::ostringstream msg;
      msg << "SupportSet: entry (" << row << ", " << col << ") outside [0," << n << ")^2";
      throw ValidationError(msg.str());
    }
    if (mask_(row, col) != 0.0) {
      std::ostringstream msg;
      msg << "SupportSet: duplicate entry (" << row << ", " << col << ")";
      throw ValidationError(msg.str());
    }
    mask_(row, col) = 1.0;
  }
  std::sort(entries_.begin(), entries_.end(),
            [](const Entry& a, const Entry& b) {
              return a.second != b.second ? a.second < b.second : a.first < b.first;
            });
}

SupportSet SupportSet::of_nonzeros(const Matrix& x) {
  if (x.rows() != x.cols()) throw ValidationError("SupportSet: matrix must be square");
  std::vector<Entry> entries;
  for (Index j = 0; j < x.cols(); ++j)
    for (Index i = 0; i < x.rows(); ++i)
      if (x(i, j) != 0.0) entries.emplace_back(i, j);
  return SupportSet(x.rows(), std::move(entries));
}

SupportSet SupportSet::full(Index n) {
  std::vector<Entry> entries;
  entries.reserve(static_cast<std::size_t>(n * n));
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) entries.emplace_back(i, j);
  return SupportSet(n, std::move(entries));
}

SupportSet SupportSet::empty(Index n) { return SupportSet(n, {}); }

// ---------------------------------------------------------------------------
// TangentSpace

TangentSpace::TangentSpace(Matrix u, Matrix v) : u_(std::move(u)), v_(std::move(v)) {
  if (u_.rows() != v_.rows() || u_.cols() != v_.cols())
    throw ValidationError("TangentSpace: U and V must have the same shape");
  if (u_.cols() > u_.rows()) throw ValidationError("TangentSpace: rank exceeds n");
  if (orthonormality_residual(u_) > 1e-10 || orthonormality_residual(v_) > 1e-10)
    throw ValidationError("TangentSpace: U and V must have orthonormal columns");
}

TangentSpace TangentSpace::of_matrix(const Matrix& x, double rank_tol) {
  if (x.rows() != x.cols()) throw ValidationError("TangentSpace: matrix must be square");
  Eigen::BDCSVD<Matrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sigma = svd.singularValues();
  Index rank = 0;
  if (sigma.size() > 0 && sigma(0) > 0.0)
    while (rank < sigma.size() && sigma(rank) > rank_tol * sigma(0)) ++rank;
  return TangentSpace(svd.matrixU().leftCols(rank), svd.matrixV().leftCols(rank));
}

// ---------------------------------------------------------------------------
// SubspaceProjector

SubspaceProjector::SubspaceProjector(Index n, Matrix basis) : n_(n), basis_(std::move(basis)) {
  if (basis_.cols() == 0) basis_.resize(n * n, 0);
  if (basis_.rows() != n * n) throw ValidationError("SubspaceProjector: basis must have n^2 rows");
  if (orthonormality_residual(basis_) > 1e-10)
    throw ValidationError("SubspaceProjector: basis columns are not orthonormal");
}

Vector SubspaceProjector::coefficients(const Matrix& x) const {
  require_square(x, n_, "SubspaceProjector");
  return basis_.transpose() * vec(x);
}

Matrix SubspaceProjector::from_coefficients(const Vector& c) const {
  if (c.size() != p()) throw ValidationError("SubspaceProjector: coefficient size mismatch");
  if (p() == 0) return Matrix::Zero(n_, n_);
  return unvec(basis_ * c, n_);
}

Matrix SubspaceProjector::apply_q_perp(const Matrix& x) const {
  if (p() == 0) {
    require_square(x, n_, "SubspaceProjector");
    return Matrix::Zero(n_, n_);
  }
  return from_coefficients(coefficients(x));
}

Matrix SubspaceProjector::apply_q(const Matrix& x) const { return x - apply_q_perp(x); }

SubspaceProjector make_subspace_projector(const Matrix& h) {
  const auto side = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(h.rows()))));
  if (side * side != h.rows())
    throw ValidationError("make_subspace_projector: H must have n^2 rows");
  if (h.cols() == 0) return SubspaceProjector(side, Matrix(side * side, 0));
  if (h.cols() > h.rows()) throw ValidationError("make_subspace_projector: p exceeds n^2");

  Eigen::HouseholderQR<Matrix> qr(h);
  Matrix basis = qr.householderQ() * Matrix::Identity(h.rows(), h.cols());

  // Singular values of H equal those of its triangular factor.
  const Matrix r = qr.matrixQR().topRows(h.cols()).triangularView<Eigen::Upper>();
  Eigen::JacobiSVD<Matrix> svd(r);
  const Vector& sigma = svd.singularValues();
  const double smallest = sigma(sigma.size() - 1);
  if (!(smallest > 1e-12 * sigma(0))) {
    std::ostringstream msg;
    msg << "make_subspace_projector: H is rank deficient (smallest singular value "
        << smallest << ", largest " << sigma(0) << ")";
    throw ValidationError(msg.str());
  }
  return SubspaceProjector(side, std::move(basis));
}

// ---------------------------------------------------------------------------
// Proximal maps and projectors

Matrix soft_threshold(const Matrix& x, double t) {
  if (!(t >= 0.0)) throw ValidationError("soft_threshold: threshold must be nonnegative");
  return x.unaryExpr([t](double v) {
    const double mag = std::abs(v) - t;
    return mag > 0.0 ? std::copysign(mag, v) : 0.0;
  });
}

Matrix svt(const Matrix& x, double t) {
  if (!(t >= 0.0)) throw ValidationError("svt: threshold must be nonnegative");
  if (x.size() == 0) return x;
  Eigen::BDCSVD<Matrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sigma = svd.singularValues();
  Index keep = 0;
  while (keep < sigma.size() && sigma(keep) > t) ++keep;
  if (keep == 0) return Matrix::Zero(x.rows(), x.cols());
  const Vector shrunk = sigma.head(keep).array() - t;
  return svd.matrixU().leftCols(keep) * shrunk.asDiagonal() *
         svd.matrixV().leftCols(keep).transpose();
}

Matrix project_support(const Matrix& x, const SupportSet& omega) {
  require_square(x, omega.n(), "project_support");
  return x.cwiseProduct(omega.mask());
}

Matrix project_support_complement(const Matrix& x, const SupportSet& omega) {
  return x - project_support(x, omega);
}

Matrix project_tangent(const Matrix& x, const TangentSpace& t) {
  require_square(x, t.n(), "project_tangent");
  const Matrix& u = t.u();
  const Matrix& v = t.v();
  const Matrix ux = u * (u.transpose() * x);  // U U^T X
  return ux + (x - ux) * v * v.transpose();
}

Matrix project_tangent_complement(const Matrix& x, const TangentSpace& t) {
  return x - project_tangent(x, t);
}

// ---------------------------------------------------------------------------
// Operator norms

NormEstimate operator_norm(const LinearMap& op, const LinearMap& adjoint, Index n,
                           const NormOptions& opts) {
  Pcg64 rng(opts.seed, role_tag("operator_norm"));
  Matrix x(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) x(i, j) = rng.normal();
  x /= x.norm();

  NormEstimate est;
  double prev = 0.0;
  for (int k = 1; k <= opts.max_iters; ++k) {
    const Matrix y = op(x);
    est.value = y.norm();
    est.iterations = k;
    est.last_gap = std::abs(est.value - prev);
    if (est.value == 0.0) {
      est.converged = true;
      return est;
    }
    if (k > 1 && est.last_gap <= opts.tol * est.value) {
      est.converged = true;
      return est;
    }
    prev = est.value;
    Matrix z = adjoint(y);
    const double zn = z.norm();
    if (zn == 0.0) {
      est.converged = true;
      return est;
    }
    x = z / zn;
  }
  return est;
}

NormEstimate operator_norm(const LinearMap& op, Index n, const NormOptions& opts) {
  return operator_norm(op, op, n, opts);
}

NormEstimate projector_product_norm(const LinearMap& pa, const LinearMap& pb, Index n,
                                    const NormOptions& opts) {
  return operator_norm([&](const Matrix& x) { return pa(pb(x)); },
                       [&](const Matrix& x) { return pb(pa(x)); }, n, opts);
}

// ---------------------------------------------------------------------------
// Direct sums

DirectSumProjector::DirectSumProjector(LinearMap pa, LinearMap pb, Index n, DirectSumOptions opts)
    : pa_(std::move(pa)), pb_(std::move(pb)), n_(n), opts_(opts) {
  transversality_ = projector_product_norm(pa_, pb_, n_, opts_.norm).value;
  if (transversality_ >= 1.0 - opts_.transversality_margin) {
    std::ostringstream msg;
    msg << "direct sum: subspaces are not transversal (||P_A P_B|| = " << transversality_ << ")";
    throw ValidationError(msg.str());
  }
}

Matrix DirectSumProjector::operator()(const Matrix& x) const {
  require_square(x, n_, "project_direct_sum");
  const Index nn = n_ * n_;
  // Unknown (a', b') in R^{2 n^2}; forward map a' , b' -> P_A a' + P_B b'.
  auto forward = [&](const Vector& ab) -> Vector {
    const Matrix sum = pa_(unvec(ab.head(nn), n_)) + pb_(unvec(ab.tail(nn), n_));
    return vec(sum);
  };
  auto adjoint = [&](const Vector& r) -> Vector {
    const Matrix rm = unvec(r, n_);
    Vector out(2 * nn);
    out.head(nn) = vec(pa_(rm));
    out.tail(nn) = vec(pb_(rm));
    return out;
  };
  CgOptions cg{opts_.max_iters, opts_.tol, CgStop::normal_residual};
  const CgResult res = cgls(forward, adjoint, Vector(vec(x)), 2 * nn, cg);
  if (!res.converged) {
    std::ostringstream msg;
    msg << "direct sum: CGLS did not converge in " << res.iterations
        << " iterations (normal residual " << res.normal_residual << ")";
    throw ConvergenceError(msg.str());
  }
  return unvec(forward(res.x), n_);
}

Matrix project_direct_sum(const Matrix& x, const LinearMap& pa, const LinearMap& pb,
                          const DirectSumOptions& opts) {
  return DirectSumProjector(pa, pb, x.rows(), opts)(x);
}

// ---------------------------------------------------------------------------

LinearMap support_map(const SupportSet& omega) {
  return [omega](const Matrix& x) { return project_support(x, omega); };
}
LinearMap support_complement_map(const SupportSet& omega) {
  return [omega](const Matrix& x) { return project_support_complement(x, omega); };
}
LinearMap tangent_map(const TangentSpace& t) {
  return [t](const Matrix& x) { return project_tangent(x, t); };
}
LinearMap tangent_complement_map(const TangentSpace& t) {
  return [t](const Matrix& x) { return project_tangent_complement(x, t); };
}
// The projector is captured by reference: it must outlive the returned map.
LinearMap q_map(const SubspaceProjector& q) {
  return [&q](const Matrix& x) { return q.apply_q(x); };
}
LinearMap q_perp_map(const SubspaceProjector& q) {
  return [&q](const Matrix& x) { return q.apply_q_perp(x); };
}

}  // namespace spcp
