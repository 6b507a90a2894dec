#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace spcp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// A linear map on n x n matrices.
using LinearMap = std::function<Matrix(const Matrix&)>;

/// Frobenius inner product <X, Y> = trace(X^T Y).
inline double inner(const Matrix& x, const Matrix& y) { return x.cwiseProduct(y).sum(); }

/// Largest absolute entry.
inline double max_abs(const Matrix& x) { return x.size() == 0 ? 0.0 : x.cwiseAbs().maxCoeff(); }

/// Spectral norm (largest singular value), via a full SVD.
double spectral_norm(const Matrix& x);

/// Column-major vectorization and its inverse.
inline Eigen::Map<const Vector> vec(const Matrix& x) { return {x.data(), x.size()}; }
Matrix unvec(const Vector& v, Index n);

/// Index set of an n x n matrix: the support Omega of the sparse component.
class SupportSet {
 public:
  using Entry = std::pair<Index, Index>;

  SupportSet() = default;
  /// Throws ValidationError on out-of-range or duplicate entries.
  SupportSet(Index n, std::vector<Entry> entries);

  /// Exact support of x (entries that are not exactly zero).
  static SupportSet of_nonzeros(const Matrix& x);
  static SupportSet full(Index n);
  static SupportSet empty(Index n);

  Index n() const { return n_; }
  Index size() const { return static_cast<Index>(entries_.size()); }
  bool contains(Index row, Index col) const { return mask_(row, col) != 0.0; }
  /// Entries sorted in column-major order.
  const std::vector<Entry>& entries() const { return entries_; }
  /// 0/1 indicator matrix.
  const Matrix& mask() const { return mask_; }

  bool operator==(const SupportSet& other) const { return n_ == other.n_ && entries_ == other.entries_; }

 private:
  Index n_ = 0;
  std::vector<Entry> entries_;
  Matrix mask_;
};

/// Tangent space T at a rank-r matrix U S V^T: { U A^T + B V^T }.
class TangentSpace {
 public:
  TangentSpace() = default;
  /// U and V must be n x r with orthonormal columns (Frobenius residual of
  /// U^T U - I below 1e-10); throws ValidationError otherwise.
  TangentSpace(Matrix u, Matrix v);

  /// From the compact SVD of x; singular values at or below
  /// rank_tol * sigma_max are treated as zero.
  static TangentSpace of_matrix(const Matrix& x, double rank_tol = 1e-12);

  Index n() const { return u_.rows(); }
  Index rank() const { return u_.cols(); }
  /// dim T = 2nr - r^2.
  Index dimension() const { return 2 * n() * rank() - rank() * rank(); }
  const Matrix& u() const { return u_; }
  const Matrix& v() const { return v_; }
  /// U V^T.
  Matrix uv() const { return u_ * v_.transpose(); }

 private:
  Matrix u_;
  Matrix v_;
};

/// Projector onto Q, stored as an orthonormal basis of vec(Q-perp).
///
/// P_{Q-perp} X = mat(B B^T vec X) and P_Q X = X - P_{Q-perp} X, where B is
/// the n^2 x p basis. p = 0 gives P_Q = identity.
class SubspaceProjector {
 public:
  SubspaceProjector() = default;
  /// Wraps an already orthonormal basis; throws ValidationError when
  /// ||B^T B - I||_F > 1e-10.
  SubspaceProjector(Index n, Matrix basis);

  Index n() const { return n_; }
  Index p() const { return basis_.cols(); }
  const Matrix& basis() const { return basis_; }

  /// Coordinates B^T vec(X) of the Q-perp component.
  Vector coefficients(const Matrix& x) const;
  /// mat(B c).
  Matrix from_coefficients(const Vector& c) const;

  Matrix apply_q_perp(const Matrix& x) const;
  Matrix apply_q(const Matrix& x) const;

 private:
  Index n_ = 0;
  Matrix basis_;
};

/// Entrywise shrinkage sign(x) max(|x| - t, 0). Throws on t < 0.
Matrix soft_threshold(const Matrix& x, double t);

/// Singular value thresholding U diag(max(sigma - t, 0)) V^T. Throws on t < 0.
Matrix svt(const Matrix& x, double t);

/// P_Omega: keep entries on the support, zero elsewhere.
Matrix project_support(const Matrix& x, const SupportSet& omega);
/// P_{Omega-perp}.
Matrix project_support_complement(const Matrix& x, const SupportSet& omega);

/// P_T X = U U^T X + X V V^T - U U^T X V V^T.
Matrix project_tangent(const Matrix& x, const TangentSpace& t);
/// P_{T-perp} X = (I - U U^T) X (I - V V^T).
Matrix project_tangent_complement(const Matrix& x, const TangentSpace& t);

/// Orthonormalizes the columns of H (n^2 x p) by thin QR. Rejects H whose
/// smallest singular value is at or below 1e-12 times the largest.
SubspaceProjector make_subspace_projector(const Matrix& h);

struct NormOptions {
  int max_iters = 1000;
  double tol = 1e-9;
  std::uint64_t seed = 0x5eed;
};

struct NormEstimate {
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
  /// |est_k - est_{k-1}| at exit.
  double last_gap = 0.0;
};

/// Largest singular value of `op` by power iteration on adjoint(op(.)),
/// started from a seeded Gaussian matrix.
NormEstimate operator_norm(const LinearMap& op, const LinearMap& adjoint, Index n,
                           const NormOptions& opts = {});
/// Self-adjoint overload.
NormEstimate operator_norm(const LinearMap& op, Index n, const NormOptions& opts = {});

/// Norm of the product P_A P_B of two orthogonal projectors.
NormEstimate projector_product_norm(const LinearMap& pa, const LinearMap& pb, Index n,
                                    const NormOptions& opts = {});

struct DirectSumOptions {
  int max_iters = 2000;
  double tol = 1e-10;
  /// Pairs with ||P_A P_B|| >= 1 - transversality_margin are rejected.
  double transversality_margin = 1e-6;
  NormOptions norm;
};

/// Orthogonal projector onto A + B for two transversal subspaces given by
/// their orthogonal projectors. The sum is solved as the least-squares
/// problem min_{a in A, b in B} ||X - a - b||_F by CGLS.
class DirectSumProjector {
 public:
  /// Estimates ||P_A P_B|| once; throws ValidationError for non-transversal pairs.
  DirectSumProjector(LinearMap pa, LinearMap pb, Index n, DirectSumOptions opts = {});

  /// Throws ConvergenceError when CGLS hits max_iters.
  Matrix operator()(const Matrix& x) const;

  double transversality() const { return transversality_; }

 private:
  LinearMap pa_;
  LinearMap pb_;
  Index n_;
  DirectSumOptions opts_;
  double transversality_ = 0.0;
};

/// One-shot version of DirectSumProjector.
Matrix project_direct_sum(const Matrix& x, const LinearMap& pa, const LinearMap& pb,
                          const DirectSumOptions& opts = {});

/// Convenience wrappers turning the projectors above into LinearMaps.
LinearMap support_map(const SupportSet& omega);
LinearMap support_complement_map(const SupportSet& omega);
LinearMap tangent_map(const TangentSpace& t);
LinearMap tangent_complement_map(const TangentSpace& t);
/// The q maps hold a reference: `q` must outlive them.
LinearMap q_map(const SubspaceProjector& q);
LinearMap q_perp_map(const SubspaceProjector& q);

}  // namespace spcp
