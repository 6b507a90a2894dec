#include "spcp/model.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/SVD>

#include "spcp/error.hpp"
#include "spcp/random.hpp"

namespace spcp {

namespace {

constexpr std::uint64_t kTagLowRank = role_tag("low_rank");
constexpr std::uint64_t kTagSparse = role_tag("sparse");
constexpr std::uint64_t kTagSubspace = role_tag("subspace");

constexpr std::uint64_t kTagFactorA = role_tag("factor_a");
constexpr std::uint64_t kTagFactorB = role_tag("factor_b");
constexpr std::uint64_t kTagSupport = role_tag("support");
constexpr std::uint64_t kTagSigns = role_tag("signs");
constexpr std::uint64_t kTagMeasurements = role_tag("measurements");

Matrix gaussian(Index rows, Index cols, double scale, std::uint64_t seed, std::uint64_t tag) {
  Pcg64 rng(derive_seed(seed, tag), tag);
  Matrix out(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) out(i, j) = scale * rng.normal();
  return out;
}

}  // namespace

GroundTruth GroundTruth::from_parts(Matrix low_rank, Matrix sparse, double rho, double magnitude) {
  if (low_rank.rows() != low_rank.cols() || sparse.rows() != low_rank.rows() ||
      sparse.cols() != low_rank.cols())
    throw ValidationError("ground truth: L0 and S0 must be square and of equal size");
  GroundTruth truth;
  truth.support = SupportSet::of_nonzeros(sparse);
  // Rank decisions use 1e-10 relative to sigma_max.
  truth.tangent = TangentSpace::of_matrix(low_rank, 1e-10);
  truth.rank = truth.tangent.rank();
  truth.low_rank = std::move(low_rank);
  truth.sparse = std::move(sparse);
  truth.rho = rho;
  truth.magnitude = magnitude;
  return truth;
}

std::string to_string(const TauMode& mode) {
  if (std::holds_alternative<tau_mode::Criterion>(mode)) return "criterion";
  if (std::holds_alternative<tau_mode::Oracle>(mode)) return "oracle";
  std::ostringstream out;
  out.precision(17);
  out << std::get<tau_mode::Explicit>(mode).value;
  return out.str();
}

TauMode parse_tau_mode(const std::string& text) {
  if (text == "criterion") return tau_mode::Criterion{};
  if (text == "oracle") return tau_mode::Oracle{};
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || !(value > 0.0) || !std::isfinite(value))
    throw ValidationError("tau mode must be 'criterion', 'oracle' or a positive number, got '" +
                          text + "'");
  return tau_mode::Explicit{value};
}

Matrix gen_low_rank(Index n, Index r, std::uint64_t seed) {
  if (n < 1) throw ValidationError("gen_low_rank: n must be >= 1");
  if (r < 1 || r > n) throw ValidationError("gen_low_rank: rank r must satisfy 1 <= r <= n");
  const Matrix a = gaussian(n, r, 1.0, seed, kTagFactorA);
  const Matrix b = gaussian(n, r, 1.0, seed, kTagFactorB);
  return a * b.transpose();
}

SparseSample gen_sparse(Index n, double rho, double magnitude, std::uint64_t seed) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw ValidationError("gen_sparse: rho must lie in [0,1]");
  if (!(magnitude > 0.0)) throw ValidationError("gen_sparse: magnitude must be positive");
  Pcg64 support_rng(derive_seed(seed, kTagSupport), kTagSupport);
  Pcg64 sign_rng(derive_seed(seed, kTagSigns), kTagSigns);
  Matrix values = Matrix::Zero(n, n);
  std::vector<SupportSet::Entry> entries;
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      // Both streams advance once per entry so the support does not depend on signs.
      const bool included = support_rng.bernoulli(rho);
      const bool negative = sign_rng.bernoulli(0.5);
      if (included) {
        values(i, j) = negative ? -magnitude : magnitude;
        entries.emplace_back(i, j);
      }
    }
  }
  return {std::move(values), SupportSet(n, std::move(entries))};
}

Matrix gaussian_measurements(Index n, Index p, std::uint64_t seed) {
  if (n < 1) throw ValidationError("gen_subspace: n must be >= 1");
  if (p < 0 || 4 * p >= n * n)
    throw ValidationError("gen_subspace: p must satisfy 0 <= p < n^2/4");
  return gaussian(n * n, p, 1.0 / static_cast<double>(n), seed, kTagMeasurements);
}

SubspaceProjector gen_subspace(Index n, Index p, std::uint64_t seed) {
  return make_subspace_projector(gaussian_measurements(n, p, seed));
}

Incoherence incoherence(const Matrix& low_rank) {
  if (low_rank.rows() != low_rank.cols()) throw ValidationError("incoherence: matrix must be square");
  if (low_rank.size() == 0 || max_abs(low_rank) == 0.0)
    throw ValidationError("incoherence: zero matrix has no incoherence parameter");
  const TangentSpace t = TangentSpace::of_matrix(low_rank);
  const auto n = static_cast<double>(low_rank.rows());
  const auto r = static_cast<double>(t.rank());
  Incoherence out;
  out.rank = t.rank();
  out.row_u = (n / r) * t.u().rowwise().squaredNorm().maxCoeff();
  out.row_v = (n / r) * t.v().rowwise().squaredNorm().maxCoeff();
  const double uv_inf = max_abs(t.uv());
  out.joint = (n * n / r) * uv_inf * uv_inf;
  out.mu = std::max({out.row_u, out.row_v, out.joint});
  return out;
}

double tau_criterion(const Matrix& data, double lambda) {
  if (!(lambda > 0.0)) throw ValidationError("tau_criterion: lambda must be positive");
  const double frob = data.norm();
  if (frob == 0.0) throw ValidationError("tau_criterion: M must be nonzero");
  return 8.0 * std::sqrt(15.0) * frob / (3.0 * lambda);
}

void validate_alpha_beta(double alpha, double beta) {
  if (!(alpha > 0.25)) throw ValidationError("alpha > 1/4 violated (alpha = " + std::to_string(alpha) + ")");
  if (!(beta > 0.5)) throw ValidationError("beta > 1/2 violated (beta = " + std::to_string(beta) + ")");
  if (!(alpha + beta <= 1.0))
    throw ValidationError("alpha + beta <= 1 violated (alpha + beta = " +
                          std::to_string(alpha + beta) + ")");
}

TauOracle tau_oracle(const GroundTruth& truth, const Matrix& data, double lambda, double alpha,
                     double beta) {
  validate_alpha_beta(alpha, beta);
  if (!(lambda > 0.0)) throw ValidationError("tau_oracle: lambda must be positive");
  const double off_inf = max_abs(project_support_complement(truth.low_rank, truth.support));
  const double on_frob = project_support(truth.low_rank - truth.sparse, truth.support).norm();
  TauOracle out;
  out.tau1 = off_inf / ((beta - 0.5) * lambda);
  out.tau2 = on_frob / ((alpha - 0.25) * lambda);
  out.tau3 = 4.0 * (off_inf + on_frob) / lambda;
  out.frob_data = data.norm();
  out.tau = std::max({out.tau1, out.tau2, out.tau3, out.frob_data});
  return out;
}

ProblemInstance build_instance(const InstanceParams& params) {
  if (params.n < 1) throw ValidationError("n must be >= 1");
  ProblemInstance inst;
  inst.n = params.n;
  inst.r = params.r;
  inst.rho = params.rho;
  inst.magnitude = params.magnitude;
  inst.seed = params.seed;
  inst.mode = params.mode;

  Matrix low_rank = gen_low_rank(params.n, params.r, derive_seed(params.seed, kTagLowRank));
  SparseSample sparse =
      gen_sparse(params.n, params.rho, params.magnitude, derive_seed(params.seed, kTagSparse));
  inst.q = std::make_shared<const SubspaceProjector>(
      gen_subspace(params.n, params.p, derive_seed(params.seed, kTagSubspace)));

  inst.data = low_rank + sparse.values;
  inst.lambda = 1.0 / std::sqrt(static_cast<double>(params.n));
  inst.truth = GroundTruth::from_parts(std::move(low_rank), std::move(sparse.values), params.rho,
                                       params.magnitude);

  if (std::holds_alternative<tau_mode::Criterion>(params.mode)) {
    inst.tau = tau_criterion(inst.data, inst.lambda);
  } else if (std::holds_alternative<tau_mode::Oracle>(params.mode)) {
    inst.tau = tau_oracle(*inst.truth, inst.data, inst.lambda).tau;
  } else {
    inst.tau = std::get<tau_mode::Explicit>(params.mode).value;
    if (!(inst.tau > 0.0)) throw ValidationError("explicit tau must be positive");
  }
  return inst;
}

double nuclear_norm(const Matrix& x) {
  if (x.size() == 0) return 0.0;
  Eigen::BDCSVD<Matrix> svd(x);
  return svd.singularValues().sum();
}

double primal_objective(const Matrix& low_rank, const Matrix& sparse, double lambda, double tau) {
  return nuclear_norm(low_rank) + lambda * sparse.cwiseAbs().sum() +
         (low_rank.squaredNorm() + sparse.squaredNorm()) / (2.0 * tau);
}

std::vector<BoundCheck> inequality_chain(const GroundTruth& truth, const Matrix& data, double tau) {
  const double m = data.norm();
  if (!(tau >= m)) throw ValidationError("inequality_chain: requires tau >= ||M||_F");
  const double s3 = std::sqrt(3.0) / 3.0;
  const Matrix& l0 = truth.low_rank;
  auto check = [](std::string name, double measured, double bound) {
    return BoundCheck{std::move(name), measured, bound, measured <= bound};
  };
  return {
      check("pomega_l0", project_support(l0, truth.support).norm(), s3 * m),
      check("pomega_l0_s0", project_support(l0 - truth.sparse, truth.support).norm(),
            std::sqrt(15.0) / 3.0 * m),
      check("l0", l0.norm(), (s3 + 2.0) * m),
      check("xi", (truth.tangent.uv() + l0 / tau).norm(), static_cast<double>(truth.rank) + s3 + 2.0),
  };
}

}  // namespace spcp
