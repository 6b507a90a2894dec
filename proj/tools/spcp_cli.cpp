// spcp: generate, solve and certify strongly convex PCP instances; run batch experiments.
//
// Exit codes: 0 success, 1 internal error, 2 validation, 3 non-convergence,
// 4 inconclusive certificate.

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "spcp/certificate.hpp"
#include "spcp/error.hpp"
#include "spcp/experiments.hpp"
#include "spcp/matrix_io.hpp"
#include "spcp/model.hpp"
#include "spcp/solver.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kInternal = 1, kValidation = 2, kNoConvergence = 3, kInconclusive = 4 };

void echo_config(const json& config) { std::cout << "CONFIG: " << config.dump() << std::endl; }

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw spcp::ValidationError("cannot open '" + path.string() + "' for writing");
  out << std::setw(2) << j << '\n';
}

struct GenArgs {
  long n = 60;
  long r = 2;
  double rho = 0.05;
  long p = 60;
  double magnitude = 1.0;
  std::uint64_t seed = 1;
  std::string tau_mode = "criterion";
  std::string format = "binary";
  std::string out;
};

int run_gen(const GenArgs& a) {
  spcp::InstanceParams params;
  params.n = a.n;
  params.r = a.r;
  params.rho = a.rho;
  params.p = a.p;
  params.magnitude = a.magnitude;
  params.seed = a.seed;
  params.mode = spcp::parse_tau_mode(a.tau_mode);
  const auto format = spcp::parse_matrix_format(a.format);
  const spcp::ProblemInstance inst = spcp::build_instance(params);
  json config = spcp::instance_summary(inst);
  config["command"] = "gen";
  config["format"] = spcp::to_string(format);
  config["out"] = a.out;
  echo_config(config);
  spcp::save_instance(inst, a.out, format);
  return kOk;
}

struct SolveArgs {
  std::string instance;
  double tol = 1e-7;
  int max_iters = 50000;
  double step = 0.5;
  bool no_accel = false;
  bool trace = false;
  std::string format = "binary";
  std::string out;
};

int run_solve(const SolveArgs& a) {
  const spcp::ProblemInstance inst = spcp::load_instance(a.instance);
  spcp::SolverOptions opts;
  opts.tol_feas = a.tol;
  opts.tol_fix = a.tol;
  opts.max_iters = a.max_iters;
  opts.step = a.step;
  opts.accelerate = !a.no_accel;
  opts.trace = a.trace;
  const auto format = spcp::parse_matrix_format(a.format);

  json config = spcp::instance_summary(inst);
  config["command"] = "solve";
  config["instance"] = a.instance;
  config["solver"] = {{"tol", opts.tol_feas}, {"max_iters", opts.max_iters}, {"step", opts.step},
                      {"accelerate", opts.accelerate}, {"trace", opts.trace}};
  config["out"] = a.out;
  echo_config(config);

  const spcp::Solution sol = spcp::solve(inst, opts);
  json extra = json::object();
  std::cout << "iters=" << sol.iters << " converged=" << (sol.converged ? "true" : "false")
            << " feas=" << sol.feas_residual << " fix=" << sol.fix_residual << '\n';
  if (inst.truth) {
    const spcp::RecoveryError err = spcp::recovery_error(sol, *inst.truth);
    extra = {{"err_low_rank", err.err_low_rank}, {"err_sparse", err.err_sparse}, {"support_f1", err.support_f1}};
    std::cout << std::setprecision(6) << "errL=" << err.err_low_rank << " errS=" << err.err_sparse
              << " f1=" << err.support_f1 << '\n';
  }
  if (!a.out.empty()) {
    spcp::save_solution(sol, a.out, format, extra);
    if (a.trace) spcp::write_trace_csv(fs::path(a.out) / "trace.csv", sol.trace);
  }
  if (!sol.converged) {
    std::cerr << "solve: no convergence within " << opts.max_iters << " iterations\n";
    return kNoConvergence;
  }
  return kOk;
}

struct CertifyArgs {
  std::string instance;
  double alpha = spcp::kDefaultAlpha;
  double beta = spcp::kDefaultBeta;
  std::string out;
};

int run_certify(const CertifyArgs& a) {
  const spcp::ProblemInstance inst = spcp::load_instance(a.instance);
  json config = spcp::instance_summary(inst);
  config["command"] = "certify";
  config["instance"] = a.instance;
  config["alpha"] = a.alpha;
  config["beta"] = a.beta;
  config["out"] = a.out;
  echo_config(config);
  if (!inst.truth) throw spcp::ValidationError("certify: instance has no ground truth (L0, S0)");
  const spcp::GroundTruth& truth = *inst.truth;

  const spcp::CertificateResult cert =
      spcp::certificate_search(truth, inst.projector(), inst.tau, inst.lambda, a.alpha, a.beta);
  json report = spcp::to_json(cert.report);
  if (cert.report.verdict != spcp::Verdict::precondition_failed) {
    try {
      const spcp::WqResult wq = spcp::build_wq(truth.tangent, truth.low_rank, inst.data, inst.tau,
                                               inst.projector(), truth.support,
                                               spcp::WqMethod::least_squares);
      const spcp::WqBoundReport bounds = spcp::check_wq(wq.wq, truth.support, inst.lambda);
      report["wq"] = {{"xi", wq.xi},
                      {"transversality", wq.transversality},
                      {"series_norm", wq.series_norm},
                      {"spectral", spcp::to_json(bounds.spectral)},
                      {"off_support_inf", spcp::to_json(bounds.off_support_inf)}};
    } catch (const std::exception& e) {
      report["wq"] = {{"error", e.what()}};
    }
    const spcp::DimConditionReport dim =
        spcp::check_dim_condition(inst.projector(), truth.tangent, truth.support);
    report["dim_condition"] = {{"dim_q_perp", dim.dim_q_perp}, {"dim_t", dim.dim_t},
                               {"dim_omega", dim.dim_omega},   {"norm_q_t", dim.norm_q_t},
                               {"norm_t_omega", dim.norm_t_omega}, {"norm_omega_q", dim.norm_omega_q},
                               {"exact", dim.exact},           {"verified", dim.verified},
                               {"message", dim.message}};
  }
  if (!a.out.empty()) write_json(a.out, report);
  std::cout << "verdict=" << spcp::to_string(cert.report.verdict) << " ||W||=" << cert.report.norm_w
            << " ||F||_inf=" << cert.report.inf_f << " ||P_Omega D||_F=" << cert.report.frob_pd
            << " transversality=" << cert.report.transversality << '\n'
            << cert.report.message << '\n';
  switch (cert.report.verdict) {
    case spcp::Verdict::certified: return kOk;
    case spcp::Verdict::inconclusive: return kInconclusive;
    case spcp::Verdict::precondition_failed:
      std::cerr << "error: " << cert.report.message << '\n';
      return kValidation;
  }
  return kInternal;
}

struct BatchArgs {
  std::string config;
  std::string out_dir;
  int threads = 0;
  std::vector<double> multipliers;
};

spcp::ExperimentConfig resolve_batch(const BatchArgs& a, const std::string& command) {
  spcp::ExperimentConfig c = spcp::load_config(a.config);
  if (!a.out_dir.empty()) c.output_dir = a.out_dir;
  if (a.threads > 0) c.threads = a.threads;
  if (!a.multipliers.empty()) c.multipliers = a.multipliers;
  c.validate();
  json echo = spcp::to_json(c);
  echo["command"] = command;
  echo["lambda"] = 1.0 / std::sqrt(static_cast<double>(c.n));
  echo_config(echo);
  return c;
}

int run_phase(const BatchArgs& a) {
  const spcp::PhaseResult res = spcp::phase_grid(resolve_batch(a, "phase"));
  std::cout << "cells=" << res.cells.size() << " records=" << res.records.size()
            << " overall_success_rate=" << res.summary["overall_success_rate"].dump() << '\n';
  return kOk;
}

int run_tau_sweep(const BatchArgs& a) {
  const spcp::SweepResult res = spcp::tau_sweep(resolve_batch(a, "tau-sweep"));
  for (const auto& row : res.rows)
    std::cout << "multiplier=" << row.multiplier << " median_errL=" << row.median_err_low_rank
              << " median_errS=" << row.median_err_sparse << " success_rate=" << row.success_rate << '\n';
  return kOk;
}

int run_lemmas(const BatchArgs& a) {
  const json report = spcp::lemma_suite(resolve_batch(a, "lemmas"));
  for (const auto& [name, c] : report["checks"].items())
    std::cout << name << ": pass_rate=" << c["pass_rate"].dump() << " worst_margin=" << c["worst_margin"].dump()
              << '\n';
  return kOk;
}

const char* kFormatsText = R"(Matrix files
  binary (.bin): 6-byte magic "SCPCP1", u64 rows, u64 cols, then rows*cols
                 float64 values in column-major order; all little-endian.
  csv (.csv):    one matrix row per line, comma separated, 17 significant digits.
  Readers detect the format from the magic bytes.

Instance directory (gen --out DIR)
  manifest.json  {"n", "r", "rho", "p", "magnitude", "lambda", "tau", "tau_mode",
                  "seed", "format", "paths": {"M", "qperp_basis", "L0", "S0"}}
  M              data matrix, n x n
  qperp_basis    orthonormal basis of Q-perp as n^2 x p (vec is column-major)
  L0, S0         ground truth (optional for solve, required for certify)

Solution directory (solve --out DIR)
  solution.json  {"iters", "converged", "feas_residual", "fix_residual",
                  "err_low_rank", "err_sparse", "support_f1", "paths"}
  L_hat, S_hat, Y_tilde (scaled multiplier tau * Y), trace.csv with --trace:
                 iter,feas,fixL,fixS,dual

Certificate report (certify --out FILE): JSON with equality_residual,
  q_membership_residual, pt_w_residual, pomega_f_residual, scale, norm_W, inf_F,
  frob_PD, transversality, alpha, beta, lambda, verdict, message, wq, dim_condition.

Experiment config (phase / tau-sweep / lemmas --config FILE); every key optional:
  {"n": 60,
   "grid": {"r": [1, 2, 4], "rho": [0.02, 0.05, 0.1], "p": [0, 30, 60]},
   "trials_per_cell": 10,
   "tau_mode": "criterion" | "oracle" | "sweep" | <positive number>,
   "multipliers": [0.001, 0.01, 0.1, 1, 10],
   "success_threshold": 0.001,
   "base_seed": 1,
   "output_dir": "out",
   "threads": 1,
   "magnitude": 1.0,
   "timing": true,
   "solver": {"tol": 1e-7, "max_iters": 50000, "accelerate": true},
   "checks": ["wq_spectral", "wq_off_support_inf", "wq_methods_agree",
              "wq_constraints", "lemma25", "lemma26", "dim_condition",
              "pomega_l0", "pomega_l0_s0", "l0", "xi", "certificate"]}
  Unknown keys are rejected. "timing": false writes wall_time = 0.

Record CSV (records.csv)
  )";

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Strongly convex principal component pursuit with reduced measurements"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate an instance M = L0 + S0 with a random Q-perp");
  gen_cmd->add_option("--n", gen.n, "matrix side length")->capture_default_str();
  gen_cmd->add_option("--r", gen.r, "rank of L0, 1 <= r <= n")->capture_default_str();
  gen_cmd->add_option("--rho", gen.rho, "Bernoulli density of supp(S0), in [0, 1]")->capture_default_str();
  gen_cmd->add_option("--p", gen.p, "dimension of Q-perp, 0 <= p < n^2/4")->capture_default_str();
  gen_cmd->add_option("--magnitude", gen.magnitude, "magnitude of the entries of S0")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "64-bit seed")->capture_default_str();
  gen_cmd->add_option("--tau-mode", gen.tau_mode, "criterion | oracle | <positive number>")->capture_default_str();
  gen_cmd->add_option("--format", gen.format, "matrix format: binary | csv")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "output directory")->required();

  SolveArgs solve;
  auto* solve_cmd = app.add_subcommand("solve", "Solve an instance by dual gradient ascent");
  solve_cmd->add_option("--instance", solve.instance, "instance directory or manifest.json")->required();
  solve_cmd->add_option("--tol", solve.tol, "feasibility and fixed-point tolerance")->capture_default_str();
  solve_cmd->add_option("--max-iters", solve.max_iters, "iteration cap (exit 3 when reached)")->capture_default_str();
  solve_cmd->add_option("--step", solve.step, "step on the scaled multiplier, in (0, 1/2]")->capture_default_str();
  solve_cmd->add_flag("--no-accel", solve.no_accel, "plain ascent without momentum");
  solve_cmd->add_flag("--trace", solve.trace, "write trace.csv into --out");
  solve_cmd->add_option("--format", solve.format, "matrix format: binary | csv")->capture_default_str();
  solve_cmd->add_option("--out", solve.out, "output directory for the solution");

  CertifyArgs cert;
  auto* cert_cmd = app.add_subcommand("certify", "Search for an optimality certificate of (L0, S0)");
  cert_cmd->add_option("--instance", cert.instance, "instance directory with ground truth")->required();
  cert_cmd->add_option("--alpha", cert.alpha, "bound on ||P_Omega D||_F; alpha > 1/4")->capture_default_str();
  cert_cmd->add_option("--beta", cert.beta, "bound on ||W|| and ||F||_inf; beta > 1/2, alpha + beta <= 1")
      ->capture_default_str();
  cert_cmd->add_option("--out", cert.out, "report JSON path");

  BatchArgs phase, sweep, lemmas;
  auto add_batch = [&app](const char* name, const char* help, BatchArgs& args) {
    auto* cmd = app.add_subcommand(name, help);
    cmd->add_option("--config", args.config, "experiment config JSON (see 'formats')")->required();
    cmd->add_option("--out-dir", args.out_dir, "overrides output_dir");
    cmd->add_option("--threads", args.threads, "overrides threads");
    return cmd;
  };
  auto* phase_cmd = add_batch("phase", "Phase-transition grid over (r, rho, p)", phase);
  auto* sweep_cmd = add_batch("tau-sweep",
                              "Solve at tau = multiplier * criterion; default multipliers "
                              "{1e-3, 1e-2, 1e-1, 1, 10}",
                              sweep);
  sweep_cmd->add_option("--multipliers", sweep.multipliers,
                        "overrides multipliers (default 1e-3 1e-2 1e-1 1 10)");
  auto* lemma_cmd = add_batch("lemmas", "Monte-Carlo pass rates of the subspace and norm inequalities", lemmas);
  auto* formats_cmd = app.add_subcommand("formats", "Describe file formats and the config schema");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidation;
  }

  try {
    if (*gen_cmd) return run_gen(gen);
    if (*solve_cmd) return run_solve(solve);
    if (*cert_cmd) return run_certify(cert);
    if (*phase_cmd) return run_phase(phase);
    if (*sweep_cmd) return run_tau_sweep(sweep);
    if (*lemma_cmd) return run_lemmas(lemmas);
    if (*formats_cmd) {
      std::cout << kFormatsText << spcp::kRecordHeader << "\n  status: ok | failed | invalid\n";
      return kOk;
    }
  } catch (const spcp::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const spcp::ConvergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNoConvergence;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kInternal;
}
