#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "spcp/model.hpp"
#include "spcp/solver.hpp"

namespace spcp {

enum class TauPolicy { criterion, oracle, explicit_value, sweep };

/// Batch configuration. JSON form (unknown keys are rejected):
///
///   {"n": 60,
///    "grid": {"r": [1, 2, 4], "rho": [0.02, 0.05, 0.1], "p": [0, 30, 60]},
///    "trials_per_cell": 10,
///    "tau_mode": "criterion" | "oracle" | "sweep" | <positive number>,
///    "multipliers": [0.001, 0.01, 0.1, 1, 10],
///    "success_threshold": 0.001, "base_seed": 1, "output_dir": "out",
///    "threads": 1, "magnitude": 1.0, "timing": true,
///    "solver": {"tol": 1e-7, "max_iters": 50000, "accelerate": true},
///    "checks": ["wq_spectral", ...]}
///
/// Every key is optional; missing keys take the defaults below.
struct ExperimentConfig {
  Index n = 60;
  std::vector<Index> ranks{1, 2, 4};
  std::vector<double> rhos{0.02, 0.05, 0.1};
  std::vector<Index> ps{0, 30, 60};
  int trials_per_cell = 10;
  TauPolicy tau_policy = TauPolicy::criterion;
  double tau_value = 0.0;  // explicit_value only
  std::vector<double> multipliers{1e-3, 1e-2, 1e-1, 1.0, 10.0};
  double success_threshold = 1e-3;
  std::uint64_t base_seed = 1;
  std::filesystem::path output_dir = "out";
  int threads = 1;
  double magnitude = 1.0;
  /// false writes wall_time = 0 so that record files are byte-comparable.
  bool timing = true;
  double solver_tol = 1e-7;
  int solver_max_iters = 50000;
  bool solver_accelerate = true;
  /// Lemma-suite checks to run; empty means all of lemma_check_names().
  std::vector<std::string> checks;

  /// Throws ValidationError on an empty grid list, r < 1, rho outside [0,1],
  /// p < 0, trials < 1, threshold <= 0, threads < 1, non-positive
  /// multipliers or an unknown check name.
  void validate() const;
  SolverOptions solver_options() const;
};

std::string to_string(TauPolicy policy);

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

/// One (cell, trial). status: "ok", "failed" (the trial threw; errors are
/// +inf) or "invalid" (cell parameters impossible, e.g. r > n).
struct ExperimentRecord {
  Index cell = 0;
  Index trial = 0;
  Index n = 0;
  Index r = 0;
  double rho = 0.0;
  Index p = 0;
  double tau_multiplier = 1.0;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  double tau = 0.0;
  double mu = 0.0;
  double err_low_rank = 0.0;
  double err_sparse = 0.0;
  double support_f1 = 0.0;
  int iters = 0;
  bool converged = false;
  std::string status = "ok";
  double wall_time = 0.0;

  bool operator==(const ExperimentRecord&) const = default;
};

/// CSV header shared by write_records / read_records.
extern const char* const kRecordHeader;

/// Floats are written with 17 significant digits, so read(write(x)) == x.
void write_records(const std::filesystem::path& path, const std::vector<ExperimentRecord>& records);
/// Throws ValidationError naming the line of a malformed row.
std::vector<ExperimentRecord> read_records(const std::filesystem::path& path);

/// Records as CSV text without the wall_time column (the determinism key).
std::string records_fingerprint(const std::vector<ExperimentRecord>& records);

bool is_success(const ExperimentRecord& record, double threshold);

/// Runs fn(0..count-1) on `threads` workers. Exceptions escaping fn are
/// rethrown after all workers stop.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn);

/// Builds the instance for `params`, scales its tau by `tau_multiplier`,
/// solves and measures. Never throws: failures come back as status "failed".
ExperimentRecord run_trial(const InstanceParams& params, const SolverOptions& solver,
                           double tau_multiplier = 1.0, bool timing = true);

struct CellSummary {
  Index cell = 0;
  Index r = 0;
  double rho = 0.0;
  Index p = 0;
  bool valid = true;
  int trials = 0;
  int successes = 0;
  double success_rate = 0.0;
  double median_err_low_rank = 0.0;
  double median_err_sparse = 0.0;
};

struct PhaseResult {
  std::vector<ExperimentRecord> records;
  std::vector<CellSummary> cells;
  nlohmann::json summary;
};

/// Cells are the (r, rho, p) grid in row-major order (r slowest); trial t of
/// cell c uses trial_seed(base_seed, c, t). Writes under output_dir:
///   records.csv, cells.csv, summary.json and heatmap_<a>_<b>.svg per axis pair
/// (success rate averaged over the third axis).
PhaseResult phase_grid(const ExperimentConfig& config);

struct SweepRow {
  double multiplier = 0.0;
  double median_err_low_rank = 0.0;
  double median_err_sparse = 0.0;
  double success_rate = 0.0;
  int converged = 0;
};

struct SweepResult {
  std::vector<ExperimentRecord> records;
  std::vector<SweepRow> rows;
};

/// Solves the cell (r[0], rho[0], p[0]) at tau = multiplier * criterion for
/// every multiplier. Trial t uses the same instance for all multipliers.
/// Writes records.csv, tau_sweep.csv and tau_sweep.svg under output_dir.
SweepResult tau_sweep(const ExperimentConfig& config);

/// Names accepted in ExperimentConfig::checks.
const std::vector<std::string>& lemma_check_names();

/// Runs the selected checks on one generated instance. A check that throws
/// is reported as failed with measured = +inf.
std::vector<BoundCheck> lemma_trial(const InstanceParams& params,
                                    const std::vector<std::string>& checks);

/// Every cell x trial of the grid through lemma_trial. The report has
///   {"trials": N, "checks": {name: {"total", "passed", "pass_rate",
///    "worst_margin", "worst_seed"}}, "config": {...}}
/// with margin = bound - measured. Written to output_dir/lemmas.json.
nlohmann::json lemma_suite(const ExperimentConfig& config);

}  // namespace spcp
