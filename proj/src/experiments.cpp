#include "spcp/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "spcp/certificate.hpp"
#include "spcp/error.hpp"
#include "spcp/random.hpp"

namespace spcp {

namespace fs = std::filesystem;
using nlohmann::json;

const char* const kRecordHeader =
    "cell,trial,n,r,rho,p,tau_multiplier,seed,lambda,tau,mu,err_low_rank,err_sparse,support_f1,"
    "iters,converged,status,wall_time";

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::out | std::ios::trunc);
  if (!out) throw ValidationError("cannot open '" + path.string() + "' for writing");
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw ValidationError("output directory '" + dir.string() + "' is not writable");
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

std::string format_double(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

void write_record_row(std::ostream& out, const ExperimentRecord& r, bool with_time) {
  out << r.cell << ',' << r.trial << ',' << r.n << ',' << r.r << ',' << format_double(r.rho) << ','
      << r.p << ',' << format_double(r.tau_multiplier) << ',' << r.seed << ','
      << format_double(r.lambda) << ',' << format_double(r.tau) << ',' << format_double(r.mu) << ','
      << format_double(r.err_low_rank) << ',' << format_double(r.err_sparse) << ','
      << format_double(r.support_f1) << ',' << r.iters << ',' << (r.converged ? 1 : 0) << ','
      << r.status;
  if (with_time) out << ',' << format_double(r.wall_time);
  out << '\n';
}

template <typename T>
std::vector<T> json_list(const json& j, const char* key) {
  if (!j.is_array()) throw ValidationError(std::string("config: '") + key + "' must be a list");
  return j.get<std::vector<T>>();
}

// --- SVG -----------------------------------------------------------------

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

// Light-to-dark blue ramp for a rate in [0, 1].
std::string rate_color(double rate) {
  const double t = std::clamp(rate, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(247 - t * (247 - 8)));
  const int g = static_cast<int>(std::lround(251 - t * (251 - 48)));
  const int b = static_cast<int>(std::lround(255 - t * (255 - 107)));
  std::ostringstream os;
  os << "rgb(" << r << ',' << g << ',' << b << ')';
  return os.str();
}

void write_heatmap(const fs::path& path, const std::string& title, const std::string& x_name,
                   const std::vector<std::string>& x_labels, const std::string& y_name,
                   const std::vector<std::string>& y_labels,
                   const std::vector<std::vector<double>>& rates) {
  const int cell = 60, left = 90, top = 50;
  const int width = left + cell * static_cast<int>(x_labels.size()) + 30;
  const int height = top + cell * static_cast<int>(y_labels.size()) + 60;
  auto out = open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<text x=\"" << left << "\" y=\"20\" font-size=\"14\">" << svg_escape(title) << "</text>\n";
  for (std::size_t yi = 0; yi < y_labels.size(); ++yi) {
    // First y label at the bottom.
    const int y = top + cell * static_cast<int>(y_labels.size() - 1 - yi);
    out << "<text x=\"" << left - 8 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"end\">"
        << svg_escape(y_labels[yi]) << "</text>\n";
    for (std::size_t xi = 0; xi < x_labels.size(); ++xi) {
      const int x = left + cell * static_cast<int>(xi);
      const double rate = rates[yi][xi];
      const bool valid = !std::isnan(rate);
      out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
          << "\" fill=\"" << (valid ? rate_color(rate) : "rgb(200,200,200)")
          << "\" stroke=\"white\"/>\n";
      out << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4
          << "\" text-anchor=\"middle\" fill=\"" << (valid && rate > 0.5 ? "white" : "black") << "\">";
      if (valid) out << std::fixed << std::setprecision(2) << rate << std::defaultfloat;
      else out << "n/a";
      out << "</text>\n";
    }
  }
  for (std::size_t xi = 0; xi < x_labels.size(); ++xi) {
    const int x = left + cell * static_cast<int>(xi) + cell / 2;
    out << "<text x=\"" << x << "\" y=\"" << top + cell * static_cast<int>(y_labels.size()) + 18
        << "\" text-anchor=\"middle\">" << svg_escape(x_labels[xi]) << "</text>\n";
  }
  out << "<text x=\"" << left + cell * static_cast<int>(x_labels.size()) / 2 << "\" y=\""
      << height - 12 << "\" text-anchor=\"middle\">" << svg_escape(x_name) << "</text>\n";
  out << "<text x=\"16\" y=\"" << top + cell * static_cast<int>(y_labels.size()) / 2
      << "\" transform=\"rotate(-90 16 " << top + cell * static_cast<int>(y_labels.size()) / 2
      << ")\" text-anchor=\"middle\">" << svg_escape(y_name) << "</text>\n";
  out << "</svg>\n";
}

void write_sweep_plot(const fs::path& path, const std::vector<SweepRow>& rows) {
  const double w = 520, h = 360, left = 70, right = 20, top = 40, bottom = 50;
  auto out = open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<text x=\"" << left << "\" y=\"20\" font-size=\"14\">median relative error vs tau multiplier</text>\n";
  double xmin = kInf, xmax = -kInf, ymin = kInf, ymax = -kInf;
  auto lg = [](double v) { return std::log10(std::max(v, 1e-16)); };
  for (const auto& r : rows) {
    xmin = std::min(xmin, lg(r.multiplier));
    xmax = std::max(xmax, lg(r.multiplier));
    for (double e : {r.median_err_low_rank, r.median_err_sparse}) {
      if (!std::isfinite(e)) continue;
      ymin = std::min(ymin, lg(e));
      ymax = std::max(ymax, lg(e));
    }
  }
  if (!(xmax > xmin)) { xmin -= 1; xmax += 1; }
  if (!(ymax > ymin)) { ymin = (std::isfinite(ymin) ? ymin : 0) - 1; ymax = ymin + 2; }
  ymin = std::floor(ymin);
  ymax = std::ceil(ymax);
  auto px = [&](double x) { return left + (lg(x) - xmin) / (xmax - xmin) * (w - left - right); };
  auto py = [&](double y) { return top + (ymax - lg(y)) / (ymax - ymin) * (h - top - bottom); };
  out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << w - left - right
      << "\" height=\"" << h - top - bottom << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int e = static_cast<int>(ymin); e <= static_cast<int>(ymax); ++e) {
    const double y = py(std::pow(10.0, e));
    out << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">1e" << e
        << "</text>\n";
  }
  for (const auto& r : rows)
    out << "<text x=\"" << px(r.multiplier) << "\" y=\"" << h - bottom + 16
        << "\" text-anchor=\"middle\">" << format_double(r.multiplier) << "</text>\n";
  out << "<text x=\"" << (left + w - right) / 2 << "\" y=\"" << h - 10
      << "\" text-anchor=\"middle\">tau / tau_criterion</text>\n";
  const std::pair<const char*, double SweepRow::*> series[] = {
      {"rgb(31,119,180)", &SweepRow::median_err_low_rank},
      {"rgb(214,39,40)", &SweepRow::median_err_sparse}};
  for (const auto& [color, member] : series) {
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& r : rows)
      if (std::isfinite(r.*member)) out << px(r.multiplier) << ',' << py(r.*member) << ' ';
    out << "\"/>\n";
  }
  out << "<text x=\"" << w - right - 120 << "\" y=\"" << top + 16
      << "\" fill=\"rgb(31,119,180)\">errL</text>\n";
  out << "<text x=\"" << w - right - 120 << "\" y=\"" << top + 32
      << "\" fill=\"rgb(214,39,40)\">errS</text>\n";
  out << "</svg>\n";
}

struct Cell {
  Index r = 0;
  double rho = 0.0;
  Index p = 0;
  std::string invalid_reason;
};

std::vector<Cell> grid_cells(const ExperimentConfig& config) {
  std::vector<Cell> cells;
  for (Index r : config.ranks)
    for (double rho : config.rhos)
      for (Index p : config.ps) {
        Cell c{r, rho, p, {}};
        if (r > config.n) c.invalid_reason = "r > n";
        else if (4 * p >= config.n * config.n) c.invalid_reason = "p >= n^2/4";
        cells.push_back(c);
      }
  return cells;
}

InstanceParams cell_params(const ExperimentConfig& config, const Cell& cell, std::uint64_t seed) {
  InstanceParams params;
  params.n = config.n;
  params.r = cell.r;
  params.rho = cell.rho;
  params.p = cell.p;
  params.magnitude = config.magnitude;
  params.seed = seed;
  if (config.tau_policy == TauPolicy::oracle) params.mode = tau_mode::Oracle{};
  else if (config.tau_policy == TauPolicy::explicit_value) params.mode = tau_mode::Explicit{config.tau_value};
  else params.mode = tau_mode::Criterion{};
  return params;
}

ExperimentRecord invalid_record(const ExperimentConfig& config, const Cell& cell) {
  ExperimentRecord rec;
  rec.n = config.n;
  rec.r = cell.r;
  rec.rho = cell.rho;
  rec.p = cell.p;
  rec.err_low_rank = kInf;
  rec.err_sparse = kInf;
  rec.status = "invalid";
  return rec;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

std::string to_string(TauPolicy policy) {
  switch (policy) {
    case TauPolicy::criterion: return "criterion";
    case TauPolicy::oracle: return "oracle";
    case TauPolicy::explicit_value: return "explicit";
    case TauPolicy::sweep: return "sweep";
  }
  return "unknown";
}

void ExperimentConfig::validate() const {
  if (n < 1) throw ValidationError("config: n >= 1 violated");
  if (ranks.empty() || rhos.empty() || ps.empty())
    throw ValidationError("config: grid lists r, rho and p must be non-empty");
  for (Index r : ranks)
    if (r < 1) throw ValidationError("config: r >= 1 violated (got " + std::to_string(r) + ")");
  for (double rho : rhos)
    if (!(rho >= 0.0 && rho <= 1.0))
      throw ValidationError("config: rho in [0, 1] violated (got " + format_double(rho) + ")");
  for (Index p : ps)
    if (p < 0) throw ValidationError("config: p >= 0 violated");
  if (trials_per_cell < 1) throw ValidationError("config: trials_per_cell >= 1 violated");
  if (!(success_threshold > 0.0)) throw ValidationError("config: success_threshold > 0 violated");
  if (threads < 1) throw ValidationError("config: threads >= 1 violated");
  if (!(magnitude > 0.0)) throw ValidationError("config: magnitude > 0 violated");
  if (tau_policy == TauPolicy::explicit_value && !(tau_value > 0.0))
    throw ValidationError("config: explicit tau must be positive");
  if (multipliers.empty()) throw ValidationError("config: multipliers must be non-empty");
  for (double m : multipliers)
    if (!(m > 0.0)) throw ValidationError("config: multipliers must be positive");
  if (!(solver_tol > 0.0) || solver_max_iters < 1)
    throw ValidationError("config: solver tol > 0 and max_iters >= 1 required");
  const auto& known = lemma_check_names();
  for (const auto& c : checks)
    if (std::find(known.begin(), known.end(), c) == known.end())
      throw ValidationError("config: unknown check '" + c + "'");
}

SolverOptions ExperimentConfig::solver_options() const {
  SolverOptions opts;
  opts.tol_feas = solver_tol;
  opts.tol_fix = solver_tol;
  opts.max_iters = solver_max_iters;
  opts.accelerate = solver_accelerate;
  return opts;
}

ExperimentConfig parse_config(const json& j) {
  if (!j.is_object()) throw ValidationError("config: top level must be a JSON object");
  static const std::set<std::string> keys{
      "n", "grid", "trials_per_cell", "tau_mode", "multipliers", "success_threshold", "base_seed",
      "output_dir", "threads", "magnitude", "timing", "solver", "checks"};
  for (const auto& [key, value] : j.items())
    if (!keys.count(key)) throw ValidationError("config: unknown key '" + key + "'");

  ExperimentConfig c;
  try {
    c.n = j.value("n", c.n);
    if (j.contains("grid")) {
      const json& g = j.at("grid");
      for (const auto& [key, value] : g.items())
        if (key != "r" && key != "rho" && key != "p")
          throw ValidationError("config: unknown grid key '" + key + "'");
      if (g.contains("r")) c.ranks = json_list<Index>(g.at("r"), "grid.r");
      if (g.contains("rho")) c.rhos = json_list<double>(g.at("rho"), "grid.rho");
      if (g.contains("p")) c.ps = json_list<Index>(g.at("p"), "grid.p");
    }
    c.trials_per_cell = j.value("trials_per_cell", c.trials_per_cell);
    if (j.contains("tau_mode")) {
      const json& m = j.at("tau_mode");
      if (m.is_number()) {
        c.tau_policy = TauPolicy::explicit_value;
        c.tau_value = m.get<double>();
      } else {
        const std::string s = m.get<std::string>();
        if (s == "criterion") c.tau_policy = TauPolicy::criterion;
        else if (s == "oracle") c.tau_policy = TauPolicy::oracle;
        else if (s == "sweep") c.tau_policy = TauPolicy::sweep;
        else throw ValidationError("config: tau_mode must be criterion, oracle, sweep or a number");
      }
    }
    if (j.contains("multipliers")) c.multipliers = json_list<double>(j.at("multipliers"), "multipliers");
    c.success_threshold = j.value("success_threshold", c.success_threshold);
    c.base_seed = j.value("base_seed", c.base_seed);
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    c.threads = j.value("threads", c.threads);
    c.magnitude = j.value("magnitude", c.magnitude);
    c.timing = j.value("timing", c.timing);
    if (j.contains("solver")) {
      const json& s = j.at("solver");
      for (const auto& [key, value] : s.items())
        if (key != "tol" && key != "max_iters" && key != "accelerate")
          throw ValidationError("config: unknown solver key '" + key + "'");
      c.solver_tol = s.value("tol", c.solver_tol);
      c.solver_max_iters = s.value("max_iters", c.solver_max_iters);
      c.solver_accelerate = s.value("accelerate", c.solver_accelerate);
    }
    if (j.contains("checks")) c.checks = json_list<std::string>(j.at("checks"), "checks");
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("malformed config '" + path.string() + "': " + e.what());
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
  json tau_mode = c.tau_policy == TauPolicy::explicit_value ? json(c.tau_value) : json(to_string(c.tau_policy));
  return json{{"n", c.n},
              {"grid", {{"r", c.ranks}, {"rho", c.rhos}, {"p", c.ps}}},
              {"trials_per_cell", c.trials_per_cell},
              {"tau_mode", tau_mode},
              {"multipliers", c.multipliers},
              {"success_threshold", c.success_threshold},
              {"base_seed", c.base_seed},
              {"output_dir", c.output_dir.string()},
              {"threads", c.threads},
              {"magnitude", c.magnitude},
              {"timing", c.timing},
              {"solver", {{"tol", c.solver_tol}, {"max_iters", c.solver_max_iters}, {"accelerate", c.solver_accelerate}}},
              {"checks", c.checks.empty() ? lemma_check_names() : c.checks}};
}

// ---------------------------------------------------------------------------
// Records

void write_records(const fs::path& path, const std::vector<ExperimentRecord>& records) {
  auto out = open_out(path);
  out << kRecordHeader << '\n';
  for (const auto& r : records) write_record_row(out, r, true);
  if (!out) throw ValidationError("failed writing '" + path.string() + "'");
}

std::vector<ExperimentRecord> read_records(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path.string() + "' for reading");
  std::string line;
  if (!std::getline(in, line) || line != kRecordHeader)
    throw ValidationError(path.string() + ":1: unexpected header");
  std::vector<ExperimentRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fail = [&](const std::string& what) {
      return ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + what);
    };
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 18) throw fail("expected 18 fields, got " + std::to_string(f.size()));
    auto num = [&](std::size_t i) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(f[i], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != f[i].size()) throw fail("bad number '" + f[i] + "'");
      return v;
    };
    auto integer = [&](std::size_t i) {
      std::size_t used = 0;
      long long v = 0;
      try {
        v = std::stoll(f[i], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != f[i].size()) throw fail("bad integer '" + f[i] + "'");
      return v;
    };
    ExperimentRecord r;
    r.cell = integer(0);
    r.trial = integer(1);
    r.n = integer(2);
    r.r = integer(3);
    r.rho = num(4);
    r.p = integer(5);
    r.tau_multiplier = num(6);
    try {
      std::size_t used = 0;
      r.seed = std::stoull(f[7], &used);
      if (used != f[7].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw fail("bad seed '" + f[7] + "'");
    }
    r.lambda = num(8);
    r.tau = num(9);
    r.mu = num(10);
    r.err_low_rank = num(11);
    r.err_sparse = num(12);
    r.support_f1 = num(13);
    r.iters = static_cast<int>(integer(14));
    const long long conv = integer(15);
    if (conv != 0 && conv != 1) throw fail("converged must be 0 or 1");
    r.converged = conv == 1;
    r.status = f[16];
    if (r.status != "ok" && r.status != "failed" && r.status != "invalid")
      throw fail("unknown status '" + r.status + "'");
    r.wall_time = num(17);
    records.push_back(std::move(r));
  }
  return records;
}

std::string records_fingerprint(const std::vector<ExperimentRecord>& records) {
  std::ostringstream out;
  for (const auto& r : records) write_record_row(out, r, false);
  return out.str();
}

bool is_success(const ExperimentRecord& r, double threshold) {
  return r.status == "ok" && r.converged && r.err_low_rank <= threshold && r.err_sparse <= threshold;
}

// ---------------------------------------------------------------------------
// Execution

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

ExperimentRecord run_trial(const InstanceParams& params, const SolverOptions& solver,
                           double tau_multiplier, bool timing) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentRecord rec;
  rec.n = params.n;
  rec.r = params.r;
  rec.rho = params.rho;
  rec.p = params.p;
  rec.seed = params.seed;
  rec.tau_multiplier = tau_multiplier;
  try {
    ProblemInstance inst = build_instance(params);
    inst.tau *= tau_multiplier;
    rec.lambda = inst.lambda;
    rec.tau = inst.tau;
    rec.mu = incoherence(inst.truth->low_rank).mu;
    const Solution sol = solve(inst, solver);
    const RecoveryError err = recovery_error(sol, *inst.truth);
    rec.err_low_rank = err.err_low_rank;
    rec.err_sparse = err.err_sparse;
    rec.support_f1 = err.support_f1;
    rec.iters = sol.iters;
    rec.converged = sol.converged;
  } catch (const std::exception&) {
    rec.err_low_rank = kInf;
    rec.err_sparse = kInf;
    rec.converged = false;
    rec.status = "failed";
  }
  if (timing)
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

PhaseResult phase_grid(const ExperimentConfig& config) {
  config.validate();
  if (config.tau_policy == TauPolicy::sweep)
    throw ValidationError("phase_grid: tau_mode 'sweep' belongs to tau_sweep");
  ensure_dir(config.output_dir);

  const std::vector<Cell> cells = grid_cells(config);
  const auto trials = static_cast<std::size_t>(config.trials_per_cell);
  PhaseResult result;
  result.records.resize(cells.size() * trials);
  const SolverOptions solver = config.solver_options();

  parallel_for(result.records.size(), config.threads, [&](std::size_t k) {
    const std::size_t c = k / trials, t = k % trials;
    const Cell& cell = cells[c];
    const std::uint64_t seed = trial_seed(config.base_seed, c, t);
    ExperimentRecord rec;
    if (!cell.invalid_reason.empty()) {
      rec = invalid_record(config, cell);
      rec.seed = seed;
    } else {
      rec = run_trial(cell_params(config, cell, seed), solver, 1.0, config.timing);
    }
    rec.cell = static_cast<Index>(c);
    rec.trial = static_cast<Index>(t);
    result.records[k] = std::move(rec);
  });

  for (std::size_t c = 0; c < cells.size(); ++c) {
    CellSummary s;
    s.cell = static_cast<Index>(c);
    s.r = cells[c].r;
    s.rho = cells[c].rho;
    s.p = cells[c].p;
    s.valid = cells[c].invalid_reason.empty();
    std::vector<double> el, es;
    for (std::size_t t = 0; t < trials; ++t) {
      const auto& rec = result.records[c * trials + t];
      ++s.trials;
      if (is_success(rec, config.success_threshold)) ++s.successes;
      el.push_back(rec.err_low_rank);
      es.push_back(rec.err_sparse);
    }
    s.success_rate = s.valid ? static_cast<double>(s.successes) / s.trials
                             : std::numeric_limits<double>::quiet_NaN();
    s.median_err_low_rank = median(el);
    s.median_err_sparse = median(es);
    result.cells.push_back(s);
  }

  write_records(config.output_dir / "records.csv", result.records);
  {
    auto out = open_out(config.output_dir / "cells.csv");
    out << "cell,r,rho,p,valid,trials,successes,success_rate,median_err_low_rank,median_err_sparse\n";
    for (const auto& s : result.cells)
      out << s.cell << ',' << s.r << ',' << format_double(s.rho) << ',' << s.p << ','
          << (s.valid ? 1 : 0) << ',' << s.trials << ',' << s.successes << ','
          << format_double(s.success_rate) << ',' << format_double(s.median_err_low_rank) << ','
          << format_double(s.median_err_sparse) << '\n';
  }

  // Axis-wise average success rate over valid cells: the reported trend.
  auto axis_trend = [&](auto key, const auto& values) {
    json trend = json::array();
    for (const auto& v : values) {
      double sum = 0.0;
      int count = 0;
      for (const auto& s : result.cells)
        if (s.valid && key(s) == v) {
          sum += s.success_rate;
          ++count;
        }
      trend.push_back({{"value", v}, {"mean_success_rate", count ? json(sum / count) : json(nullptr)}});
    }
    return trend;
  };
  int invalid = 0, successes = 0, valid_trials = 0;
  for (const auto& s : result.cells) {
    if (!s.valid) {
      ++invalid;
      continue;
    }
    successes += s.successes;
    valid_trials += s.trials;
  }
  result.summary = json{
      {"cells", cells.size()},
      {"invalid_cells", invalid},
      {"trials", result.records.size()},
      {"overall_success_rate", valid_trials ? json(static_cast<double>(successes) / valid_trials) : json(nullptr)},
      {"trend",
       {{"r", axis_trend([](const CellSummary& s) { return s.r; }, config.ranks)},
        {"rho", axis_trend([](const CellSummary& s) { return s.rho; }, config.rhos)},
        {"p", axis_trend([](const CellSummary& s) { return s.p; }, config.ps)}}},
      {"config", to_json(config)}};
  {
    auto out = open_out(config.output_dir / "summary.json");
    out << std::setw(2) << result.summary << '\n';
  }

  // Heatmaps: for each axis pair, success rate averaged over the third axis.
  auto labels = [](const auto& values) {
    std::vector<std::string> out;
    for (const auto& v : values) out.push_back(format_double(static_cast<double>(v)));
    return out;
  };
  auto heatmap = [&](const std::string& xn, const std::vector<std::string>& xl, auto xkey, const auto& xs,
                     const std::string& yn, const std::vector<std::string>& yl, auto ykey, const auto& ys) {
    std::vector<std::vector<double>> rates(ys.size(), std::vector<double>(xs.size()));
    for (std::size_t yi = 0; yi < ys.size(); ++yi)
      for (std::size_t xi = 0; xi < xs.size(); ++xi) {
        double sum = 0.0;
        int count = 0;
        for (const auto& s : result.cells)
          if (s.valid && xkey(s) == xs[xi] && ykey(s) == ys[yi]) {
            sum += s.success_rate;
            ++count;
          }
        rates[yi][xi] = count ? sum / count : std::numeric_limits<double>::quiet_NaN();
      }
    write_heatmap(config.output_dir / ("heatmap_" + xn + "_" + yn + ".svg"),
                  "success rate (n = " + std::to_string(config.n) + ")", xn, xl, yn, yl, rates);
  };
  auto kr = [](const CellSummary& s) { return s.r; };
  auto krho = [](const CellSummary& s) { return s.rho; };
  auto kp = [](const CellSummary& s) { return s.p; };
  heatmap("r", labels(config.ranks), kr, config.ranks, "rho", labels(config.rhos), krho, config.rhos);
  heatmap("r", labels(config.ranks), kr, config.ranks, "p", labels(config.ps), kp, config.ps);
  heatmap("rho", labels(config.rhos), krho, config.rhos, "p", labels(config.ps), kp, config.ps);
  return result;
}

SweepResult tau_sweep(const ExperimentConfig& config) {
  config.validate();
  ensure_dir(config.output_dir);
  const Cell cell{config.ranks.front(), config.rhos.front(), config.ps.front(), {}};
  if (cell.r > config.n) throw ValidationError("tau_sweep: r > n");
  if (4 * cell.p >= config.n * config.n) throw ValidationError("tau_sweep: p < n^2/4 violated");

  ExperimentConfig base = config;
  base.tau_policy = TauPolicy::criterion;
  const auto trials = static_cast<std::size_t>(config.trials_per_cell);
  const std::size_t m = config.multipliers.size();
  SweepResult result;
  result.records.resize(m * trials);
  const SolverOptions solver = config.solver_options();

  parallel_for(result.records.size(), config.threads, [&](std::size_t k) {
    const std::size_t mi = k / trials, t = k % trials;
    const std::uint64_t seed = trial_seed(config.base_seed, 0, t);
    ExperimentRecord rec =
        run_trial(cell_params(base, cell, seed), solver, config.multipliers[mi], config.timing);
    rec.cell = static_cast<Index>(mi);
    rec.trial = static_cast<Index>(t);
    result.records[k] = std::move(rec);
  });

  for (std::size_t mi = 0; mi < m; ++mi) {
    SweepRow row;
    row.multiplier = config.multipliers[mi];
    std::vector<double> el, es;
    int successes = 0;
    for (std::size_t t = 0; t < trials; ++t) {
      const auto& rec = result.records[mi * trials + t];
      el.push_back(rec.err_low_rank);
      es.push_back(rec.err_sparse);
      if (is_success(rec, config.success_threshold)) ++successes;
      if (rec.converged) ++row.converged;
    }
    row.median_err_low_rank = median(el);
    row.median_err_sparse = median(es);
    row.success_rate = static_cast<double>(successes) / static_cast<double>(trials);
    result.rows.push_back(row);
  }

  write_records(config.output_dir / "records.csv", result.records);
  {
    auto out = open_out(config.output_dir / "tau_sweep.csv");
    out << "multiplier,median_err_low_rank,median_err_sparse,success_rate,converged\n";
    for (const auto& r : result.rows)
      out << format_double(r.multiplier) << ',' << format_double(r.median_err_low_rank) << ','
          << format_double(r.median_err_sparse) << ',' << format_double(r.success_rate) << ','
          << r.converged << '\n';
  }
  write_sweep_plot(config.output_dir / "tau_sweep.svg", result.rows);
  return result;
}

// ---------------------------------------------------------------------------
// Lemma suite

const std::vector<std::string>& lemma_check_names() {
  static const std::vector<std::string> names{
      "wq_spectral", "wq_off_support_inf", "wq_methods_agree", "wq_constraints",
      "lemma25",     "lemma26",            "dim_condition",    "pomega_l0",
      "pomega_l0_s0", "l0",                "xi",               "certificate"};
  return names;
}

std::vector<BoundCheck> lemma_trial(const InstanceParams& params, const std::vector<std::string>& checks) {
  const std::vector<std::string>& selected = checks.empty() ? lemma_check_names() : checks;
  auto wanted = [&](const char* name) {
    return std::find(selected.begin(), selected.end(), name) != selected.end();
  };
  std::map<std::string, BoundCheck> out;
  auto failed = [](const std::string& name, double bound) { return BoundCheck{name, kInf, bound, false}; };

  const ProblemInstance inst = build_instance(params);
  const GroundTruth& truth = *inst.truth;
  const SubspaceProjector& q = inst.projector();

  if (wanted("wq_spectral") || wanted("wq_off_support_inf") || wanted("wq_methods_agree") ||
      wanted("wq_constraints")) {
    try {
      const WqResult ls = build_wq(truth.tangent, truth.low_rank, inst.data, inst.tau, q, truth.support,
                                   WqMethod::least_squares);
      const WqBoundReport bounds = check_wq(ls.wq, truth.support, inst.lambda);
      out["wq_spectral"] = bounds.spectral;
      out["wq_off_support_inf"] = bounds.off_support_inf;
      double constraint = std::max(ls.residual_q_perp / std::max(ls.xi, 1e-300),
                                   ls.residual_pi / std::max(ls.wq.norm(), 1e-300));
      if (wanted("wq_methods_agree") || wanted("wq_constraints")) {
        try {
          const WqResult nm = build_wq(truth.tangent, truth.low_rank, inst.data, inst.tau, q,
                                       truth.support, WqMethod::neumann);
          const double scale = std::max(ls.wq.norm(), 1e-300);
          const double diff = ls.wq.norm() == 0.0 && nm.wq.norm() == 0.0 ? 0.0 : (ls.wq - nm.wq).norm() / scale;
          out["wq_methods_agree"] = {"wq_methods_agree", diff, 1e-6, diff <= 1e-6};
          constraint = std::max({constraint, nm.residual_q_perp / std::max(nm.xi, 1e-300),
                                 nm.residual_pi / std::max(nm.wq.norm(), 1e-300)});
        } catch (const std::exception&) {
          out["wq_methods_agree"] = failed("wq_methods_agree", 1e-6);
          constraint = kInf;
        }
      }
      out["wq_constraints"] = {"wq_constraints", constraint, 1e-8, constraint <= 1e-8};
    } catch (const std::exception&) {
      out["wq_spectral"] = failed("wq_spectral", 1.0 / 8.0);
      out["wq_off_support_inf"] = failed("wq_off_support_inf", inst.lambda / 8.0);
      out["wq_methods_agree"] = failed("wq_methods_agree", 1e-6);
      out["wq_constraints"] = failed("wq_constraints", 1e-8);
    }
  }

  if (wanted("lemma25")) {
    try {
      const Lemma25Report r = check_lemma25(tangent_map(truth.tangent), support_map(truth.support),
                                            q_perp_map(q), inst.n);
      out["lemma25"] = r.precondition_ok ? BoundCheck{"lemma25", r.measured, r.bound, r.passed}
                                         : failed("lemma25", r.bound);
    } catch (const std::exception&) {
      out["lemma25"] = failed("lemma25", 0.0);
    }
  }
  if (wanted("lemma26")) {
    try {
      const Lemma26Report r = check_lemma26(q, truth.tangent);
      out["lemma26"] = {"lemma26", r.measured, r.bound, r.passed};
    } catch (const std::exception&) {
      out["lemma26"] = failed("lemma26", lemma26_bound(inst.n, truth.rank, q.p()));
    }
  }
  if (wanted("dim_condition")) {
    try {
      const DimConditionReport r = check_dim_condition(q, truth.tangent, truth.support);
      const double worst = std::max({r.norm_q_t, r.norm_t_omega, r.norm_omega_q});
      out["dim_condition"] = {"dim_condition", worst, 1.0, r.verified};
    } catch (const std::exception&) {
      out["dim_condition"] = failed("dim_condition", 1.0);
    }
  }
  if (wanted("pomega_l0") || wanted("pomega_l0_s0") || wanted("l0") || wanted("xi")) {
    for (const auto& c : inequality_chain(truth, inst.data, inst.tau)) out[c.name] = c;
  }
  if (wanted("certificate")) {
    try {
      const CertificateResult cert = certificate_search(truth, q, inst.tau, inst.lambda);
      const auto& r = cert.report;
      const double worst = std::max({r.norm_w / r.beta, r.inf_f / r.beta, r.frob_pd / r.alpha,
                                     r.transversality / 0.5});
      out["certificate"] = {"certificate", worst, 1.0, r.verdict == Verdict::certified};
    } catch (const std::exception&) {
      out["certificate"] = failed("certificate", 1.0);
    }
  }

  std::vector<BoundCheck> result;
  for (const auto& name : selected)
    if (auto it = out.find(name); it != out.end()) result.push_back(it->second);
  return result;
}

json lemma_suite(const ExperimentConfig& config) {
  config.validate();
  ensure_dir(config.output_dir);
  ExperimentConfig base = config;
  if (base.tau_policy == TauPolicy::sweep) base.tau_policy = TauPolicy::criterion;
  const std::vector<Cell> cells = grid_cells(config);
  const auto trials = static_cast<std::size_t>(config.trials_per_cell);
  const std::vector<std::string>& names = config.checks.empty() ? lemma_check_names() : config.checks;

  struct TrialChecks {
    std::uint64_t seed = 0;
    bool valid = true;
    std::vector<BoundCheck> checks;
  };
  std::vector<TrialChecks> per_trial(cells.size() * trials);
  parallel_for(per_trial.size(), config.threads, [&](std::size_t k) {
    const std::size_t c = k / trials, t = k % trials;
    TrialChecks& tc = per_trial[k];
    tc.seed = trial_seed(config.base_seed, c, t);
    if (!cells[c].invalid_reason.empty()) {
      tc.valid = false;
      return;
    }
    try {
      tc.checks = lemma_trial(cell_params(base, cells[c], tc.seed), names);
    } catch (const std::exception&) {
      for (const auto& name : names) tc.checks.push_back({name, kInf, 0.0, false});
    }
  });

  json checks = json::object();
  for (const auto& name : names) {
    int total = 0, passed = 0;
    double worst = kInf;
    std::uint64_t worst_seed = 0;
    for (const auto& tc : per_trial) {
      if (!tc.valid) continue;
      for (const auto& c : tc.checks) {
        if (c.name != name) continue;
        ++total;
        if (c.passed) ++passed;
        const double margin = c.bound - c.measured;
        if (margin < worst || total == 1) {
          worst = margin;
          worst_seed = tc.seed;
        }
      }
    }
    checks[name] = {{"total", total},
                    {"passed", passed},
                    {"pass_rate", total ? static_cast<double>(passed) / total : 0.0},
                    {"worst_margin", std::isfinite(worst) ? json(worst) : json(nullptr)},
                    {"worst_seed", worst_seed}};
  }
  Index valid_trials = 0;
  for (const auto& tc : per_trial) valid_trials += tc.valid ? 1 : 0;
  json report{{"trials", valid_trials}, {"checks", checks}, {"config", to_json(config)}};
  auto out = open_out(config.output_dir / "lemmas.json");
  out << std::setw(2) << report << '\n';
  return report;
}

}  // namespace spcp
