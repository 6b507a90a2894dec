#include "spcp/matrix_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "spcp/error.hpp"

namespace spcp {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "binary matrix format assumes a little-endian host");

namespace {

constexpr char kMagic[6] = {'S', 'C', 'P', 'C', 'P', '1'};

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw ValidationError("cannot open '" + path.string() + "' for writing");
  return out;
}

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw ValidationError("cannot open '" + path.string() + "' for reading");
  return in;
}

json read_json(const fs::path& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

}  // namespace

std::string to_string(MatrixFormat format) {
  return format == MatrixFormat::csv ? "csv" : "binary";
}

MatrixFormat parse_matrix_format(const std::string& text) {
  if (text == "csv") return MatrixFormat::csv;
  if (text == "binary" || text == "bin") return MatrixFormat::binary;
  throw ValidationError("matrix format must be 'csv' or 'binary', got '" + text + "'");
}

std::string extension(MatrixFormat format) { return format == MatrixFormat::csv ? "csv" : "bin"; }

void write_matrix_csv(const fs::path& path, const Matrix& m) {
  auto out = open_out(path);
  out << std::setprecision(17);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << m(i, j);
    }
    out << '\n';
  }
}

Matrix read_matrix_csv(const fs::path& path) {
  auto in = open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream fields(line);
    std::string field;
    while (std::getline(fields, field, ',')) {
      std::size_t used = 0;
      double value = 0.0;
      try {
        value = std::stod(field, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0)
        throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": bad number '" +
                              field + "'");
      row.push_back(value);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": row has a different number of columns");
    rows.push_back(std::move(row));
  }
  const Index r = static_cast<Index>(rows.size());
  const Index c = r ? static_cast<Index>(rows.front().size()) : 0;
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return m;
}

void write_matrix_binary(const fs::path& path, const Matrix& m) {
  auto out = open_out(path, std::ios::out | std::ios::binary);
  const auto rows = static_cast<std::uint64_t>(m.rows());
  const auto cols = static_cast<std::uint64_t>(m.cols());
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
  out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!out) throw ValidationError("failed writing '" + path.string() + "'");
}

Matrix read_matrix_binary(const fs::path& path) {
  auto in = open_in(path, std::ios::in | std::ios::binary);
  char magic[6];
  std::uint64_t rows = 0, cols = 0;
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw ValidationError("'" + path.string() + "' is not an SCPCP1 matrix file");
  in.read(reinterpret_cast<char*>(&rows), sizeof rows);
  in.read(reinterpret_cast<char*>(&cols), sizeof cols);
  if (!in) throw ValidationError("'" + path.string() + "': truncated header");
  if (rows > (1ULL << 32) || cols > (1ULL << 32))
    throw ValidationError("'" + path.string() + "': implausible dimensions");
  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!in) throw ValidationError("'" + path.string() + "': truncated data block");
  return m;
}

void write_matrix(const fs::path& path, const Matrix& m, MatrixFormat format) {
  if (format == MatrixFormat::csv)
    write_matrix_csv(path, m);
  else
    write_matrix_binary(path, m);
}

Matrix read_matrix(const fs::path& path) {
  char magic[6] = {};
  {
    auto in = open_in(path, std::ios::in | std::ios::binary);
    in.read(magic, sizeof magic);
  }
  if (std::memcmp(magic, kMagic, sizeof kMagic) == 0) return read_matrix_binary(path);
  return read_matrix_csv(path);
}

json instance_summary(const ProblemInstance& inst) {
  return json{{"n", inst.n},
              {"r", inst.r},
              {"rho", inst.rho},
              {"p", inst.p()},
              {"magnitude", inst.magnitude},
              {"lambda", inst.lambda},
              {"tau", inst.tau},
              {"tau_mode", to_string(inst.mode)},
              {"seed", inst.seed}};
}

void save_instance(const ProblemInstance& inst, const fs::path& dir, MatrixFormat format) {
  fs::create_directories(dir);
  const std::string ext = "." + extension(format);
  json paths{{"M", "M" + ext}, {"qperp_basis", "qperp_basis" + ext}};
  write_matrix(dir / ("M" + ext), inst.data, format);
  write_matrix(dir / ("qperp_basis" + ext), inst.projector().basis(), format);
  if (inst.truth) {
    paths["L0"] = "L0" + ext;
    paths["S0"] = "S0" + ext;
    write_matrix(dir / ("L0" + ext), inst.truth->low_rank, format);
    write_matrix(dir / ("S0" + ext), inst.truth->sparse, format);
  }
  json manifest = instance_summary(inst);
  manifest["format"] = to_string(format);
  manifest["paths"] = paths;
  auto out = open_out(dir / "manifest.json");
  out << std::setw(2) << manifest << '\n';
}

ProblemInstance load_instance(const fs::path& dir_or_manifest) {
  const fs::path manifest_path =
      fs::is_directory(dir_or_manifest) ? dir_or_manifest / "manifest.json" : dir_or_manifest;
  const fs::path dir = manifest_path.parent_path();
  const json manifest = read_json(manifest_path);
  try {
    ProblemInstance inst;
    inst.n = manifest.at("n").get<Index>();
    inst.r = manifest.value("r", Index{0});
    inst.rho = manifest.value("rho", 0.0);
    inst.magnitude = manifest.value("magnitude", 1.0);
    inst.lambda = manifest.at("lambda").get<double>();
    inst.tau = manifest.at("tau").get<double>();
    inst.seed = manifest.value("seed", std::uint64_t{0});
    inst.mode = parse_tau_mode(manifest.value("tau_mode", std::string("criterion")));
    const json& paths = manifest.at("paths");
    inst.data = read_matrix(dir / paths.at("M").get<std::string>());
    if (inst.data.rows() != inst.n || inst.data.cols() != inst.n)
      throw ValidationError("manifest n does not match M");
    Matrix basis = paths.contains("qperp_basis")
                       ? read_matrix(dir / paths.at("qperp_basis").get<std::string>())
                       : Matrix(inst.n * inst.n, 0);
    inst.q = std::make_shared<const SubspaceProjector>(inst.n, std::move(basis));
    if (manifest.contains("p") && manifest.at("p").get<Index>() != inst.p())
      throw ValidationError("manifest p does not match the stored basis");
    if (paths.contains("L0") && paths.contains("S0")) {
      inst.truth = GroundTruth::from_parts(read_matrix(dir / paths.at("L0").get<std::string>()),
                                           read_matrix(dir / paths.at("S0").get<std::string>()),
                                           inst.rho, inst.magnitude);
    }
    if (!(inst.lambda > 0.0) || !(inst.tau > 0.0))
      throw ValidationError("manifest lambda and tau must be positive");
    return inst;
  } catch (const json::exception& e) {
    throw ValidationError("manifest '" + manifest_path.string() + "': " + e.what());
  }
}

void save_solution(const Solution& sol, const fs::path& dir, MatrixFormat format,
                   const json& extra) {
  fs::create_directories(dir);
  const std::string ext = "." + extension(format);
  write_matrix(dir / ("L_hat" + ext), sol.low_rank, format);
  write_matrix(dir / ("S_hat" + ext), sol.sparse, format);
  write_matrix(dir / ("Y_tilde" + ext), sol.dual, format);
  json diag{{"iters", sol.iters},
            {"converged", sol.converged},
            {"feas_residual", sol.feas_residual},
            {"fix_residual", sol.fix_residual},
            {"backtracks", sol.backtracks},
            {"format", to_string(format)},
            {"paths", {{"L_hat", "L_hat" + ext}, {"S_hat", "S_hat" + ext}, {"Y_tilde", "Y_tilde" + ext}}}};
  diag.update(extra);
  auto out = open_out(dir / "solution.json");
  out << std::setw(2) << diag << '\n';
}

void write_trace_csv(const fs::path& path, const std::vector<TraceRow>& trace) {
  auto out = open_out(path);
  out << "iter,feas,fixL,fixS,dual\n" << std::setprecision(17);
  for (const auto& row : trace)
    out << row.iter << ',' << row.feas << ',' << row.fix_low_rank << ',' << row.fix_sparse << ','
        << row.dual << '\n';
}

}  // namespace spcp
