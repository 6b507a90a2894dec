#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "spcp/model.hpp"
#include "spcp/solver.hpp"

namespace spcp {

/// Matrix file formats.
///
/// csv:    one matrix row per line, comma separated, 17 significant digits.
/// binary: magic "SCPCP1" (6 bytes), u64 rows, u64 cols, then rows*cols
///         f64 values in column-major order; all little-endian.
enum class MatrixFormat { csv, binary };

std::string to_string(MatrixFormat format);
MatrixFormat parse_matrix_format(const std::string& text);
/// File extension without the dot ("csv" / "bin").
std::string extension(MatrixFormat format);

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix_csv(const std::filesystem::path& path);
void write_matrix_binary(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix_binary(const std::filesystem::path& path);

void write_matrix(const std::filesystem::path& path, const Matrix& m, MatrixFormat format);
/// Detects the format from the magic bytes.
Matrix read_matrix(const std::filesystem::path& path);

/// Writes `manifest.json` plus M, L0, S0 and the Q-perp basis into `dir`.
///
/// manifest: {n, r, rho, p, magnitude, lambda, tau, tau_mode, seed, format,
///            paths: {M, L0, S0, qperp_basis}}; paths are relative to `dir`.
void save_instance(const ProblemInstance& inst, const std::filesystem::path& dir,
                   MatrixFormat format = MatrixFormat::binary);

/// Accepts the directory or the manifest path. L0/S0 are optional.
ProblemInstance load_instance(const std::filesystem::path& dir_or_manifest);

nlohmann::json instance_summary(const ProblemInstance& inst);

/// Writes `solution.json` (diagnostics) and L_hat, S_hat, Y_tilde matrices.
void save_solution(const Solution& sol, const std::filesystem::path& dir,
                   MatrixFormat format = MatrixFormat::binary,
                   const nlohmann::json& extra = nlohmann::json::object());

/// Trace CSV with header iter,feas,fixL,fixS,dual.
void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& trace);

}  // namespace spcp
