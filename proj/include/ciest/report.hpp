#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ciest/analysis.hpp"
#include "ciest/runner.hpp"
#include "json.hpp"

namespace ciest {

/// Bumped whenever the trace CSV layout changes.
inline constexpr int kCsvFormatVersion = 1;
inline constexpr const char* kVersion = "0.1.0";

/// iter, err_sensor_0..N-1, consensus_gap, [transformed_err], alpha,
/// consensus_weight, [est_<n>_<m>...]
std::vector<std::string> trace_columns(Algorithm algorithm, std::size_t n_sensors, std::size_t param_dim,
                                       bool with_estimates);

void write_trace_csv(const Trace& trace, const std::filesystem::path& path);
/// Reads a CSV written by write_trace_csv; the column header fixes the layout.
Trace read_trace_csv(const std::filesystem::path& path, Algorithm algorithm, std::size_t n_sensors,
                     std::size_t param_dim, std::uint64_t seed);

std::string trace_file_name(std::uint64_t seed);

/// Library, compiler and kernel versions for manifests.
nlohmann::json version_info();

nlohmann::json diagnostics_json(const DiagnosticsReport& report);
nlohmann::json variance_json(const AsymptoticVarianceReport& report);
nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);

/// Two-column plain-text table.
std::string summary_table(const std::vector<std::pair<std::string, std::string>>& rows);
std::string fmt(double v);

void write_text(const std::filesystem::path& path, const std::string& text);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace ciest
