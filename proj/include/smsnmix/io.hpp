#pragma once

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "smsnmix/bench.hpp"
#include "smsnmix/ecm.hpp"

namespace smsn::io {

inline constexpr int kSchemaVersion = 1;

struct CsvOptions {
  bool header = true;
  bool log_transform = false;  // natural log of every observed cell
};

/// Parsed CSV with the original cell text kept so that observed cells can be
/// written back unchanged.
struct Dataset {
  std::vector<std::string> columns;
  Matrix values;                              // NaN = missing, log scale if transformed
  std::vector<std::vector<std::string>> text; // raw cells of the retained rows
  std::vector<int> source_rows;               // 1-based data-row numbers of retained rows
  std::vector<int> dropped_rows;              // all-missing rows
  bool log_transformed = false;

  int rows() const noexcept { return static_cast<int>(values.rows()); }
  int dim() const noexcept { return static_cast<int>(values.cols()); }
  /// Fraction of missing cells per column.
  std::vector<double> missing_rates() const;
};

/// Empty cells and NA / NaN (any case) are missing.  Throws Errc::Parse with
/// row and column on ragged rows, non-numeric cells, and non-positive cells
/// under the log transform.
Dataset parse_csv(std::istream& in, const CsvOptions& options = {});
Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options = {});

/// %.17g, which reads back to the same double.
std::string format_double(double value);

/// Writes the header and every retained row; observed cells keep their input
/// text, missing cells take `completed` (back-transformed when the dataset
/// was log-transformed) at 17 significant digits.
void write_completed_csv(std::ostream& out, const Dataset& data, const Matrix& completed);

nlohmann::ordered_json model_to_json(const MixtureModel& model);
MixtureModel model_from_json(const nlohmann::json& doc);

nlohmann::ordered_json report_to_json(const FitReport& report, const Dataset& data, const FitConfig& config);

/// Indices t with trace[t] < trace[t-1] - tol.
std::vector<int> loglik_decreases(const std::vector<double>& trace, double tol = 1e-8);

/// Tidy metric tables: one ARI row per cell and one AB or RMSE row per
/// (cell, parameter block).
void write_ari_csv(std::ostream& out, const std::vector<bench::MetricsRow>& rows);
void write_recovery_csv(std::ostream& out, const std::vector<bench::MetricsRow>& rows, bool rmse);

/// Grid from a JSON document with optional keys families (names or
/// [generator, fitted] pairs), rates, overlaps, sizes, replicates,
/// max_iter and tolerance; missing keys keep the standard grid values.
bench::ExperimentGrid grid_from_json(const nlohmann::json& doc);
nlohmann::ordered_json grid_to_json(const bench::ExperimentGrid& grid);

}  // namespace smsn::io
