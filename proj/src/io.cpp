#include "smsnmix/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace smsn::io {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string_view rest = line;
  if (!rest.empty() && rest.back() == '\r') rest.remove_suffix(1);
  while (true) {
    const auto comma = rest.find(',');
    cells.emplace_back(rest.substr(0, comma));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return cells;
}

bool is_missing_token(const std::string& cell) {
  std::string lower = trim(cell);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  return lower.empty() || lower == "na" || lower == "nan";
}

std::string where(int line, int column) {
  return "line " + std::to_string(line) + ", column " + std::to_string(column);
}

double parse_cell(const std::string& cell, int line, int column) {
  const std::string text = trim(cell);
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  if (!text.empty() && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw Error(Errc::Parse, "non-numeric cell '" + text + "' at " + where(line, column));
  if (!std::isfinite(value)) throw Error(Errc::Parse, "non-finite cell '" + text + "' at " + where(line, column));
  return value;
}

ordered_json matrix_json(const Matrix& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

ordered_json vector_json(const Vector& v) {
  ordered_json out = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Vector vector_from(const json& doc, const char* key) {
  const auto values = doc.at(key).get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Matrix matrix_from(const json& doc, const char* key) {
  const auto rows = doc.at(key).get<std::vector<std::vector<double>>>();
  const auto n = static_cast<Eigen::Index>(rows.size());
  Matrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != n)
      throw Error(Errc::Parse, std::string("matrix '") + key + "' is not square");
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = rows[i][j];
  }
  return m;
}

std::string rate_text(double rate) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", rate);
  return buf;
}

void write_cell_prefix(std::ostream& out, const bench::MetricsRow& row) {
  out << kSchemaVersion << ',' << row.scenario_id() << ',' << law_kind_name(row.generator) << ','
      << law_kind_name(row.fitted) << ',' << rate_text(row.rate) << ',' << bench::overlap_name(row.overlap) << ','
      << row.n << ',' << row.replicates << ',' << row.failures << ',' << row.nonconverged << ','
      << (row.flagged ? 1 : 0);
}

constexpr const char* kCellHeader =
    "schema_version,scenario,generator,fitted,rate,overlap,n,replicates,failures,nonconverged,flagged";

}  // namespace

std::vector<double> Dataset::missing_rates() const {
  std::vector<double> out(dim(), 0.0);
  if (rows() == 0) return out;
  for (int j = 0; j < dim(); ++j)
    out[j] = static_cast<double>(values.col(j).array().isNaN().count()) / rows();
  return out;
}

Dataset parse_csv(std::istream& in, const CsvOptions& options) {
  Dataset data;
  data.log_transformed = options.log_transform;
  std::string line;
  int line_no = 0;
  std::size_t width = 0;
  std::vector<std::vector<double>> rows;
  int data_row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = split_line(line);
    if (width == 0) {
      width = cells.size();
      if (options.header) {
        for (const std::string& c : cells) data.columns.push_back(trim(c));
        continue;
      }
      for (std::size_t j = 0; j < width; ++j) data.columns.push_back("x" + std::to_string(j + 1));
    }
    if (cells.size() != width)
      throw Error(Errc::Parse, "line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                                   " cells, expected " + std::to_string(width));
    ++data_row;
    std::vector<double> values(width);
    bool any_observed = false;
    for (std::size_t j = 0; j < width; ++j) {
      const int column = static_cast<int>(j) + 1;
      if (is_missing_token(cells[j])) {
        values[j] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      double v = parse_cell(cells[j], line_no, column);
      if (options.log_transform) {
        if (!(v > 0.0))
          throw Error(Errc::Parse, "log transform needs positive values, got '" + trim(cells[j]) + "' at " +
                                       where(line_no, column));
        v = std::log(v);
      }
      values[j] = v;
      any_observed = true;
    }
    if (!any_observed) {
      data.dropped_rows.push_back(data_row);
      continue;
    }
    rows.push_back(std::move(values));
    data.text.push_back(std::move(cells));
    data.source_rows.push_back(data_row);
  }
  if (width == 0) throw Error(Errc::Parse, "input has no header or data");
  data.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < width; ++j) data.values(i, j) = rows[i][j];
  return data;
}

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::InvalidArgument, "cannot open '" + path.string() + "'");
  return parse_csv(in, options);
}

std::string format_double(double value) {
  if (std::isnan(value)) return "NaN";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_completed_csv(std::ostream& out, const Dataset& data, const Matrix& completed) {
  if (completed.rows() != data.rows() || completed.cols() != data.dim())
    throw Error(Errc::DimensionMismatch, "completed matrix does not match the dataset");
  for (std::size_t j = 0; j < data.columns.size(); ++j) out << (j ? "," : "") << data.columns[j];
  out << '\n';
  for (int i = 0; i < data.rows(); ++i) {
    for (int j = 0; j < data.dim(); ++j) {
      if (j) out << ',';
      if (std::isnan(data.values(i, j))) {
        const double v = data.log_transformed ? std::exp(completed(i, j)) : completed(i, j);
        out << format_double(v);
      } else {
        out << data.text[i][j];
      }
    }
    out << '\n';
  }
}

ordered_json model_to_json(const MixtureModel& model) {
  ordered_json doc;
  doc["family"] = model.size() ? law_kind_name(model.laws.front().kind()) : "";
  doc["weights"] = model.weights;
  ordered_json comps = ordered_json::array();
  for (int g = 0; g < model.size(); ++g) {
    const ComponentParams& c = model.components[g];
    ordered_json comp;
    comp["mu"] = vector_json(c.mu);
    comp["sigma"] = matrix_json(c.sigma);
    comp["lambda"] = vector_json(c.lambda);
    comp["theta"] = model.laws[g].is_degenerate() ? ordered_json(nullptr) : ordered_json(model.laws[g].param());
    comps.push_back(std::move(comp));
  }
  doc["components"] = std::move(comps);
  return doc;
}

MixtureModel model_from_json(const json& doc) {
  MixtureModel model;
  try {
    const LawKind kind = law_kind_from_name(doc.at("family").get<std::string>());
    model.weights = doc.at("weights").get<std::vector<double>>();
    for (const json& comp : doc.at("components")) {
      model.components.push_back(
          ComponentParams{vector_from(comp, "mu"), matrix_from(comp, "sigma"), vector_from(comp, "lambda"), 0.0});
      model.laws.push_back(kind == LawKind::Degenerate ? ScaleLaw::skew_normal()
                                                       : ScaleLaw::default_for(kind, 1).with_param(
                                                             comp.at("theta").get<double>()));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::Parse, std::string("malformed model: ") + e.what());
  }
  if (model.weights.size() != model.components.size())
    throw Error(Errc::Parse, "model has " + std::to_string(model.weights.size()) + " weights for " +
                                 std::to_string(model.components.size()) + " components");
  model.validate();
  return model;
}

ordered_json report_to_json(const FitReport& report, const Dataset& data, const FitConfig& config) {
  ordered_json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["family"] = law_kind_name(config.family);
  doc["n_components"] = config.n_components;
  doc["n_rows"] = data.rows();
  doc["dim"] = data.dim();
  doc["columns"] = data.columns;
  doc["log_transform"] = data.log_transformed;
  doc["dropped_rows"] = data.dropped_rows;
  doc["missing_rate_per_column"] = data.missing_rates();
  doc["converged"] = report.converged;
  doc["n_iter"] = report.n_iter;
  doc["loglik"] = report.loglik_trace.empty() ? ordered_json(nullptr) : ordered_json(report.loglik_trace.back());
  doc["bic"] = report.bic;
  doc["n_params"] = report.n_params;
  doc["model"] = model_to_json(report.model);
  doc["loglik_trace"] = report.loglik_trace;
  doc["loglik_decreases"] = loglik_decreases(report.loglik_trace);
  doc["underflow_rows"] = report.underflow_rows;
  doc["warnings"] = report.warnings;
  doc["labels"] = report.labels;
  doc["responsibilities"] = matrix_json(report.responsibilities);
  return doc;
}

std::vector<int> loglik_decreases(const std::vector<double>& trace, double tol) {
  std::vector<int> out;
  for (std::size_t t = 1; t < trace.size(); ++t)
    if (trace[t] < trace[t - 1] - tol) out.push_back(static_cast<int>(t));
  return out;
}

void write_ari_csv(std::ostream& out, const std::vector<bench::MetricsRow>& rows) {
  out << kCellHeader << ",mean_ari\n";
  for (const bench::MetricsRow& row : rows) {
    write_cell_prefix(out, row);
    out << ',' << format_double(row.mean_ari) << '\n';
  }
}

void write_recovery_csv(std::ostream& out, const std::vector<bench::MetricsRow>& rows, bool rmse) {
  out << kCellHeader << ",block," << (rmse ? "rmse" : "ab") << '\n';
  for (const bench::MetricsRow& row : rows) {
    const bench::Recovery& r = row.recovery;
    const std::pair<const char*, const bench::BlockError*> blocks[] = {
        {"location", &r.location},       {"skewness", &r.skewness}, {"scale_trace", &r.scale_trace},
        {"scale_antitrace", &r.scale_antitrace}, {"weights", &r.weights},   {"theta", &r.theta}};
    for (const auto& [name, err] : blocks) {
      if (row.generator == LawKind::Degenerate && std::string_view(name) == "theta") continue;
      write_cell_prefix(out, row);
      out << ',' << name << ',' << format_double(rmse ? err->rmse : err->ab) << '\n';
    }
  }
}

bench::ExperimentGrid grid_from_json(const json& doc) {
  bench::ExperimentGrid grid = bench::ExperimentGrid::standard();
  try {
    if (doc.contains("families")) {
      grid.families.clear();
      for (const json& f : doc.at("families")) {
        if (f.is_string()) {
          const LawKind k = law_kind_from_name(f.get<std::string>());
          grid.families.push_back({k, k});
        } else {
          const auto pair = f.get<std::vector<std::string>>();
          if (pair.size() != 2) throw Error(Errc::Parse, "family pairs need [generator, fitted]");
          grid.families.push_back({law_kind_from_name(pair[0]), law_kind_from_name(pair[1])});
        }
      }
    }
    if (doc.contains("rates")) grid.rates = doc.at("rates").get<std::vector<double>>();
    if (doc.contains("overlaps")) {
      grid.overlaps.clear();
      for (const auto& name : doc.at("overlaps").get<std::vector<std::string>>())
        grid.overlaps.push_back(bench::overlap_from_name(name));
    }
    if (doc.contains("sizes")) grid.sizes = doc.at("sizes").get<std::vector<int>>();
    if (doc.contains("replicates")) grid.replicates = doc.at("replicates").get<int>();
    if (doc.contains("max_iter")) grid.max_iter = doc.at("max_iter").get<int>();
    if (doc.contains("tolerance")) grid.tolerance = doc.at("tolerance").get<double>();
  } catch (const json::exception& e) {
    throw Error(Errc::Parse, std::string("malformed grid manifest: ") + e.what());
  }
  grid.validate();
  return grid;
}

ordered_json grid_to_json(const bench::ExperimentGrid& grid) {
  ordered_json doc;
  ordered_json fams = ordered_json::array();
  for (const bench::FamilyPair& f : grid.families)
    fams.push_back(ordered_json::array({law_kind_name(f.generator), law_kind_name(f.fitted)}));
  doc["families"] = std::move(fams);
  doc["rates"] = grid.rates;
  ordered_json overlaps = ordered_json::array();
  for (bench::Overlap o : grid.overlaps) overlaps.push_back(bench::overlap_name(o));
  doc["overlaps"] = std::move(overlaps);
  doc["sizes"] = grid.sizes;
  doc["replicates"] = grid.replicates;
  doc["max_iter"] = grid.max_iter;
  doc["tolerance"] = grid.tolerance;
  return doc;
}

}  // namespace smsn::io
