#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include "smsnmix/bench.hpp"
#include "smsnmix/ecm.hpp"
#include "smsnmix/io.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr int kExitConverged = 0;
constexpr int kExitError = 1;
constexpr int kExitMaxIter = 2;

struct FitOptions {
  std::string input;
  std::string family = "skew-normal";
  int clusters = 1;
  double tolerance = 1e-5;
  int max_iter = 500;
  std::string init = "kmeans";
  std::uint64_t seed = 1;
  int restarts = 10;
  std::string log_moment = "exact";
  std::string omega_update = "fresh";
  bool fix_skewness = false;
  bool log_transform = false;
  bool no_header = false;
};

struct RunOptions {
  int threads = 0;  // 0: SMSNMIX_THREADS or 1
  bool record_timings = false;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SMSNMIX_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
    throw smsn::Error(smsn::Errc::InvalidArgument, "SMSNMIX_THREADS must be a positive integer");
  }
  return 1;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw smsn::Error(smsn::Errc::InvalidArgument, "cannot open '" + path.string() + "'");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw smsn::Error(smsn::Errc::InvalidArgument, "cannot write '" + path.string() + "'");
  out << content;
}

std::string dump(const ordered_json& doc) { return doc.dump(2) + "\n"; }

smsn::FitConfig make_config(const FitOptions& o, int threads) {
  static const std::map<std::string, smsn::InitStrategy> inits{{"kmeans", smsn::InitStrategy::KMeans},
                                                               {"random", smsn::InitStrategy::RandomPartition}};
  static const std::map<std::string, smsn::LogMoment> moments{{"exact", smsn::LogMoment::Exact},
                                                              {"taylor", smsn::LogMoment::Taylor}};
  static const std::map<std::string, smsn::OmegaUpdate> omegas{{"fresh", smsn::OmegaUpdate::Fresh},
                                                               {"as-printed", smsn::OmegaUpdate::AsPrinted},
                                                               {"previous", smsn::OmegaUpdate::Previous}};
  smsn::FitConfig c;
  c.n_components = o.clusters;
  c.family = smsn::law_kind_from_name(o.family);
  c.tolerance = o.tolerance;
  c.max_iter = o.max_iter;
  c.init = inits.at(o.init);
  c.seed = o.seed;
  c.kmeans_restarts = o.restarts;
  c.log_moment = moments.at(o.log_moment);
  c.omega_update = omegas.at(o.omega_update);
  c.fix_skewness = o.fix_skewness;
  c.threads = threads;
  c.validate();
  return c;
}

ordered_json fit_options_json(const FitOptions& o) {
  ordered_json doc;
  doc["input"] = o.input;
  doc["family"] = o.family;
  doc["clusters"] = o.clusters;
  doc["tolerance"] = o.tolerance;
  doc["max_iter"] = o.max_iter;
  doc["init"] = o.init;
  doc["seed"] = o.seed;
  doc["restarts"] = o.restarts;
  doc["log_moment"] = o.log_moment;
  doc["omega_update"] = o.omega_update;
  doc["fix_skewness"] = o.fix_skewness;
  doc["log_transform"] = o.log_transform;
  doc["header"] = !o.no_header;
  return doc;
}

ordered_json manifest_base(const std::string& command) {
  ordered_json doc;
  doc["schema_version"] = smsn::io::kSchemaVersion;
  doc["tool"] = "smsnmix";
  doc["version"] = kVersion;
  doc["command"] = command;
  return doc;
}

void add_fit_options(CLI::App* cmd, FitOptions& o, bool input_required) {
  auto* in = cmd->add_option("--input,-i", o.input, "CSV file with a header row; empty, NA or NaN cells are missing")
                 ->check(CLI::ExistingFile);
  if (input_required) in->required();
  cmd->add_option("--family,-f", o.family, "skew-normal, skew-t, skew-slash or skew-vgamma")
      ->check(CLI::IsMember({"skew-normal", "skew-t", "skew-slash", "skew-vgamma", "sn", "st", "ss", "svg"}));
  cmd->add_option("--clusters,-k", o.clusters, "number of mixture components")->check(CLI::PositiveNumber);
  cmd->add_option("--tol", o.tolerance, "Aitken convergence tolerance")->check(CLI::PositiveNumber);
  cmd->add_option("--max-iter", o.max_iter, "iteration cap")->check(CLI::Range(3, 1000000));
  cmd->add_option("--init", o.init, "kmeans or random")->check(CLI::IsMember({"kmeans", "random"}));
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--restarts", o.restarts, "k-means restarts")->check(CLI::PositiveNumber);
  cmd->add_option("--log-moment", o.log_moment, "E[log kappa^-1] in the mixing-parameter update: exact or taylor")
      ->check(CLI::IsMember({"exact", "taylor"}));
  cmd->add_option("--omega-update", o.omega_update, "fresh, as-printed or previous")
      ->check(CLI::IsMember({"fresh", "as-printed", "previous"}));
  cmd->add_flag("--fix-skewness", o.fix_skewness, "keep lambda at zero (symmetric fit)");
  cmd->add_flag("--log-transform", o.log_transform, "fit log(x); every observed cell must be positive");
  cmd->add_flag("--no-header", o.no_header, "first line is data");
}

void add_run_options(CLI::App* cmd, RunOptions& r) {
  cmd->add_option("--threads,-j", r.threads, "worker threads (default SMSNMIX_THREADS or 1)")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--record-timings", r.record_timings, "add wall-clock timings to the manifest");
}

smsn::io::Dataset load(const FitOptions& o, bool log_transform) {
  smsn::io::Dataset data = smsn::io::load_csv(o.input, {!o.no_header, log_transform});
  if (!data.dropped_rows.empty())
    std::cerr << "warning: dropped " << data.dropped_rows.size() << " row(s) with no observed value\n";
  if (data.rows() == 0) throw smsn::Error(smsn::Errc::InvalidArgument, "no rows with an observed value");
  return data;
}

smsn::FitReport run_fit(const smsn::io::Dataset& data, const smsn::FitConfig& config) {
  smsn::FitReport report = smsn::fit(smsn::IncompleteData::from_matrix(data.values), config);
  for (const std::string& w : report.warnings) std::cerr << "warning: " << w << '\n';
  for (int t : smsn::io::loglik_decreases(report.loglik_trace))
    std::cerr << "warning: log-likelihood decreased at iteration " << t << '\n';
  if (!report.converged) std::cerr << "warning: stopped at max_iter without meeting the tolerance\n";
  return report;
}

int cmd_fit(const FitOptions& o, const RunOptions& r, const std::string& output) {
  const auto start = Clock::now();
  const smsn::FitConfig config = make_config(o, resolve_threads(r.threads));
  const smsn::io::Dataset data = load(o, o.log_transform);
  const auto loaded = Clock::now();
  const smsn::FitReport report = run_fit(data, config);
  const double fit_seconds = seconds_since(loaded);

  const fs::path dir(output);
  write_file(dir / "report.json", dump(smsn::io::report_to_json(report, data, config)));
  std::ostringstream csv;
  smsn::io::write_completed_csv(csv, data, report.imputed);
  write_file(dir / "imputed.csv", csv.str());

  ordered_json manifest = manifest_base("fit");
  manifest["config"] = fit_options_json(o);
  manifest["seed"] = o.seed;
  manifest["input_sha256"] = sha256_file(o.input);
  manifest["outputs"] = {"report.json", "imputed.csv"};
  if (r.record_timings) manifest["timings"] = {{"fit_seconds", fit_seconds}, {"total_seconds", seconds_since(start)}};
  write_file(dir / "manifest.json", dump(manifest));

  std::cout << "loglik " << std::setprecision(10) << report.loglik_trace.back() << "  bic " << report.bic
            << "  iterations " << report.n_iter << (report.converged ? "  converged" : "  max_iter reached") << '\n';
  return report.converged ? kExitConverged : kExitMaxIter;
}

int cmd_impute(const FitOptions& o, const RunOptions& r, const std::string& model_path, const std::string& output) {
  int status = kExitConverged;
  smsn::io::Dataset data;
  smsn::Matrix completed;
  if (!model_path.empty()) {
    std::ifstream in(model_path, std::ios::binary);
    if (!in) throw smsn::Error(smsn::Errc::InvalidArgument, "cannot open '" + model_path + "'");
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw smsn::Error(smsn::Errc::Parse, std::string("model file: ") + e.what());
    }
    const nlohmann::json& node = doc.contains("model") ? doc.at("model") : doc;
    const smsn::MixtureModel model = smsn::io::model_from_json(node);
    const bool log_transform = o.log_transform || doc.value("log_transform", false);
    data = load(o, log_transform);
    if (data.dim() != model.dim())
      throw smsn::Error(smsn::Errc::DimensionMismatch, "model has p = " + std::to_string(model.dim()) +
                                                           " but the input has " + std::to_string(data.dim()) +
                                                           " columns");
    completed = smsn::impute_missing(smsn::IncompleteData::from_matrix(data.values), model);
  } else {
    const smsn::FitConfig config = make_config(o, resolve_threads(r.threads));
    data = load(o, o.log_transform);
    const smsn::FitReport report = run_fit(data, config);
    completed = report.imputed;
    status = report.converged ? kExitConverged : kExitMaxIter;
  }
  std::ostringstream csv;
  smsn::io::write_completed_csv(csv, data, completed);
  write_file(output, csv.str());
  return status;
}

struct SimulateOptions {
  std::string grid = "paper";
  int replicates = 0;
  std::vector<int> sizes;
  std::uint64_t seed = 1;
  int max_iter = 0;
  std::string output;
};

int cmd_simulate(const SimulateOptions& s, const RunOptions& r) {
  const auto start = Clock::now();
  smsn::bench::ExperimentGrid grid = smsn::bench::ExperimentGrid::standard();
  std::string grid_digest;
  if (s.grid != "paper") {
    std::ifstream in(s.grid, std::ios::binary);
    if (!in) throw smsn::Error(smsn::Errc::InvalidArgument, "cannot open grid manifest '" + s.grid + "'");
    try {
      grid = smsn::io::grid_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw smsn::Error(smsn::Errc::Parse, std::string("grid manifest: ") + e.what());
    }
    grid_digest = sha256_file(s.grid);
  }
  if (s.replicates > 0) grid.replicates = s.replicates;
  if (!s.sizes.empty()) grid.sizes = s.sizes;
  if (s.max_iter > 0) grid.max_iter = s.max_iter;
  grid.threads = resolve_threads(r.threads);
  grid.validate();

  const std::vector<smsn::bench::MetricsRow> rows = smsn::bench::run_grid(grid, s.seed);
  const fs::path dir(s.output);
  std::ostringstream ari, ab, rmse;
  smsn::io::write_ari_csv(ari, rows);
  smsn::io::write_recovery_csv(ab, rows, false);
  smsn::io::write_recovery_csv(rmse, rows, true);
  write_file(dir / "metrics" / "ari.csv", ari.str());
  write_file(dir / "metrics" / "ab.csv", ab.str());
  write_file(dir / "metrics" / "rmse.csv", rmse.str());

  int flagged = 0;
  for (const auto& row : rows) {
    if (row.flagged) {
      ++flagged;
      std::cerr << "warning: " << row.scenario_id() << " failed in " << row.failures << " of " << row.replicates
                << " replicates\n";
    }
  }
  ordered_json manifest = manifest_base("simulate");
  manifest["grid_source"] = s.grid;
  if (!grid_digest.empty()) manifest["grid_sha256"] = grid_digest;
  manifest["grid"] = smsn::io::grid_to_json(grid);
  manifest["seed"] = s.seed;
  manifest["cells"] = rows.size();
  manifest["flagged_cells"] = flagged;
  manifest["outputs"] = {"metrics/ari.csv", "metrics/ab.csv", "metrics/rmse.csv"};
  if (r.record_timings) manifest["timings"] = {{"total_seconds", seconds_since(start)}};
  write_file(dir / "manifest.json", dump(manifest));
  std::cout << rows.size() << " cells written to " << (dir / "metrics").string() << '\n';
  return kExitConverged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finite mixtures of scale mixtures of skew-normal distributions for incomplete data"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  FitOptions fit_opts;
  RunOptions fit_run;
  std::string fit_output;
  auto* fit = app.add_subcommand("fit", "fit a mixture and write report.json, imputed.csv and manifest.json");
  add_fit_options(fit, fit_opts, true);
  add_run_options(fit, fit_run);
  fit->add_option("--output,-o", fit_output, "output directory")->required();

  SimulateOptions sim_opts;
  RunOptions sim_run;
  auto* sim = app.add_subcommand("simulate", "run the simulation grid and write metrics/{ari,ab,rmse}.csv");
  sim->add_option("--grid", sim_opts.grid, "'paper' or a JSON grid manifest");
  sim->add_option("--replicates,-B", sim_opts.replicates, "replicates per cell (default 20)")
      ->check(CLI::PositiveNumber);
  sim->add_option("--n", sim_opts.sizes, "sample sizes, e.g. --n 200 500")->check(CLI::Range(2, 100000000));
  sim->add_option("--max-iter", sim_opts.max_iter, "iteration cap per fit (default 500)")
      ->check(CLI::Range(3, 1000000));
  sim->add_option("--seed", sim_opts.seed, "base seed");
  sim->add_option("--output,-o", sim_opts.output, "output directory")->required();
  add_run_options(sim, sim_run);

  FitOptions imp_opts;
  RunOptions imp_run;
  std::string imp_model, imp_output;
  auto* imp = app.add_subcommand("impute", "write the input with missing cells replaced by conditional means");
  add_fit_options(imp, imp_opts, true);
  add_run_options(imp, imp_run);
  imp->add_option("--model,-m", imp_model, "report.json of an earlier fit (otherwise fit inline)")
      ->check(CLI::ExistingFile);
  imp->add_option("--output,-o", imp_output, "completed CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitError;
  }

  try {
    if (*fit) return cmd_fit(fit_opts, fit_run, fit_output);
    if (*sim) return cmd_simulate(sim_opts, sim_run);
    if (*imp) return cmd_impute(imp_opts, imp_run, imp_model, imp_output);
  } catch (const smsn::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
