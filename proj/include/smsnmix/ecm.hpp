#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "smsnmix/conditioning.hpp"

namespace smsn {

/// Data matrix with NaN marking missing cells, grouped by missingness pattern.
struct IncompleteData {
  Matrix values;
  std::vector<MissingPattern> patterns;  // distinct, ordered
  std::vector<int> pattern_of_row;

  /// Throws on +-inf cells, rows without an observed cell, or empty input.
  static IncompleteData from_matrix(Matrix values);

  int rows() const noexcept { return static_cast<int>(values.rows()); }
  int dim() const noexcept { return static_cast<int>(values.cols()); }
  Vector row(int i) const { return values.row(i).transpose(); }
  const MissingPattern& pattern(int i) const { return patterns[pattern_of_row[i]]; }
};

enum class InitStrategy { KMeans, RandomPartition, Given };
/// Starting skewness: zero, or per-coordinate skew-normal moment matching.
enum class SkewInit { Zero, Moments };
/// Which location and skewness iterates enter the omega update.  `Fresh`
/// uses the new mu and Delta (a proper conditional maximization);
/// `AsPrinted` uses the previous mu and Delta except for the new mu in the
/// T-cross term; `Previous` uses the previous iterates throughout.
enum class OmegaUpdate { Fresh, AsPrinted, Previous };

struct IterationInfo {
  int iteration = 0;  // CM steps completed
  double loglik = 0.0;
  const MixtureModel* model = nullptr;
};

struct FitConfig {
  int n_components = 1;
  LawKind family = LawKind::Degenerate;
  double tolerance = 1e-5;
  int max_iter = 500;
  InitStrategy init = InitStrategy::KMeans;
  std::optional<MixtureModel> initial_model;  // for InitStrategy::Given
  SkewInit skew_init = SkewInit::Moments;
  std::uint64_t seed = 1;
  int kmeans_restarts = 10;
  std::optional<HyperBounds> theta_bounds;  // defaults to the law's bounds
  double ridge = 1e-8;
  bool fix_skewness = false;  // keep lambda at zero
  bool fix_theta = false;
  OmegaUpdate omega_update = OmegaUpdate::Fresh;
  LogMoment log_moment = LogMoment::Exact;  // E[log kappa^{-1}] in the theta update
  double quad_tol = 1e-10;
  int threads = 1;
  std::function<void(const IterationInfo&)> observer;

  void validate() const;
};

/// Sums over rows of the hat quantities of one component, with X measured
/// from `origin` (the component location of the E-step model).
struct ComponentStats {
  double z = 0.0;
  double zk = 0.0;
  double zkt = 0.0;
  double zkt2 = 0.0;
  double z_log_k_inv = 0.0;  // sum z E[log kappa^{-1}] under the configured mode
  double z_kappa = 0.0;      // sum z E[kappa]
  Vector origin;
  Vector zkr;
  Vector zktr;
  Matrix zkrr;

  explicit ComponentStats(int p = 0);
  ComponentStats& operator+=(const ComponentStats& other);
};

struct EStepResult {
  std::vector<ComponentStats> stats;
  double loglik = 0.0;
  Matrix responsibilities;  // n x G
  int underflow_rows = 0;
};

struct EStepOptions {
  QuadratureOptions quad;
  LogMoment log_moment = LogMoment::Taylor;
  int threads = 1;
};

/// E-step over every row.  Rows are reduced in fixed-size blocks in row
/// order, so the result does not depend on the thread count.
EStepResult e_step(const IncompleteData& data, const MixtureModel& model, const EStepOptions& options = {});

/// Expected complete-data log-likelihood, up to terms free of the parameters.
double q_value(const MixtureModel& model, std::span<const ComponentStats> stats);

/// The theta part of q_value for one component.
double theta_objective(const ScaleLaw& law, const ComponentStats& stats);

struct CmStepResult {
  MixtureModel model;
  std::vector<std::string> warnings;
};

/// One pass of conditional maximizations: pi, mu, Delta, omega, theta.
/// Throws Errc::EmptyComponent when a component's responsibility mass is
/// below p + 1.
CmStepResult cm_step(const MixtureModel& model, std::span<const ComponentStats> stats, int n_rows,
                     const FitConfig& config);

double observed_loglik(const IncompleteData& data, const MixtureModel& model);

struct AitkenResult {
  bool converged = false;
  double l_inf = 0.0;
  double acceleration = 0.0;
};

/// Aitken check on three consecutive log-likelihoods: converged iff
/// 0 <= l_inf - l2 < eps; falls back to |l2 - l1| < eps when l1 - l0 is
/// negligible or the acceleration is at least one.
AitkenResult aitken_check(double l0, double l1, double l2, double eps);

/// 2 loglik - P log n (larger is better).
double bic(double loglik, int n_params, int n_rows);
/// (G - 1) + G (2p + p(p+1)/2 + dim theta).
int free_parameter_count(int n_components, int p, LawKind family);

struct KMeansResult {
  Matrix centers;  // k x p
  std::vector<int> labels;
  double inertia = 0.0;
};

/// Lloyd's algorithm from k-means++ seeds; best of `restarts` by inertia.
KMeansResult kmeans(const Matrix& points, int k, int restarts, std::mt19937_64& rng);

/// Column-mean imputation of the missing cells.
Matrix mean_impute(const IncompleteData& data);

struct InitResult {
  MixtureModel model;
  std::vector<int> labels;  // starting hard partition (empty for Given)
  std::vector<std::string> warnings;
};

InitResult initialize(const IncompleteData& data, const FitConfig& config);

/// Mixture parameters estimated from a hard partition of completed data.
MixtureModel model_from_partition(const Matrix& completed, std::span<const int> labels, int n_components,
                                  const ScaleLaw& law, SkewInit skew_init, double ridge);

struct FitReport {
  MixtureModel model;
  Matrix responsibilities;
  std::vector<int> labels;
  Matrix imputed;
  std::vector<double> loglik_trace;
  bool converged = false;
  int n_iter = 0;
  double bic = 0.0;
  int n_params = 0;
  int underflow_rows = 0;
  std::vector<std::string> warnings;
};

FitReport fit(const IncompleteData& data, const FitConfig& config);

/// Missing cells replaced by sum_g z_g E[X_m | x_o, component g] under `model`.
Matrix impute_missing(const IncompleteData& data, const MixtureModel& model, double quad_tol = 1e-10);

/// argmax per row, lowest index on ties.
std::vector<int> hard_labels(const Matrix& responsibilities);

}  // namespace smsn
