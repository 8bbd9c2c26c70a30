#include "smsnmix/ecm.hpp"

#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "parallel.hpp"
#include "smsnmix/kernels.hpp"

namespace smsn {

namespace {

constexpr int kBlockRows = 64;
constexpr double kMaxCondition = 1e12;
constexpr double kQSlack = 1e-10;  // relative rounding allowance before a CM update is refused
constexpr int kThetaBits = 24;
constexpr int kLloydIterations = 100;

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

double condition_number(const Matrix& m) {
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(m, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

double log_det_spd(const Matrix& m) {
  const Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw Error(Errc::NotPSD, "omega is not positive definite");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

/// Scatter of the omega update (not yet divided by the responsibility mass)
/// for location `mu`, skewness `skew` and T-cross location `mu_t`.
Matrix omega_scatter(const ComponentStats& s, const Vector& mu, const Vector& skew, const Vector& mu_t) {
  const Vector d = mu - s.origin;
  const Vector d_t = mu_t - s.origin;
  const Matrix a = s.zkr * d.transpose();
  const Matrix b = s.zktr * skew.transpose();
  const Matrix c = d_t * skew.transpose();
  const Matrix m = s.zkrr - a - a.transpose() + s.zk * d * d.transpose() - b - b.transpose() +
                   s.zkt * (c + c.transpose()) + s.zkt2 * skew * skew.transpose();
  return symmetrize(m);
}

ComponentStats zero_stats(int p) { return ComponentStats(p); }

void accumulate(ComponentStats& s, const HatQuantities& h, LogMoment mode) {
  s.z += h.z;
  s.zk += h.zk;
  s.zkt += h.zkt;
  s.zkt2 += h.zkt2;
  if (h.z > 0.0) {
    s.z_log_k_inv += h.z * h.moments.log_k_inv(mode);
    s.z_kappa += h.z * h.moments.kappa;
  }
  s.zkr += h.zkr;
  s.zktr += h.zktr;
  s.zkrr += h.zkrr;
}

double theta_value(const ScaleLaw& law, double value, const ComponentStats& s) {
  return theta_objective(law.with_param(value), s);
}

/// Skewness vector matching the per-coordinate sample skewness of a
/// univariate skew-normal.
Vector moment_skewness(const Matrix& rows) {
  const Vector mean = rows.colwise().mean().transpose();
  const Matrix centered = rows.rowwise() - mean.transpose();
  const double max_gamma = 0.99 * 0.5 * (4.0 - std::numbers::pi) * std::pow(2.0 / (std::numbers::pi - 2.0), 1.5);
  Vector lambda(rows.cols());
  for (Eigen::Index j = 0; j < rows.cols(); ++j) {
    const double m2 = centered.col(j).array().square().mean();
    const double m3 = centered.col(j).array().cube().mean();
    double gamma = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
    gamma = std::clamp(gamma, -max_gamma, max_gamma);
    const double b = std::cbrt(2.0 * std::abs(gamma) / (4.0 - std::numbers::pi));
    const double delta = std::min(0.95, std::sqrt(0.5 * std::numbers::pi) * b / std::sqrt(1.0 + b * b));
    lambda[j] = std::copysign(delta / std::sqrt(1.0 - delta * delta), gamma);
  }
  return lambda;
}

std::vector<int> random_partition(int n, int k, std::mt19937_64& rng) {
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) labels[order[i]] = i % k;
  return labels;
}

bool partition_is_usable(std::span<const int> labels, int k, int p) {
  std::vector<int> counts(k, 0);
  for (const int l : labels) ++counts[l];
  return std::ranges::all_of(counts, [p](int c) { return c >= p + 1; });
}

}  // namespace

IncompleteData IncompleteData::from_matrix(Matrix values) {
  if (values.rows() == 0 || values.cols() == 0) throw Error(Errc::InvalidArgument, "empty data matrix");
  IncompleteData data;
  const int n = static_cast<int>(values.rows());
  std::vector<MissingPattern> row_patterns;
  row_patterns.reserve(n);
  for (int i = 0; i < n; ++i) {
    const Vector x = values.row(i).transpose();
    for (Eigen::Index j = 0; j < x.size(); ++j)
      if (std::isinf(x[j]))
        throw Error(Errc::NonFinite, "row " + std::to_string(i) + " has an infinite value");
    MissingPattern pattern = MissingPattern::of_row(x);
    if (pattern.n_observed() == 0)
      throw Error(Errc::InvalidArgument, "row " + std::to_string(i) + " has no observed value");
    row_patterns.push_back(std::move(pattern));
  }
  data.patterns = row_patterns;
  std::sort(data.patterns.begin(), data.patterns.end());
  data.patterns.erase(std::unique(data.patterns.begin(), data.patterns.end()), data.patterns.end());
  data.pattern_of_row.resize(n);
  for (int i = 0; i < n; ++i) {
    const auto it = std::lower_bound(data.patterns.begin(), data.patterns.end(), row_patterns[i]);
    data.pattern_of_row[i] = static_cast<int>(it - data.patterns.begin());
  }
  data.values = std::move(values);
  return data;
}

void FitConfig::validate() const {
  if (n_components < 1) throw Error(Errc::InvalidArgument, "n_components must be at least 1");
  if (!(tolerance > 0.0)) throw Error(Errc::InvalidArgument, "tolerance must be positive");
  if (max_iter < 3) throw Error(Errc::InvalidArgument, "max_iter must be at least 3");
  if (kmeans_restarts < 1) throw Error(Errc::InvalidArgument, "kmeans_restarts must be at least 1");
  if (!(ridge > 0.0)) throw Error(Errc::InvalidArgument, "ridge must be positive");
  if (!(quad_tol > 0.0)) throw Error(Errc::InvalidArgument, "quad_tol must be positive");
  if (threads < 1) throw Error(Errc::InvalidArgument, "threads must be at least 1");
  if (theta_bounds && !(theta_bounds->lower < theta_bounds->upper))
    throw Error(Errc::InvalidArgument, "theta bounds must satisfy lower < upper");
  if (init == InitStrategy::Given) {
    if (!initial_model) throw Error(Errc::InvalidArgument, "Given init needs an initial model");
    if (initial_model->size() != n_components)
      throw Error(Errc::InvalidArgument, "initial model has the wrong number of components");
  }
}

ComponentStats::ComponentStats(int p)
    : origin(Vector::Zero(p)), zkr(Vector::Zero(p)), zktr(Vector::Zero(p)), zkrr(Matrix::Zero(p, p)) {}

ComponentStats& ComponentStats::operator+=(const ComponentStats& other) {
  z += other.z;
  zk += other.zk;
  zkt += other.zkt;
  zkt2 += other.zkt2;
  z_log_k_inv += other.z_log_k_inv;
  z_kappa += other.z_kappa;
  zkr += other.zkr;
  zktr += other.zktr;
  zkrr += other.zkrr;
  return *this;
}

EStepResult e_step(const IncompleteData& data, const MixtureModel& model, const EStepOptions& options) {
  if (data.dim() != model.dim()) throw Error(Errc::DimensionMismatch, "data and model dimensions differ");
  const int n = data.rows();
  const int p = data.dim();
  const int n_comp = model.size();
  const PatternCache cache(model, data.patterns);

  struct BlockResult {
    std::vector<ComponentStats> stats;
    double loglik = 0.0;
    int underflow = 0;
  };
  const int n_blocks = (n + kBlockRows - 1) / kBlockRows;
  std::vector<BlockResult> blocks(n_blocks);
  EStepResult out;
  out.responsibilities.resize(n, n_comp);

  detail::parallel_for(n_blocks, options.threads, [&](int b) {
    BlockResult& block = blocks[b];
    block.stats.assign(n_comp, zero_stats(p));
    for (int g = 0; g < n_comp; ++g) block.stats[g].origin = model.components[g].mu;
    const int end = std::min(n, (b + 1) * kBlockRows);
    for (int i = b * kBlockRows; i < end; ++i) {
      const EStepRow row = estep_row(model, cache.for_pattern(data.pattern_of_row[i]), data.row(i), options.quad);
      block.loglik += row.log_marginal;
      block.underflow += row.underflow ? 1 : 0;
      for (int g = 0; g < n_comp; ++g) {
        accumulate(block.stats[g], row.components[g], options.log_moment);
        out.responsibilities(i, g) = row.components[g].z;
      }
    }
  });

  out.stats.assign(n_comp, zero_stats(p));
  for (int g = 0; g < n_comp; ++g) out.stats[g].origin = model.components[g].mu;
  for (const BlockResult& block : blocks) {
    for (int g = 0; g < n_comp; ++g) out.stats[g] += block.stats[g];
    out.loglik += block.loglik;
    out.underflow_rows += block.underflow;
  }
  return out;
}

double theta_objective(const ScaleLaw& law, const ComponentStats& s) {
  const double v = law.param();
  switch (law.kind()) {
    case LawKind::Degenerate: return 0.0;
    case LawKind::GammaInverse: {
      const double a = 0.5 * v;
      return s.z * (a * std::log(a) - std::lgamma(a)) + (a - 1.0) * s.z_log_k_inv - a * s.zk;
    }
    case LawKind::BetaInverse: return s.z * std::log(v) + (v - 1.0) * s.z_log_k_inv;
    case LawKind::Gamma:
      return s.z * (v * std::log(v) - std::lgamma(v)) - (v - 1.0) * s.z_log_k_inv - v * s.z_kappa;
  }
  return 0.0;
}

/// Location/scale part of one component's Q contribution.
double gaussian_q(const ComponentStats& s, const Vector& mu, const Matrix& omega, const Vector& skew) {
  const Eigen::LLT<Matrix> llt(omega);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  return -0.5 * s.z * log_det_spd(omega) - 0.5 * llt.solve(omega_scatter(s, mu, skew, mu)).trace();
}

double q_value(const MixtureModel& model, std::span<const ComponentStats> stats) {
  if (static_cast<int>(stats.size()) != model.size())
    throw Error(Errc::DimensionMismatch, "one stats block per component expected");
  double q = 0.0;
  for (int g = 0; g < model.size(); ++g) {
    const ComponentStats& s = stats[g];
    const ComponentParams& c = model.components[g];
    const ComponentGeometry geo = derive_geometry(c);
    q += s.z * std::log(model.weights[g]) + gaussian_q(s, c.mu, geo.omega, geo.skew) +
         theta_objective(model.laws[g], s);
  }
  return q;
}

CmStepResult cm_step(const MixtureModel& model, std::span<const ComponentStats> stats, int n_rows,
                     const FitConfig& config) {
  const int n_comp = model.size();
  const int p = model.dim();
  if (static_cast<int>(stats.size()) != n_comp)
    throw Error(Errc::DimensionMismatch, "one stats block per component expected");
  CmStepResult out;
  out.model = model;
  for (int g = 0; g < n_comp; ++g) {
    const ComponentStats& s = stats[g];
    if (!(s.z >= p + 1.0))
      throw Error(Errc::EmptyComponent, "component " + std::to_string(g) + " has responsibility mass " +
                                            std::to_string(s.z) + " < p + 1");
    out.model.weights[g] = s.z / n_rows;

    const ComponentParams& old = model.components[g];
    const Vector skew_old = config.fix_skewness ? Vector::Zero(p) : derive_geometry(old).skew;
    const Vector mu = s.origin + (s.zkr - s.zkt * skew_old) / s.zk;
    const Vector skew =
        config.fix_skewness ? Vector::Zero(p) : Vector((s.zktr - s.zkt * (mu - s.origin)) / s.zkt2);

    Matrix omega;
    switch (config.omega_update) {
      case OmegaUpdate::Fresh: omega = omega_scatter(s, mu, skew, mu); break;
      case OmegaUpdate::AsPrinted: omega = omega_scatter(s, old.mu, skew_old, mu); break;
      case OmegaUpdate::Previous: omega = omega_scatter(s, old.mu, skew_old, old.mu); break;
    }
    omega /= s.z;

    Matrix sigma = omega + skew * skew.transpose();
    if (condition_number(omega) > kMaxCondition || condition_number(sigma) > kMaxCondition) {
      const double bump = config.ridge * sigma.trace() / p;
      omega.diagonal().array() += bump;
      sigma = omega + skew * skew.transpose();
      out.warnings.push_back("component " + std::to_string(g) + ": ridge " + std::to_string(bump) +
                             " added to a near-singular scale matrix");
    }
    out.model.components[g] = params_from_skew(mu, omega, skew);
    if (config.omega_update == OmegaUpdate::Fresh) {
      // Each update is an exact conditional maximizer, so a drop in Q can only come from rounding,
      // e.g. a component collapsed onto a row whose E[1/kappa] exceeds double resolution.
      const ComponentGeometry geo_old = derive_geometry(old);
      const double q_old = gaussian_q(s, old.mu, geo_old.omega, geo_old.skew);
      const double q_new = gaussian_q(s, mu, omega, skew);
      if (q_new < q_old - kQSlack * std::max(1.0, std::abs(q_old))) {
        out.model.components[g] = old;
        out.warnings.push_back("component " + std::to_string(g) + ": location/scale update refused (Q would drop by " +
                               std::to_string(q_old - q_new) + ")");
      }
    }

    const ScaleLaw& law = model.laws[g];
    if (law.is_degenerate() || config.fix_theta) continue;
    const HyperBounds bounds = config.theta_bounds.value_or(law.bounds(p));
    const auto best = boost::math::tools::brent_find_minima(
        [&](double v) { return -theta_value(law, v, s); }, bounds.lower, bounds.upper, kThetaBits);
    if (-best.second > theta_objective(law, s)) out.model.laws[g] = law.with_param(best.first);
  }
  return out;
}

double observed_loglik(const IncompleteData& data, const MixtureModel& model) {
  if (data.dim() != model.dim()) throw Error(Errc::DimensionMismatch, "data and model dimensions differ");
  const PatternCache cache(model, data.patterns);
  double total = 0.0;
  std::vector<double> terms(model.size());
  for (int i = 0; i < data.rows(); ++i) {
    const auto geometries = cache.for_pattern(data.pattern_of_row[i]);
    const Vector x_o = gather(data.row(i), data.pattern(i).observed);
    for (int g = 0; g < model.size(); ++g) {
      const SkewArgs args = observed_args(geometries[g], x_o).args;
      const ScaleLaw& law = model.laws[g];
      const bool closed = law.kind() == LawKind::Degenerate || law.kind() == LawKind::GammaInverse;
      terms[g] = std::log(model.weights[g]) +
                 (closed ? smsn_log_kernel(args, law) : smsn_log_kernel_quadrature(args, law));
    }
    total += log_sum_exp(terms);
  }
  return total;
}

AitkenResult aitken_check(double l0, double l1, double l2, double eps) {
  AitkenResult out;
  const double step = l1 - l0;
  if (std::abs(step) < 1e-14) {
    out.l_inf = l2;
    out.converged = std::abs(l2 - l1) < eps;
    return out;
  }
  out.acceleration = (l2 - l1) / step;
  if (out.acceleration >= 1.0) {
    out.l_inf = l2;
    out.converged = std::abs(l2 - l1) < eps;
    return out;
  }
  out.l_inf = l1 + (l2 - l1) / (1.0 - out.acceleration);
  const double gap = out.l_inf - l2;
  out.converged = gap >= 0.0 && gap < eps;
  return out;
}

double bic(double loglik, int n_params, int n_rows) {
  return 2.0 * loglik - n_params * std::log(static_cast<double>(n_rows));
}

int free_parameter_count(int n_components, int p, LawKind family) {
  const int theta = family == LawKind::Degenerate ? 0 : 1;
  return (n_components - 1) + n_components * (2 * p + p * (p + 1) / 2 + theta);
}

KMeansResult kmeans(const Matrix& points, int k, int restarts, std::mt19937_64& rng) {
  const int n = static_cast<int>(points.rows());
  const int p = static_cast<int>(points.cols());
  if (k < 1 || n < k) throw Error(Errc::DegenerateInit, "fewer rows than clusters");
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMajor flat = points;
  const std::span<const double> pts(flat.data(), static_cast<std::size_t>(flat.size()));

  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  std::vector<int> labels(n);
  std::vector<double> dist2(n);
  for (int r = 0; r < restarts; ++r) {
    // k-means++ seeding
    RowMajor centers(k, p);
    centers.row(0) = flat.row(std::uniform_int_distribution<int>(0, n - 1)(rng));
    for (int c = 1; c < k; ++c) {
      kernels::nearest_centers(pts, {centers.data(), static_cast<std::size_t>(c * p)}, p, labels, dist2);
      const double total = std::accumulate(dist2.begin(), dist2.end(), 0.0);
      int pick = std::uniform_int_distribution<int>(0, n - 1)(rng);
      if (total > 0.0) pick = std::discrete_distribution<int>(dist2.begin(), dist2.end())(rng);
      centers.row(c) = flat.row(pick);
    }

    std::vector<int> previous;
    for (int it = 0; it < kLloydIterations; ++it) {
      kernels::nearest_centers(pts, {centers.data(), static_cast<std::size_t>(centers.size())}, p, labels, dist2);
      if (labels == previous) break;
      previous = labels;
      RowMajor sums = RowMajor::Zero(k, p);
      std::vector<int> counts(k, 0);
      for (int i = 0; i < n; ++i) {
        sums.row(labels[i]) += flat.row(i);
        ++counts[labels[i]];
      }
      for (int c = 0; c < k; ++c)
        if (counts[c] > 0) centers.row(c) = sums.row(c) / counts[c];
    }
    kernels::nearest_centers(pts, {centers.data(), static_cast<std::size_t>(centers.size())}, p, labels, dist2);
    const double inertia = std::accumulate(dist2.begin(), dist2.end(), 0.0);
    if (inertia < best.inertia) {
      best.inertia = inertia;
      best.centers = centers;
      best.labels = labels;
    }
  }
  return best;
}

Matrix mean_impute(const IncompleteData& data) {
  Matrix out = data.values;
  for (int j = 0; j < data.dim(); ++j) {
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i < data.rows(); ++i)
      if (!std::isnan(out(i, j))) {
        sum += out(i, j);
        ++count;
      }
    const double fill = count > 0 ? sum / count : 0.0;
    for (int i = 0; i < data.rows(); ++i)
      if (std::isnan(out(i, j))) out(i, j) = fill;
  }
  return out;
}

MixtureModel model_from_partition(const Matrix& completed, std::span<const int> labels, int n_components,
                                  const ScaleLaw& law, SkewInit skew_init, double ridge) {
  const int n = static_cast<int>(completed.rows());
  const int p = static_cast<int>(completed.cols());
  MixtureModel model;
  for (int g = 0; g < n_components; ++g) {
    std::vector<int> members;
    for (int i = 0; i < n; ++i)
      if (labels[i] == g) members.push_back(i);
    if (static_cast<int>(members.size()) < p + 1)
      throw Error(Errc::DegenerateInit, "cluster " + std::to_string(g) + " has fewer than p + 1 rows");
    Matrix rows(members.size(), p);
    for (std::size_t r = 0; r < members.size(); ++r) rows.row(r) = completed.row(members[r]);
    const Vector mean = rows.colwise().mean().transpose();
    const Matrix centered = rows.rowwise() - mean.transpose();
    Matrix cov = symmetrize(centered.transpose() * centered / static_cast<double>(members.size()));
    cov.diagonal().array() += ridge * std::max(cov.trace() / p, 1e-300);
    ComponentParams c{mean, cov, skew_init == SkewInit::Moments ? moment_skewness(rows) : Vector::Zero(p), 0.0};
    model.components.push_back(std::move(c));
    model.laws.push_back(law);
    model.weights.push_back(static_cast<double>(members.size()) / n);
  }
  return model;
}

InitResult initialize(const IncompleteData& data, const FitConfig& config) {
  config.validate();
  const int p = data.dim();
  InitResult out;
  if (config.init == InitStrategy::Given) {
    out.model = *config.initial_model;
    if (out.model.dim() != p) throw Error(Errc::DimensionMismatch, "initial model dimension mismatch");
    out.model.validate();
    return out;
  }
  const ScaleLaw law = ScaleLaw::default_for(config.family, p);
  const SkewInit skew_init = config.fix_skewness ? SkewInit::Zero : config.skew_init;
  const Matrix completed = mean_impute(data);
  std::mt19937_64 rng(config.seed);
  const int k = config.n_components;

  if (config.init == InitStrategy::KMeans) {
    try {
      const KMeansResult km = kmeans(completed, k, config.kmeans_restarts, rng);
      if (partition_is_usable(km.labels, k, p)) {
        out.labels = km.labels;
        out.model = model_from_partition(completed, out.labels, k, law, skew_init, config.ridge);
        return out;
      }
      out.warnings.push_back("k-means left a cluster with fewer than p + 1 rows; using a random partition");
    } catch (const Error& e) {
      if (e.code() != Errc::DegenerateInit) throw;
      out.warnings.push_back(std::string("k-means failed (") + e.what() + "); using a random partition");
    }
  }
  if (data.rows() < k * (p + 1)) throw Error(Errc::DegenerateInit, "too few rows for G components of dimension p");
  out.labels = random_partition(data.rows(), k, rng);
  out.model = model_from_partition(completed, out.labels, k, law, skew_init, config.ridge);
  return out;
}

std::vector<int> hard_labels(const Matrix& responsibilities) {
  std::vector<int> labels(responsibilities.rows());
  for (Eigen::Index i = 0; i < responsibilities.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index g = 1; g < responsibilities.cols(); ++g)
      if (responsibilities(i, g) > responsibilities(i, best)) best = g;
    labels[i] = static_cast<int>(best);
  }
  return labels;
}

Matrix impute_missing(const IncompleteData& data, const MixtureModel& model, double quad_tol) {
  QuadratureOptions quad;
  quad.rel_tol = quad_tol;
  quad.closed_form_skew_t = true;
  Matrix out = data.values;
  const PatternCache cache(model, data.patterns);
  for (int i = 0; i < data.rows(); ++i) {
    const MissingPattern& pattern = data.pattern(i);
    if (pattern.is_complete()) continue;
    const Vector x = data.row(i);
    const EStepRow row = estep_row(model, cache.for_pattern(data.pattern_of_row[i]), x, quad);
    out.row(i) = impute_row(row, pattern, x).transpose();
  }
  return out;
}

FitReport fit(const IncompleteData& data, const FitConfig& config) {
  InitResult init = initialize(data, config);
  FitReport report;
  report.warnings = std::move(init.warnings);
  MixtureModel model = std::move(init.model);

  EStepOptions options;
  options.quad.rel_tol = config.quad_tol;
  options.quad.closed_form_skew_t = true;
  options.log_moment = config.log_moment;
  options.threads = config.threads;

  EStepResult es;
  for (int it = 0;; ++it) {
    es = e_step(data, model, options);
    report.loglik_trace.push_back(es.loglik);
    if (config.observer) config.observer({it, es.loglik, &model});
    const auto& tr = report.loglik_trace;
    const std::size_t t = tr.size();
    if (t >= 3 && aitken_check(tr[t - 3], tr[t - 2], tr[t - 1], config.tolerance).converged) {
      report.converged = true;
      break;
    }
    if (it == config.max_iter) break;
    CmStepResult cm = cm_step(model, es.stats, data.rows(), config);
    for (std::string& w : cm.warnings) report.warnings.push_back("iteration " + std::to_string(it + 1) + ": " + w);
    model = std::move(cm.model);
    report.n_iter = it + 1;
  }

  report.responsibilities = std::move(es.responsibilities);
  report.labels = hard_labels(report.responsibilities);
  report.underflow_rows = es.underflow_rows;
  report.imputed = impute_missing(data, model, config.quad_tol);
  report.n_params = free_parameter_count(model.size(), model.dim(), model.laws.front().kind());
  report.bic = bic(report.loglik_trace.back(), report.n_params, data.rows());
  report.model = std::move(model);
  return report;
}

}  // namespace smsn
