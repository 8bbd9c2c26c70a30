#pragma once

#include <span>
#include <vector>

#include "smsnmix/family.hpp"

namespace smsn {

/// Observed and missing coordinate indices of one row (both ascending).
struct MissingPattern {
  int dim = 0;
  std::vector<int> observed;
  std::vector<int> missing;

  /// NaN cells are missing.
  static MissingPattern of_row(const Vector& x);
  static MissingPattern complete(int p);
  static MissingPattern with_missing(int p, std::vector<int> missing);

  bool is_complete() const noexcept { return missing.empty(); }
  int n_observed() const noexcept { return static_cast<int>(observed.size()); }
  int n_missing() const noexcept { return static_cast<int>(missing.size()); }
  /// Throws unless the index sets partition {0..dim-1} and observed is non-empty.
  void validate() const;

  friend bool operator==(const MissingPattern& a, const MissingPattern& b) {
    return a.dim == b.dim && a.missing == b.missing;
  }
  friend bool operator<(const MissingPattern& a, const MissingPattern& b) {
    return a.dim != b.dim ? a.dim < b.dim : a.missing < b.missing;
  }
};

Vector gather(const Vector& v, std::span<const int> idx);
Matrix gather(const Matrix& m, std::span<const int> rows, std::span<const int> cols);
/// Writes `part` into the `idx` entries of `full`.
void scatter(const Vector& part, std::span<const int> idx, Vector& full);

struct PartitionBlocks {
  Vector mu_o, mu_m;
  Vector lambda_o, lambda_m;
  Vector skew_o, skew_m;
  Matrix sigma_oo, sigma_om, sigma_mo, sigma_mm;
  Matrix omega_oo, omega_om, omega_mo, omega_mm;
};

PartitionBlocks partition(const ComponentParams& params, const MissingPattern& pattern);
/// Inverse of partition for mu, sigma and lambda.
ComponentParams reassemble(const PartitionBlocks& blocks, const MissingPattern& pattern);

/// Everything about conditioning a component on a missingness pattern that
/// does not depend on the observed values.  Built once per (component,
/// pattern) per iteration.  Only sigma_oo is factorized; the omega-side
/// quantities follow from mu_c = m_c + mu_t psi_c and skew_c = sigma_t psi_c.
struct ConditionalGeometry {
  MissingPattern pattern;
  Vector mu_o, mu_m;
  Eigen::LLT<Matrix> sigma_oo;
  double log_det_oo = 0.0;
  Vector sigma_oo_inv_skew;  // sigma_oo^{-1} skew_o
  double skew_q = 0.0;       // skew_o' sigma_oo^{-1} skew_o
  double skew_scale = 1.0;   // sqrt(1 - skew_q)
  Matrix sigma_gain;         // sigma_mo sigma_oo^{-1}
  Matrix sigma_c;
  Vector skew_resid;         // skew_m - sigma_gain skew_o
  Vector skew_c;             // skew_resid / skew_scale
  Vector psi_c;              // skew_resid / sigma2_t
  Matrix omega_c;            // sigma_c - skew_c skew_c'
  double sigma2_t = 1.0;     // 1 - skew_q
};

/// Throws Errc::Singular when sigma_oo has condition number above 1e12.
ConditionalGeometry condition_on(const ComponentParams& params, const ComponentGeometry& geo,
                                 const MissingPattern& pattern);

/// Skew-normal law of the missing block given x_o and kappa.  The printed
/// threshold lambda0_c is stored already scaled by kappa^{-1/2} and sigma_c
/// already scaled by kappa, so sn_logpdf({mu_c, sigma_c, lambda_c,
/// lambda0_c}) is the conditional density.  delta0_c and a_o are computed
/// independently and must agree.
struct ConditionalSN {
  Vector mu_c;
  Matrix sigma_c;
  Vector lambda_c;
  double lambda0_c = 0.0;
  double delta0_c = 0.0;  // lambda0_c / sqrt(1 + lambda_c'lambda_c), unscaled
  Vector lambda_dot_o;
  double a_o = 0.0;       // lambda_dot_o' sigma_oo^{-1/2} (x_o - mu_o)
  Vector skew_c;
};

ConditionalSN conditional_sn(const ComponentParams& params, double kappa, const MissingPattern& pattern,
                             const Vector& x_o);

struct ConditionalNormal {
  Vector m_c;
  Vector psi_c;
  Matrix omega_c;
};

ConditionalNormal conditional_normal(const ComponentParams& params, const MissingPattern& pattern,
                                     const Vector& x_o);

/// T | x_o, u ~ TN(mu_t, kappa sigma2_t) on (0, inf), from the omega blocks;
/// a_o = mu_t / sigma_t is checked against the sigma-side skew argument.
struct TPosterior {
  double mu_t = 0.0;
  double sigma2_t = 1.0;
  double a_o = 0.0;
};

TPosterior t_posterior(const ComponentParams& params, const MissingPattern& pattern, const Vector& x_o);

/// Observed-block summary of x_o against a conditional geometry.
struct ObservedArgs {
  Vector resid;       // x_o - mu_o
  SkewArgs args;      // maha against sigma_oo, skew_arg = A_o
};

ObservedArgs observed_args(const ConditionalGeometry& cg, const Vector& x_o);

enum class LogMoment { Taylor, Exact };

/// Posterior moments of the scale variable given x_o within one component.
struct ScaleMoments {
  double log_density = 0.0;  // log f(x_o) of the observed marginal
  double k_inv = 1.0;        // E[kappa^{-1}]
  double k_inv2 = 1.0;       // E[kappa^{-2}]
  double kappa = 1.0;        // E[kappa]
  double xi = 0.0;           // E[kappa^{-1/2} W(kappa^{-1/2} A_o)]
  double xi_pos = 0.0;       // E[kappa^{1/2} W(kappa^{-1/2} A_o)]
  double log_k_inv_taylor = 0.0;
  double log_k_inv_exact = 0.0;
  double k_inv_t = 0.0;      // E[kappa^{-1} T]
  double k_inv_t2 = 0.0;     // E[kappa^{-1} T^2]

  double log_k_inv(LogMoment mode) const noexcept {
    return mode == LogMoment::Taylor ? log_k_inv_taylor : log_k_inv_exact;
  }
};

struct QuadratureOptions {
  double rel_tol = 1e-10;
  /// Skew-t moments from Student-t cdf ratios instead of quadrature; the
  /// exact log moment uses a finite difference in the shape parameter.
  bool closed_form_skew_t = false;
};

ScaleMoments posterior_scale_moments(const ConditionalGeometry& cg, const ScaleLaw& law,
                                     const ObservedArgs& obs, const QuadratureOptions& quad = {});
ScaleMoments posterior_scale_moments(const ComponentParams& params, const ScaleLaw& law,
                                     const MissingPattern& pattern, const Vector& x_o);

/// Hat quantities of one (row, component), already multiplied by z.
struct HatQuantities {
  double z = 0.0;
  double zk = 0.0;
  double zkt = 0.0;
  double zkt2 = 0.0;
  Vector zkx;
  Vector zktx;
  Matrix zkxx;
  // the same sums for the residual X - mu of the component location,
  // free of cancellation when kappa^{-1} is large
  Vector zkr;
  Vector zktr;
  Matrix zkrr;
  ScaleMoments moments;
  Vector cond_mean;  // E[X_m | x_o, component], for imputation
};

struct EStepRow {
  std::vector<HatQuantities> components;
  double log_marginal = 0.0;
  bool underflow = false;
};

/// Responsibilities from per-component log(pi_g f_g(x_o)); uniform with
/// `underflow` set when every term is -inf.
std::vector<double> normalize_log_weights(std::span<const double> log_terms, double& log_total,
                                          bool& underflow);

/// E-step for one row against per-component conditional geometries for its
/// pattern.  `x` is the full row; missing cells are ignored.
EStepRow estep_row(const MixtureModel& model, std::span<const ConditionalGeometry> geometries,
                   const Vector& x, const QuadratureOptions& quad = {});
EStepRow estep_row(const MixtureModel& model, const MissingPattern& pattern, const Vector& x);

std::vector<double> responsibilities(const MixtureModel& model, const MissingPattern& pattern,
                                     const Vector& x_o);

/// Missing cells of x replaced by sum_g z_g E[X_m | x_o, component g].
Vector impute_row(const EStepRow& row, const MissingPattern& pattern, const Vector& x);
Vector impute_row(const MixtureModel& model, const MissingPattern& pattern, const Vector& x);

/// Geometries for every (component, pattern) of a model snapshot.
class PatternCache {
 public:
  PatternCache(const MixtureModel& model, std::span<const MissingPattern> patterns);

  std::span<const ConditionalGeometry> for_pattern(int pattern_id) const {
    return {geometries_.data() + static_cast<std::size_t>(pattern_id) * n_components_, n_components_};
  }

 private:
  std::size_t n_components_;
  std::vector<ConditionalGeometry> geometries_;
};

}  // namespace smsn
