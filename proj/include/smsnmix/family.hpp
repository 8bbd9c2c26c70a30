#pragma once

#include <random>
#include <span>
#include <vector>

#include "smsnmix/numkit.hpp"
#include "smsnmix/scale_law.hpp"

namespace smsn {

/// Location, scale, skewness and threshold of one skew-normal component.
struct ComponentParams {
  Vector mu;
  Matrix sigma;
  Vector lambda;
  double lambda0 = 0.0;

  int dim() const noexcept { return static_cast<int>(mu.size()); }
};

/// Quantities derived from ComponentParams that every density and E-step
/// evaluation needs.  `skew_unit` is lambda / sqrt(1 + lambda'lambda),
/// `skew` is sigma^{1/2} skew_unit and `omega` is sigma - skew skew'.
struct ComponentGeometry {
  SymmetricRoot sigma_root;
  Matrix sigma_inv;
  Vector skew_unit;
  Vector skew;
  Matrix omega;
};

/// Validates dimensions and positive definiteness, then derives the geometry.
ComponentGeometry derive_geometry(const ComponentParams& params);

/// Inverse map used by the CM-step: sigma = omega + skew skew' and
/// lambda = sigma^{-1/2} skew / sqrt(1 - skew' sigma^{-1} skew).
ComponentParams params_from_skew(const Vector& mu, const Matrix& omega, const Vector& skew);

struct MixtureModel {
  std::vector<ComponentParams> components;
  std::vector<ScaleLaw> laws;
  std::vector<double> weights;

  int size() const noexcept { return static_cast<int>(components.size()); }
  int dim() const noexcept { return components.empty() ? 0 : components.front().dim(); }
  /// Throws unless weights are positive and sum to one, every component is
  /// valid, all share p and the law kind, and each law respects its bounds.
  void validate() const;
};

/// Summary of a residual r = x - mu against a scale matrix S and skewness
/// direction: maha = r'S^{-1}r, skew_arg = the argument of the skewing cdf
/// (lambda'S^{-1/2}r for a full vector), log_det = log|S|.
struct SkewArgs {
  double maha = 0.0;
  double skew_arg = 0.0;
  double log_det = 0.0;
  int dim = 1;
};

SkewArgs skew_args(const Vector& x, const ComponentParams& params, const ComponentGeometry& geo);

/// log [2 phi_p(r; 0, kappa S) Phi(kappa^{-1/2} skew_arg)].
double log_conditional_density(const SkewArgs& args, double kappa);

/// log int 2 phi_p(r; 0, kappa(u) S) Phi(kappa(u)^{-1/2} skew_arg) dH(u).
/// Closed forms for the skew-normal, skew-t and variance-gamma laws;
/// quadrature for the slash law.
double smsn_log_kernel(const SkewArgs& args, const ScaleLaw& law);
/// The same integral evaluated by quadrature for every law.
double smsn_log_kernel_quadrature(const SkewArgs& args, const ScaleLaw& law);

/// log P(Y <= a) where Y = sqrt(V) N(0,1) and V ~ GIG(order, chi, psi).
double log_gh_cdf(double a, double order, double chi, double psi);

double sn_logpdf(const Vector& x, const ComponentParams& params);
double smsn_logpdf(const Vector& x, const ComponentParams& params, const ScaleLaw& law);
double smsn_logpdf(const Vector& x, const ComponentParams& params, const ComponentGeometry& geo,
                   const ScaleLaw& law);

/// E[kappa^{1/2}] and E[kappa]; throws MomentUndefined when infinite.
struct ScaleFactors {
  double root_mean;
  double mean;
};
ScaleFactors scale_factors(const ScaleLaw& law);

struct Moments {
  Vector mean;
  Matrix cov;
};
Moments smsn_moments(const ComponentParams& params, const ScaleLaw& law);

/// n draws (rows) through the stochastic representation
/// X = mu + T skew + sqrt(kappa) sigma^{1/2} (I - d d')^{1/2} T1.
Matrix sample_smsn(const ComponentParams& params, const ScaleLaw& law, int n, std::mt19937_64& rng);

struct MixtureSample {
  Matrix data;
  std::vector<int> labels;
};
MixtureSample sample_mixture(const MixtureModel& model, int n, std::mt19937_64& rng);

/// Variance formula for a normal truncated to (0, inf).  `Published` is
/// sigma^2 (1 - W^2); `Classical` is sigma^2 (1 - (mu/sigma) W - W^2).
enum class TruncVariance { Published, Classical };

struct TruncMoments {
  double mean;
  double variance;
};
TruncMoments truncnorm_moments(double mu, double sigma2,
                               TruncVariance variant = TruncVariance::Published);

double mixture_logpdf(const Vector& x, const MixtureModel& model);

/// log sum exp over a span of values; -inf for an empty or all -inf input.
double log_sum_exp(std::span<const double> values);

}  // namespace smsn
