#include "smsnmix/family.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace smsn {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kInf = std::numeric_limits<double>::infinity();

void check_dims(const ComponentParams& params) {
  const Eigen::Index p = params.mu.size();
  if (p == 0) throw Error(Errc::DimensionMismatch, "component has zero dimension");
  if (params.sigma.rows() != p || params.sigma.cols() != p || params.lambda.size() != p)
    throw Error(Errc::DimensionMismatch, "mu, sigma and lambda dimensions disagree");
  if (!params.mu.allFinite() || !params.sigma.allFinite() || !params.lambda.allFinite() ||
      !std::isfinite(params.lambda0))
    throw Error(Errc::NonFinite, "component parameters contain non-finite values");
}

double log_sn_tail_normalizer(const ComponentParams& params) {
  if (params.lambda0 == 0.0) return std::numbers::ln2;
  const double delta0 = params.lambda0 / std::sqrt(1.0 + params.lambda.squaredNorm());
  return -log_std_normal_cdf(delta0);
}

double svg_log_kernel(const SkewArgs& args, double eta) {
  const int p = args.dim;
  const double order = eta - 0.5 * p;
  const double base = -0.5 * p * kLog2Pi - 0.5 * args.log_det + eta * std::log(eta) - std::lgamma(eta);
  if (args.maha < 1e-280) {
    // limit d -> 0 of 2 (d / 2 eta)^{order/2} K_order(sqrt(2 eta d)), skew argument is zero
    return base + std::lgamma(order) - order * std::log(eta);
  }
  const double log_vg = base + std::numbers::ln2 + 0.5 * order * std::log(args.maha / (2.0 * eta)) +
                        log_bessel_k(order, std::sqrt(2.0 * eta * args.maha));
  return std::numbers::ln2 + log_vg + log_gh_cdf(args.skew_arg, order, args.maha, 2.0 * eta);
}

}  // namespace

ComponentGeometry derive_geometry(const ComponentParams& params) {
  check_dims(params);
  ComponentGeometry geo;
  geo.sigma_root = symmetric_root(params.sigma);
  geo.sigma_inv = geo.sigma_root.inv_root * geo.sigma_root.inv_root;
  geo.sigma_inv = 0.5 * (geo.sigma_inv + geo.sigma_inv.transpose());
  geo.skew_unit = params.lambda / std::sqrt(1.0 + params.lambda.squaredNorm());
  geo.skew = geo.sigma_root.root * geo.skew_unit;
  geo.omega = params.sigma - geo.skew * geo.skew.transpose();
  geo.omega = 0.5 * (geo.omega + geo.omega.transpose());
  return geo;
}

ComponentParams params_from_skew(const Vector& mu, const Matrix& omega, const Vector& skew) {
  const Eigen::LLT<Matrix> llt(omega);
  if (llt.info() != Eigen::Success) throw Error(Errc::NotPSD, "omega is not positive definite");
  const double q = skew.dot(llt.solve(skew));
  ComponentParams out;
  out.mu = mu;
  out.sigma = omega + skew * skew.transpose();
  out.sigma = 0.5 * (out.sigma + out.sigma.transpose());
  const SymmetricRoot root = symmetric_root(out.sigma);
  out.lambda = root.inv_root * skew * std::sqrt(1.0 + q);
  out.lambda0 = 0.0;
  return out;
}

void MixtureModel::validate() const {
  if (components.empty()) throw Error(Errc::InvalidArgument, "mixture has no components");
  if (laws.size() != components.size() || weights.size() != components.size())
    throw Error(Errc::DimensionMismatch, "components, laws and weights differ in length");
  const int p = dim();
  double total = 0.0;
  for (std::size_t g = 0; g < components.size(); ++g) {
    if (!(weights[g] > 0.0)) throw Error(Errc::Domain, "mixture weights must be positive");
    total += weights[g];
    if (components[g].dim() != p) throw Error(Errc::DimensionMismatch, "components differ in dimension");
    if (laws[g].kind() != laws.front().kind())
      throw Error(Errc::InvalidArgument, "components must share the scale law family");
    derive_geometry(components[g]);
    laws[g].validate(p);
  }
  if (std::fabs(total - 1.0) > 1e-12) throw Error(Errc::Domain, "mixture weights must sum to one");
}

SkewArgs skew_args(const Vector& x, const ComponentParams& params, const ComponentGeometry& geo) {
  if (x.size() != params.mu.size()) throw Error(Errc::DimensionMismatch, "observation dimension mismatch");
  const Vector r = x - params.mu;
  const Vector white = geo.sigma_root.inv_root * r;
  SkewArgs out;
  out.maha = white.squaredNorm();
  out.skew_arg = params.lambda.dot(white);
  out.log_det = geo.sigma_root.log_det;
  out.dim = params.dim();
  return out;
}

double log_conditional_density(const SkewArgs& args, double kappa) {
  return std::numbers::ln2 - 0.5 * args.dim * (kLog2Pi + std::log(kappa)) - 0.5 * args.log_det -
         0.5 * args.maha / kappa + log_std_normal_cdf(args.skew_arg / std::sqrt(kappa));
}

double smsn_log_kernel_quadrature(const SkewArgs& args, const ScaleLaw& law) {
  const ScaleRule rule = build_scale_rule(
      law, [&](double u) { return log_conditional_density(args, law.kappa(u)); });
  return rule.log_mass;
}

double smsn_log_kernel(const SkewArgs& args, const ScaleLaw& law) {
  switch (law.kind()) {
    case LawKind::Degenerate: return log_conditional_density(args, 1.0);
    case LawKind::GammaInverse: {
      const double nu = law.param();
      const double p = args.dim;
      const double log_t = std::lgamma(0.5 * (nu + p)) - std::lgamma(0.5 * nu) -
                           0.5 * p * std::log(nu * std::numbers::pi) - 0.5 * args.log_det -
                           0.5 * (nu + p) * std::log1p(args.maha / nu);
      const double arg = args.skew_arg * std::sqrt((nu + p) / (args.maha + nu));
      return std::numbers::ln2 + log_t + log_student_t_cdf(arg, nu + p);
    }
    case LawKind::BetaInverse: return smsn_log_kernel_quadrature(args, law);
    case LawKind::Gamma: return svg_log_kernel(args, law.param());
  }
  return -kInf;
}

double log_gh_cdf(double a, double order, double chi, double psi) {
  if (!(chi > 0.0) || !(psi > 0.0)) throw Error(Errc::Domain, "GH cdf requires chi, psi > 0");
  if (a == 0.0) return -std::numbers::ln2;
  const double log_norm = 0.5 * order * std::log(psi / chi) - 0.5 * kLog2Pi -
                          log_bessel_k(order, std::sqrt(chi * psi));
  const double shifted = order - 0.5;
  auto log_density = [&](double y) {
    const double s = chi + y * y;
    return log_norm + 0.5 * shifted * std::log(s / psi) + log_bessel_k(shifted, std::sqrt(psi * s));
  };
  const double start = std::fabs(a);
  const double log_tail = integrate_log(log_density, start, start + 1e8, start).log_mass;
  if (a < 0.0) return log_tail;
  return std::log1p(-std::exp(log_tail));
}

double sn_logpdf(const Vector& x, const ComponentParams& params) {
  const ComponentGeometry geo = derive_geometry(params);
  const SkewArgs args = skew_args(x, params, geo);
  return log_sn_tail_normalizer(params) - 0.5 * args.dim * kLog2Pi - 0.5 * args.log_det -
         0.5 * args.maha + log_std_normal_cdf(params.lambda0 + args.skew_arg);
}

double smsn_logpdf(const Vector& x, const ComponentParams& params, const ScaleLaw& law) {
  if (law.is_degenerate()) return sn_logpdf(x, params);
  return smsn_logpdf(x, params, derive_geometry(params), law);
}

double smsn_logpdf(const Vector& x, const ComponentParams& params, const ComponentGeometry& geo,
                   const ScaleLaw& law) {
  if (params.lambda0 != 0.0) {
    if (!law.is_degenerate())
      throw Error(Errc::InvalidArgument, "a nonzero threshold is only supported for the skew-normal");
    return sn_logpdf(x, params);
  }
  return smsn_log_kernel(skew_args(x, params, geo), law);
}

ScaleFactors scale_factors(const ScaleLaw& law) {
  const double a = law.param();
  switch (law.kind()) {
    case LawKind::Degenerate: return {1.0, 1.0};
    case LawKind::GammaInverse:
      if (!(a > 1.0)) throw Error(Errc::MomentUndefined, "skew-t mean requires nu > 1");
      if (!(a > 2.0)) throw Error(Errc::MomentUndefined, "skew-t covariance requires nu > 2");
      return {std::sqrt(0.5 * a) * std::exp(std::lgamma(0.5 * (a - 1.0)) - std::lgamma(0.5 * a)),
              a / (a - 2.0)};
    case LawKind::BetaInverse:
      if (!(a > 0.5)) throw Error(Errc::MomentUndefined, "skew-slash mean requires alpha > 1/2");
      if (!(a > 1.0)) throw Error(Errc::MomentUndefined, "skew-slash covariance requires alpha > 1");
      return {2.0 * a / (2.0 * a - 1.0), a / (a - 1.0)};
    case LawKind::Gamma:
      if (!(a > 0.0)) throw Error(Errc::Domain, "variance-gamma shape must be positive");
      return {std::exp(std::lgamma(a + 0.5) - std::lgamma(a)) / std::sqrt(a), 1.0};
  }
  return {1.0, 1.0};
}

Moments smsn_moments(const ComponentParams& params, const ScaleLaw& law) {
  const ComponentGeometry geo = derive_geometry(params);
  const ScaleFactors f = scale_factors(law);
  const double b = std::sqrt(2.0 / std::numbers::pi) * f.root_mean;
  Moments out;
  out.mean = params.mu + b * geo.skew;
  out.cov = f.mean * params.sigma - b * b * geo.skew * geo.skew.transpose();
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

namespace {

double draw_kappa(const ScaleLaw& law, std::mt19937_64& rng) {
  const double a = law.param();
  switch (law.kind()) {
    case LawKind::Degenerate: return 1.0;
    case LawKind::GammaInverse: return 1.0 / std::gamma_distribution<double>(0.5 * a, 2.0 / a)(rng);
    case LawKind::BetaInverse: {
      const double v = 1.0 - std::generate_canonical<double, 53>(rng);
      return 1.0 / std::pow(v, 1.0 / a);
    }
    case LawKind::Gamma: return std::gamma_distribution<double>(a, 1.0 / a)(rng);
  }
  return 1.0;
}

struct DrawPlan {
  Vector mu;
  Vector skew;
  Matrix residual_root;
};

DrawPlan plan_draws(const ComponentParams& params) {
  if (params.lambda0 != 0.0) throw Error(Errc::InvalidArgument, "sampling requires a zero threshold");
  const ComponentGeometry geo = derive_geometry(params);
  const int p = params.dim();
  const Matrix centre = Matrix::Identity(p, p) - geo.skew_unit * geo.skew_unit.transpose();
  return {params.mu, geo.skew, geo.sigma_root.root * psd_sqrt(0.5 * (centre + centre.transpose()))};
}

void draw_into(const DrawPlan& plan, const ScaleLaw& law, std::mt19937_64& rng,
               std::normal_distribution<double>& normal, Eigen::Ref<Vector> out) {
  const double kappa = draw_kappa(law, rng);
  const double root = std::sqrt(kappa);
  const double t = root * std::fabs(normal(rng));
  Vector noise(plan.mu.size());
  for (Eigen::Index j = 0; j < noise.size(); ++j) noise[j] = normal(rng);
  out = plan.mu + t * plan.skew + root * (plan.residual_root * noise);
}

}  // namespace

Matrix sample_smsn(const ComponentParams& params, const ScaleLaw& law, int n, std::mt19937_64& rng) {
  if (n < 1) throw Error(Errc::InvalidArgument, "sample size must be positive");
  const DrawPlan plan = plan_draws(params);
  std::normal_distribution<double> normal;
  Matrix out(n, params.dim());
  Vector row(params.dim());
  for (int i = 0; i < n; ++i) {
    draw_into(plan, law, rng, normal, row);
    out.row(i) = row.transpose();
  }
  return out;
}

MixtureSample sample_mixture(const MixtureModel& model, int n, std::mt19937_64& rng) {
  model.validate();
  if (n < 1) throw Error(Errc::InvalidArgument, "sample size must be positive");
  std::vector<DrawPlan> plans;
  for (const ComponentParams& c : model.components) plans.push_back(plan_draws(c));
  std::vector<double> cumulative(model.weights.size());
  double acc = 0.0;
  for (std::size_t g = 0; g < model.weights.size(); ++g) cumulative[g] = acc += model.weights[g];
  cumulative.back() = 1.0;

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal;
  MixtureSample out;
  out.data.resize(n, model.dim());
  out.labels.resize(n);
  Vector row(model.dim());
  for (int i = 0; i < n; ++i) {
    const double v = unif(rng);
    const int g = static_cast<int>(std::upper_bound(cumulative.begin(), cumulative.end(), v) -
                                   cumulative.begin());
    const int label = std::min(g, model.size() - 1);
    draw_into(plans[label], model.laws[label], rng, normal, row);
    out.data.row(i) = row.transpose();
    out.labels[i] = label;
  }
  return out;
}

TruncMoments truncnorm_moments(double mu, double sigma2, TruncVariance variant) {
  if (!(sigma2 > 0.0)) throw Error(Errc::Domain, "truncated normal needs sigma2 > 0");
  const double sigma = std::sqrt(sigma2);
  const double z = mu / sigma;
  const double w = mills_w(z);
  const double shrink = variant == TruncVariance::Published ? w * w : z * w + w * w;
  return {mu + sigma * w, sigma2 * (1.0 - shrink)};
}

double log_sum_exp(std::span<const double> values) {
  double top = -kInf;
  for (double v : values) top = std::max(top, v);
  if (!std::isfinite(top)) return top;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - top);
  return top + std::log(sum);
}

double mixture_logpdf(const Vector& x, const MixtureModel& model) {
  std::vector<double> terms(model.components.size());
  for (std::size_t g = 0; g < terms.size(); ++g)
    terms[g] = std::log(model.weights[g]) + smsn_logpdf(x, model.components[g], model.laws[g]);
  return log_sum_exp(terms);
}

}  // namespace smsn
