#include "smsnmix/conditioning.hpp"

#include <boost/math/special_functions/digamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace smsn {
namespace {

// Floor on 1 - skew_q; the true value is positive whenever omega is.
constexpr double kMinResidualSkew = 1e-300;

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

Eigen::LLT<Matrix> checked_llt(const Matrix& m, const char* what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw Error(Errc::NotPSD, std::string(what) + " is not positive definite");
  return llt;
}

double llt_log_det(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

// Guard for the internal consistency checks of conditional_sn and t_posterior.
constexpr double kIdentityTol = 1e-10;
constexpr double kMaxCondition = 1e12;

void check_identity(double a, double b, const char* what) {
  if (!(std::fabs(a - b) <= kIdentityTol * (1.0 + std::fabs(a))))
    throw Error(Errc::NonFinite, std::string(what) + " identity violated");
}

void check_row(const Vector& x_o, const MissingPattern& pattern) {
  if (x_o.size() != pattern.n_observed())
    throw Error(Errc::DimensionMismatch, "observed block does not match the pattern");
}

}  // namespace

MissingPattern MissingPattern::of_row(const Vector& x) {
  MissingPattern out;
  out.dim = static_cast<int>(x.size());
  for (int j = 0; j < out.dim; ++j) (std::isnan(x[j]) ? out.missing : out.observed).push_back(j);
  return out;
}

MissingPattern MissingPattern::complete(int p) { return with_missing(p, {}); }

MissingPattern MissingPattern::with_missing(int p, std::vector<int> missing) {
  std::sort(missing.begin(), missing.end());
  missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
  MissingPattern out;
  out.dim = p;
  out.missing = std::move(missing);
  for (int j = 0; j < p; ++j)
    if (!std::binary_search(out.missing.begin(), out.missing.end(), j)) out.observed.push_back(j);
  out.validate();
  return out;
}

void MissingPattern::validate() const {
  if (observed.empty()) throw Error(Errc::InvalidArgument, "pattern has no observed coordinate");
  if (static_cast<int>(observed.size() + missing.size()) != dim)
    throw Error(Errc::DimensionMismatch, "pattern indices do not cover the dimension");
  std::vector<int> all(observed);
  all.insert(all.end(), missing.begin(), missing.end());
  std::sort(all.begin(), all.end());
  for (int j = 0; j < dim; ++j)
    if (all[j] != j) throw Error(Errc::InvalidArgument, "pattern indices are not a partition");
}

Vector gather(const Vector& v, std::span<const int> idx) {
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out[k] = v[idx[k]];
  return out;
}

Matrix gather(const Matrix& m, std::span<const int> rows, std::span<const int> cols) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t a = 0; a < rows.size(); ++a)
    for (std::size_t b = 0; b < cols.size(); ++b) out(a, b) = m(rows[a], cols[b]);
  return out;
}

void scatter(const Vector& part, std::span<const int> idx, Vector& full) {
  for (std::size_t k = 0; k < idx.size(); ++k) full[idx[k]] = part[k];
}

PartitionBlocks partition(const ComponentParams& params, const MissingPattern& pattern) {
  if (pattern.dim != params.dim()) throw Error(Errc::DimensionMismatch, "pattern and component differ in dimension");
  const ComponentGeometry geo = derive_geometry(params);
  const auto& o = pattern.observed;
  const auto& m = pattern.missing;
  PartitionBlocks b;
  b.mu_o = gather(params.mu, o);
  b.mu_m = gather(params.mu, m);
  b.lambda_o = gather(params.lambda, o);
  b.lambda_m = gather(params.lambda, m);
  b.skew_o = gather(geo.skew, o);
  b.skew_m = gather(geo.skew, m);
  b.sigma_oo = gather(params.sigma, o, o);
  b.sigma_om = gather(params.sigma, o, m);
  b.sigma_mo = gather(params.sigma, m, o);
  b.sigma_mm = gather(params.sigma, m, m);
  b.omega_oo = gather(geo.omega, o, o);
  b.omega_om = gather(geo.omega, o, m);
  b.omega_mo = gather(geo.omega, m, o);
  b.omega_mm = gather(geo.omega, m, m);
  return b;
}

ComponentParams reassemble(const PartitionBlocks& blocks, const MissingPattern& pattern) {
  const int p = pattern.dim;
  ComponentParams out;
  out.mu.resize(p);
  out.lambda.resize(p);
  out.sigma.resize(p, p);
  scatter(blocks.mu_o, pattern.observed, out.mu);
  scatter(blocks.mu_m, pattern.missing, out.mu);
  scatter(blocks.lambda_o, pattern.observed, out.lambda);
  scatter(blocks.lambda_m, pattern.missing, out.lambda);
  auto place = [&](const Matrix& block, std::span<const int> rows, std::span<const int> cols) {
    for (std::size_t a = 0; a < rows.size(); ++a)
      for (std::size_t b = 0; b < cols.size(); ++b) out.sigma(rows[a], cols[b]) = block(a, b);
  };
  place(blocks.sigma_oo, pattern.observed, pattern.observed);
  place(blocks.sigma_om, pattern.observed, pattern.missing);
  place(blocks.sigma_mo, pattern.missing, pattern.observed);
  place(blocks.sigma_mm, pattern.missing, pattern.missing);
  return out;
}

ConditionalGeometry condition_on(const ComponentParams& params, const ComponentGeometry& geo,
                                 const MissingPattern& pattern) {
  pattern.validate();
  if (pattern.dim != params.dim()) throw Error(Errc::DimensionMismatch, "pattern and component differ in dimension");
  const auto& o = pattern.observed;
  const auto& m = pattern.missing;
  ConditionalGeometry cg;
  cg.pattern = pattern;
  cg.mu_o = gather(params.mu, o);
  cg.mu_m = gather(params.mu, m);
  const Matrix sigma_oo = gather(params.sigma, o, o);
  const Vector eig = Eigen::SelfAdjointEigenSolver<Matrix>(sigma_oo, Eigen::EigenvaluesOnly).eigenvalues();
  if (!(eig[0] > 0.0) || eig[eig.size() - 1] > kMaxCondition * eig[0])
    throw Error(Errc::Singular, "sigma_oo is singular or has condition number above 1e12");
  cg.sigma_oo = checked_llt(sigma_oo, "sigma_oo");
  cg.log_det_oo = llt_log_det(cg.sigma_oo);

  const Vector skew_o = gather(geo.skew, o);
  cg.sigma_oo_inv_skew = cg.sigma_oo.solve(skew_o);
  cg.skew_q = skew_o.dot(cg.sigma_oo_inv_skew);
  cg.sigma2_t = std::max(1.0 - cg.skew_q, kMinResidualSkew);
  cg.skew_scale = std::sqrt(cg.sigma2_t);

  const Matrix sigma_mo = gather(params.sigma, m, o);
  cg.sigma_gain = cg.sigma_oo.solve(sigma_mo.transpose()).transpose();
  cg.sigma_c = symmetrize(gather(params.sigma, m, m) - cg.sigma_gain * sigma_mo.transpose());
  cg.skew_resid = gather(geo.skew, m) - cg.sigma_gain * skew_o;
  cg.skew_c = cg.skew_resid / cg.skew_scale;
  cg.psi_c = cg.skew_resid / cg.sigma2_t;
  cg.omega_c = symmetrize(cg.sigma_c - cg.skew_c * cg.skew_c.transpose());
  return cg;
}

ObservedArgs observed_args(const ConditionalGeometry& cg, const Vector& x_o) {
  check_row(x_o, cg.pattern);
  ObservedArgs out;
  out.resid = x_o - cg.mu_o;
  out.args.maha = out.resid.dot(cg.sigma_oo.solve(out.resid));
  out.args.skew_arg = cg.sigma_oo_inv_skew.dot(out.resid) / cg.skew_scale;
  out.args.log_det = cg.log_det_oo;
  out.args.dim = cg.pattern.n_observed();
  return out;
}

ConditionalSN conditional_sn(const ComponentParams& params, double kappa, const MissingPattern& pattern,
                             const Vector& x_o) {
  if (!(kappa > 0.0)) throw Error(Errc::Domain, "kappa must be positive");
  const ComponentGeometry geo = derive_geometry(params);
  const ConditionalGeometry cg = condition_on(params, geo, pattern);
  const ObservedArgs obs = observed_args(cg, x_o);

  // sqrt(1 - skew' sigma^{-1} skew) over the full vector is 1 / sqrt(1 + lambda'lambda)
  const double full_scale = 1.0 / std::sqrt(1.0 + params.lambda.squaredNorm());
  const double skew_dot = cg.sigma_oo_inv_skew.dot(obs.resid);

  ConditionalSN out;
  out.mu_c = cg.mu_m + cg.sigma_gain * obs.resid;
  out.sigma_c = kappa * cg.sigma_c;
  out.skew_c = cg.skew_c;
  if (pattern.n_missing() > 0) {
    const SymmetricRoot root = symmetric_root(cg.sigma_c);
    out.lambda_c = root.inv_root * cg.skew_resid / full_scale;
  } else {
    out.lambda_c = Vector(0);
  }
  const double lambda0 = skew_dot / full_scale;
  out.delta0_c = lambda0 / std::sqrt(1.0 + out.lambda_c.squaredNorm());
  out.lambda0_c = lambda0 / std::sqrt(kappa);

  const SymmetricRoot root_oo = symmetric_root(gather(params.sigma, pattern.observed, pattern.observed));
  out.lambda_dot_o = root_oo.inv_root * gather(geo.skew, pattern.observed) / cg.skew_scale;
  out.a_o = out.lambda_dot_o.dot(root_oo.inv_root * obs.resid);
  check_identity(out.delta0_c, out.a_o, "conditional threshold");
  return out;
}

ConditionalNormal conditional_normal(const ComponentParams& params, const MissingPattern& pattern,
                                     const Vector& x_o) {
  check_row(x_o, pattern);
  const PartitionBlocks b = partition(params, pattern);
  const Eigen::LLT<Matrix> omega_oo = checked_llt(b.omega_oo, "omega_oo");
  const Matrix gain = omega_oo.solve(b.omega_om).transpose();
  ConditionalNormal out;
  out.m_c = b.mu_m + gain * (x_o - b.mu_o);
  out.psi_c = b.skew_m - gain * b.skew_o;
  out.omega_c = symmetrize(b.omega_mm - gain * b.omega_om);
  return out;
}

TPosterior t_posterior(const ComponentParams& params, const MissingPattern& pattern, const Vector& x_o) {
  check_row(x_o, pattern);
  const PartitionBlocks b = partition(params, pattern);
  const Eigen::LLT<Matrix> omega_oo = checked_llt(b.omega_oo, "omega_oo");
  const Vector w = omega_oo.solve(b.skew_o);
  TPosterior out;
  out.sigma2_t = 1.0 / (1.0 + b.skew_o.dot(w));
  out.mu_t = out.sigma2_t * w.dot(x_o - b.mu_o);
  out.a_o = out.mu_t / std::sqrt(out.sigma2_t);
  const ConditionalGeometry cg = condition_on(params, derive_geometry(params), pattern);
  check_identity(out.a_o, observed_args(cg, x_o).args.skew_arg, "truncated-normal location");
  return out;
}

namespace {

void fill_truncation_moments(const ConditionalGeometry& cg, double skew_arg, ScaleMoments& out) {
  const double sigma_t = cg.skew_scale;
  const double mu_t = sigma_t * skew_arg;
  out.k_inv_t = out.k_inv * mu_t + sigma_t * out.xi;
  out.k_inv_t2 = out.k_inv * mu_t * mu_t + mu_t * sigma_t * out.xi + cg.sigma2_t;
}

double taylor_log_moment(double k_inv, double k_inv2) {
  // second-order expansion of E[log V] about E[V] with V = 1/kappa
  const double ratio = std::max(k_inv2 / (k_inv * k_inv), 1.0 + 1e-12);
  return std::log(k_inv) - 0.5 * (ratio - 1.0);
}

// The posterior of u is Gam(a, b) tilted by Phi(A sqrt(u)), with
// a = (nu + p_o)/2 and b = (nu + d)/2.  Gamma moments against the tilt are
// Student-t cdfs: E_{Gam(c, b)}[Phi(A sqrt(u))] = T_{2c}(A sqrt(c / b)).
// E[log u] differentiates the normalizer in the shape: digamma(a) - log b
// plus d/dc log T_{2c}(A sqrt(c / b)) at c = a, by a five-point stencil.
ScaleMoments skew_t_moments(const ConditionalGeometry& cg, const ScaleLaw& law, const SkewArgs& args) {
  const double nu = law.param();
  const double a = 0.5 * (nu + args.dim);
  const double b = 0.5 * (nu + args.maha);
  const double tilt = args.skew_arg;
  auto log_tilt_mass = [&](double c) { return log_student_t_cdf(tilt * std::sqrt(c / b), 2.0 * c); };
  const double log_g0 = log_tilt_mass(a);
  const double log_denom = std::lgamma(a) - a * std::log(b) + log_g0;
  const double log_b_tilt = std::log(b + 0.5 * tilt * tilt);
  constexpr double kHalfLog2Pi = 0.91893853320467274178;

  ScaleMoments out;
  out.log_density = smsn_log_kernel(args, law);
  out.k_inv = a / b * std::exp(log_tilt_mass(a + 1.0) - log_g0);
  out.k_inv2 = a * (a + 1.0) / (b * b) * std::exp(log_tilt_mass(a + 2.0) - log_g0);
  out.kappa = b / (a - 1.0) * std::exp(log_tilt_mass(a - 1.0) - log_g0);
  out.xi = std::exp(std::lgamma(a + 0.5) - (a + 0.5) * log_b_tilt - kHalfLog2Pi - log_denom);
  out.xi_pos = std::exp(std::lgamma(a - 0.5) - (a - 0.5) * log_b_tilt - kHalfLog2Pi - log_denom);
  constexpr double kStep = 1e-3;
  const double slope = (8.0 * (log_tilt_mass(a + kStep) - log_tilt_mass(a - kStep)) -
                        (log_tilt_mass(a + 2.0 * kStep) - log_tilt_mass(a - 2.0 * kStep))) /
                       (12.0 * kStep);
  out.log_k_inv_exact = boost::math::digamma(a) - std::log(b) + slope;
  out.log_k_inv_taylor = taylor_log_moment(out.k_inv, out.k_inv2);
  fill_truncation_moments(cg, tilt, out);
  return out;
}

}  // namespace

ScaleMoments posterior_scale_moments(const ConditionalGeometry& cg, const ScaleLaw& law,
                                     const ObservedArgs& obs, const QuadratureOptions& quad) {
  const SkewArgs& args = obs.args;
  if (quad.closed_form_skew_t && law.kind() == LawKind::GammaInverse) return skew_t_moments(cg, law, args);
  const ScaleRule sr = build_scale_rule(
      law, [&](double u) { return log_conditional_density(args, law.kappa(u)); }, quad.rel_tol);
  ScaleMoments out;
  out.log_density = sr.log_mass;
  out.k_inv = out.k_inv2 = out.kappa = out.xi = out.xi_pos = out.log_k_inv_exact = 0.0;
  const double a = args.skew_arg;
  for (std::size_t j = 0; j < sr.rule.size(); ++j) {
    const double w = sr.rule.weights[j];
    const double kappa = law.kappa(sr.rule.nodes[j]);
    const double inv = 1.0 / kappa;
    const double root = std::sqrt(kappa);
    const double mills = mills_w(a / root);
    out.k_inv += w * inv;
    out.k_inv2 += w * inv * inv;
    out.kappa += w * kappa;
    out.xi += w * mills / root;
    out.xi_pos += w * mills * root;
    out.log_k_inv_exact -= w * std::log(kappa);
  }
  out.log_k_inv_taylor = taylor_log_moment(out.k_inv, out.k_inv2);
  fill_truncation_moments(cg, a, out);
  return out;
}

ScaleMoments posterior_scale_moments(const ComponentParams& params, const ScaleLaw& law,
                                     const MissingPattern& pattern, const Vector& x_o) {
  const ConditionalGeometry cg = condition_on(params, derive_geometry(params), pattern);
  return posterior_scale_moments(cg, law, observed_args(cg, x_o));
}

std::vector<double> normalize_log_weights(std::span<const double> log_terms, double& log_total,
                                          bool& underflow) {
  std::vector<double> z(log_terms.size());
  log_total = log_sum_exp(log_terms);
  underflow = !std::isfinite(log_total);
  if (underflow) {
    std::fill(z.begin(), z.end(), 1.0 / static_cast<double>(z.size()));
    return z;
  }
  for (std::size_t g = 0; g < z.size(); ++g) z[g] = std::exp(log_terms[g] - log_total);
  return z;
}

EStepRow estep_row(const MixtureModel& model, std::span<const ConditionalGeometry> geometries,
                   const Vector& x, const QuadratureOptions& quad) {
  const std::size_t n_comp = model.components.size();
  if (geometries.size() != n_comp) throw Error(Errc::DimensionMismatch, "one geometry per component expected");
  if (x.size() != model.dim()) throw Error(Errc::DimensionMismatch, "row dimension mismatch");
  const MissingPattern& pattern = geometries.front().pattern;
  const Vector x_o = gather(x, pattern.observed);

  EStepRow row;
  row.components.resize(n_comp);
  std::vector<ObservedArgs> obs(n_comp);
  std::vector<double> log_terms(n_comp);
  for (std::size_t g = 0; g < n_comp; ++g) {
    obs[g] = observed_args(geometries[g], x_o);
    row.components[g].moments = posterior_scale_moments(geometries[g], model.laws[g], obs[g], quad);
    log_terms[g] = std::log(model.weights[g]) + row.components[g].moments.log_density;
  }
  const std::vector<double> z = normalize_log_weights(log_terms, row.log_marginal, row.underflow);

  const int p = model.dim();
  for (std::size_t g = 0; g < n_comp; ++g) {
    const ConditionalGeometry& cg = geometries[g];
    HatQuantities& h = row.components[g];
    const ScaleMoments& sm = h.moments;
    h.z = z[g];
    h.zk = z[g] * sm.k_inv;
    h.zkt = z[g] * sm.k_inv_t;
    h.zkt2 = z[g] * sm.k_inv_t2;

    // missing block: X_m | x_o, T, kappa ~ N(m_c + T psi_c, kappa omega_c),
    // accumulated relative to the component location mu
    const Vector& r_o = obs[g].resid;
    const double mu_t = cg.skew_scale * obs[g].args.skew_arg;
    const Vector mr = cg.sigma_gain * r_o - mu_t * cg.psi_c;  // m_c - mu_m
    const Vector kr_m = sm.k_inv * mr + sm.k_inv_t * cg.psi_c;
    const Vector ktr_m = sm.k_inv_t * mr + sm.k_inv_t2 * cg.psi_c;
    const Matrix cross = mr * cg.psi_c.transpose();
    const Matrix krr_mm = cg.omega_c + sm.k_inv * mr * mr.transpose() + sm.k_inv_t * (cross + cross.transpose()) +
                          sm.k_inv_t2 * cg.psi_c * cg.psi_c.transpose();
    h.cond_mean = cg.mu_m + cg.sigma_gain * r_o + sm.xi_pos * cg.skew_c;

    h.zkr.resize(p);
    h.zktr.resize(p);
    scatter(h.zk * r_o, pattern.observed, h.zkr);
    scatter(z[g] * kr_m, pattern.missing, h.zkr);
    scatter(h.zkt * r_o, pattern.observed, h.zktr);
    scatter(z[g] * ktr_m, pattern.missing, h.zktr);

    h.zkrr.resize(p, p);
    const auto& o = pattern.observed;
    const auto& m = pattern.missing;
    for (std::size_t a = 0; a < o.size(); ++a)
      for (std::size_t b = 0; b < o.size(); ++b) h.zkrr(o[a], o[b]) = h.zk * r_o[a] * r_o[b];
    for (std::size_t a = 0; a < m.size(); ++a) {
      for (std::size_t b = 0; b < o.size(); ++b)
        h.zkrr(m[a], o[b]) = h.zkrr(o[b], m[a]) = z[g] * kr_m[a] * r_o[b];
      for (std::size_t b = 0; b < m.size(); ++b) h.zkrr(m[a], m[b]) = z[g] * krr_mm(a, b);
    }

    const Vector& mu = model.components[g].mu;
    h.zkx = h.zkr + h.zk * mu;
    h.zktx = h.zktr + h.zkt * mu;
    const Matrix shift = h.zkr * mu.transpose();
    h.zkxx = h.zkrr + shift + shift.transpose() + h.zk * mu * mu.transpose();
  }
  return row;
}

EStepRow estep_row(const MixtureModel& model, const MissingPattern& pattern, const Vector& x) {
  const PatternCache cache(model, std::span<const MissingPattern>(&pattern, 1));
  return estep_row(model, cache.for_pattern(0), x);
}

std::vector<double> responsibilities(const MixtureModel& model, const MissingPattern& pattern,
                                     const Vector& x_o) {
  check_row(x_o, pattern);
  Vector x = Vector::Constant(pattern.dim, std::numeric_limits<double>::quiet_NaN());
  scatter(x_o, pattern.observed, x);
  const EStepRow row = estep_row(model, pattern, x);
  std::vector<double> z;
  for (const HatQuantities& h : row.components) z.push_back(h.z);
  return z;
}

Vector impute_row(const EStepRow& row, const MissingPattern& pattern, const Vector& x) {
  Vector out = x;
  Vector fill = Vector::Zero(pattern.n_missing());
  for (const HatQuantities& h : row.components) fill += h.z * h.cond_mean;
  scatter(fill, pattern.missing, out);
  return out;
}

Vector impute_row(const MixtureModel& model, const MissingPattern& pattern, const Vector& x) {
  return impute_row(estep_row(model, pattern, x), pattern, x);
}

PatternCache::PatternCache(const MixtureModel& model, std::span<const MissingPattern> patterns)
    : n_components_(model.components.size()) {
  std::vector<ComponentGeometry> geos;
  geos.reserve(n_components_);
  for (const ComponentParams& c : model.components) geos.push_back(derive_geometry(c));
  geometries_.reserve(patterns.size() * n_components_);
  for (const MissingPattern& pattern : patterns)
    for (std::size_t g = 0; g < n_components_; ++g)
      geometries_.push_back(condition_on(model.components[g], geos[g], pattern));
}

}  // namespace smsn
