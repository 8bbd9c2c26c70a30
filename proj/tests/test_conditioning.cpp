#include <doctest.h>

#include <boost/math/quadrature/sinh_sinh.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "smsnmix/conditioning.hpp"
#include "support.hpp"

using namespace smsn;
using namespace smsn::testing;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool close(double a, double b, double tol) { return std::fabs(a - b) <= tol * (1.0 + std::fabs(a)); }

MissingPattern random_pattern(std::mt19937_64& rng, int p, bool allow_complete) {
  std::uniform_int_distribution<int> count(allow_complete ? 0 : 1, p - 1);
  std::vector<int> idx(p);
  for (int j = 0; j < p; ++j) idx[j] = j;
  std::shuffle(idx.begin(), idx.end(), rng);
  return MissingPattern::with_missing(p, std::vector<int>(idx.begin(), idx.begin() + count(rng)));
}

Vector with_nans(const Vector& x, const MissingPattern& pattern) {
  Vector out = x;
  for (int j : pattern.missing) out[j] = kNaN;
  return out;
}

// Skew-normal density coded straight from its definition.
double plain_sn_pdf(const Vector& x, const ComponentParams& c) {
  const int p = c.dim();
  const Eigen::SelfAdjointEigenSolver<Matrix> es(c.sigma);
  const Matrix inv_root = es.eigenvectors() * es.eigenvalues().cwiseInverse().cwiseSqrt().asDiagonal() *
                          es.eigenvectors().transpose();
  const Vector z = inv_root * (x - c.mu);
  const double det = es.eigenvalues().prod();
  const double phi = std::exp(-0.5 * z.squaredNorm()) / std::sqrt(std::pow(2.0 * std::numbers::pi, p) * det);
  return 2.0 * phi * 0.5 * std::erfc(-c.lambda.dot(z) / std::numbers::sqrt2);
}

// Kolmogorov limiting survival function.
double ks_pvalue(double d, double n) {
  const double t = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) sum += (k % 2 ? 2.0 : -2.0) * std::exp(-2.0 * k * k * t * t);
  return std::clamp(sum, 0.0, 1.0);
}

// Self-normalized importance-sampling estimate with a delta-method SE.
struct WeightedMean {
  std::vector<double> w, f;
  void add(double weight, double value) {
    w.push_back(weight);
    f.push_back(value);
  }
  std::pair<double, double> estimate() const {
    double sw = 0.0, swf = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      sw += w[i];
      swf += w[i] * f[i];
    }
    const double mean = swf / sw;
    double var = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) var += w[i] * w[i] * (f[i] - mean) * (f[i] - mean);
    return {mean, std::sqrt(var) / sw};
  }
};

MixtureModel design_model(const ScaleLaw& law) {
  MixtureModel m;
  m.components = {design_component(0), design_component(1)};
  m.laws = {law, law};
  m.weights = {0.6, 0.4};
  return m;
}

}  // namespace

TEST_CASE("missing patterns and partitions") {
  const MissingPattern pat = MissingPattern::of_row(vec({1.0, kNaN, 3.0, kNaN}));
  CHECK(pat.observed == std::vector<int>{0, 2});
  CHECK(pat.missing == std::vector<int>{1, 3});
  CHECK_THROWS_AS(MissingPattern::of_row(vec({kNaN, kNaN})).validate(), Error);
  CHECK(MissingPattern::with_missing(3, {2, 0}) == MissingPattern::of_row(vec({kNaN, 1.0, kNaN})));

  std::mt19937_64 rng(11);
  const ComponentParams c = random_component(rng, 6);
  for (int rep = 0; rep < 20; ++rep) {
    const MissingPattern pattern = random_pattern(rng, 6, true);
    const ComponentParams back = reassemble(partition(c, pattern), pattern);
    CHECK((back.mu.array() == c.mu.array()).all());
    CHECK((back.sigma.array() == c.sigma.array()).all());
    CHECK((back.lambda.array() == c.lambda.array()).all());
  }
  const PartitionBlocks full = partition(c, MissingPattern::complete(6));
  CHECK((full.sigma_oo.array() == c.sigma.array()).all());
  const PartitionBlocks two = partition(design_component(0), MissingPattern::with_missing(2, {1}));
  CHECK(two.sigma_mo(0, 0) == -1.0);
}

TEST_CASE("conditional skew-normal reductions") {
  ComponentParams c{vec({0.0, 0.0}), Matrix::Identity(2, 2), vec({0.0, 0.0})};
  const MissingPattern pat = MissingPattern::with_missing(2, {1});
  const ConditionalSN sn = conditional_sn(c, 1.0, pat, vec({1.0}));
  CHECK(sn.mu_c[0] == 0.0);
  CHECK(sn.sigma_c(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(sn.lambda_c[0] == 0.0);
  CHECK(sn.lambda0_c == 0.0);

  std::mt19937_64 rng(3);
  ComponentParams g = random_component(rng, 4);
  g.lambda.setZero();
  const MissingPattern pat4 = MissingPattern::with_missing(4, {0, 2});
  const Vector x_o = vec({0.3, -1.2});
  const ConditionalSN gs = conditional_sn(g, 1.0, pat4, x_o);
  const PartitionBlocks b = partition(g, pat4);
  const Vector mu_ref = b.mu_m + b.sigma_mo * b.sigma_oo.ldlt().solve(x_o - b.mu_o);
  const Matrix sig_ref = b.sigma_mm - b.sigma_mo * b.sigma_oo.ldlt().solve(b.sigma_om);
  CHECK((gs.mu_c - mu_ref).norm() < 1e-12);
  CHECK((gs.sigma_c - sig_ref).norm() < 1e-12);
  const ConditionalNormal gn = conditional_normal(g, pat4, x_o);
  CHECK(gn.psi_c.norm() == 0.0);
  CHECK((gn.m_c - mu_ref).norm() < 1e-12);
  CHECK((gn.omega_c - sig_ref).norm() < 1e-12);

  ComponentParams d{vec({0.5, -0.5}), mat2(2.0, 0.0, 0.0, 1.5), vec({1.0, -2.0})};
  const ConditionalNormal dn = conditional_normal(d, pat, vec({0.7}));
  const ComponentGeometry dg = derive_geometry(d);
  if (std::fabs(dg.omega(0, 1)) < 1e-15) {
    CHECK(dn.m_c[0] == doctest::Approx(-0.5));
    CHECK(dn.psi_c[0] == doctest::Approx(dg.skew[1]));
  }
}

TEST_CASE("conditional density equals joint over marginal") {
  const ComponentParams c = design_component(0);
  const MissingPattern pat = MissingPattern::with_missing(2, {1});
  const Vector x_o = vec({-4.0});
  for (double kappa : {1.0, 0.4, 2.5}) {
    const ConditionalSN sn = conditional_sn(c, kappa, pat, x_o);
    const ComponentParams cond{sn.mu_c, sn.sigma_c, sn.lambda_c, sn.lambda0_c};
    const ComponentParams joint{c.mu, kappa * c.sigma, c.lambda};
    const ComponentParams marg{vec({c.mu[0]}), kappa * c.sigma.topLeftCorner(1, 1), sn.lambda_dot_o};
    for (double xm = -8.0; xm <= 12.0; xm += 0.05) {
      const Vector x = vec({-4.0, xm});
      const double ratio = std::exp(sn_logpdf(x, joint) - sn_logpdf(x_o, marg));
      const double direct = std::exp(sn_logpdf(vec({xm}), cond));
      CHECK(std::fabs(ratio - direct) < 1e-6 * std::max(1.0, ratio));
    }
  }
}

TEST_CASE("conditioning identities on random configurations") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n01;
  int checked = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const int p = 2 + rep % 5;
    const ComponentParams c = random_component(rng, p, rep % 3 == 0 ? 0.5 : 2.0);
    const MissingPattern pat = random_pattern(rng, p, false);
    Vector full(p);
    for (int j = 0; j < p; ++j) full[j] = c.mu[j] + 2.0 * n01(rng);
    const Vector x_o = gather(full, pat.observed);
    const Vector x_m = gather(full, pat.missing);

    const ConditionalSN sn = conditional_sn(c, 1.0, pat, x_o);
    CHECK(close(sn.delta0_c, sn.a_o, 1e-10));
    const TPosterior tp = t_posterior(c, pat, x_o);
    CHECK(close(tp.mu_t / std::sqrt(tp.sigma2_t), sn.a_o, 1e-10));

    const ComponentGeometry geo = derive_geometry(c);
    const ConditionalGeometry cg = condition_on(c, geo, pat);
    CHECK(close(tp.sigma2_t, cg.sigma2_t, 1e-10));
    const ConditionalNormal cn = conditional_normal(c, pat, x_o);
    const double sigma_t = std::sqrt(tp.sigma2_t);
    CHECK((sn.mu_c - (cn.m_c + tp.mu_t * cn.psi_c)).norm() < 1e-10 * (1.0 + sn.mu_c.norm()));
    CHECK((sn.skew_c - sigma_t * cn.psi_c).norm() < 1e-10 * (1.0 + sn.skew_c.norm()));
    const Matrix sigma_from_omega = cn.omega_c + sn.skew_c * sn.skew_c.transpose();
    CHECK((cg.sigma_c - sigma_from_omega).norm() < 1e-10 * (1.0 + cg.sigma_c.norm()));

    // quadratic-form and skew-argument decompositions of the joint density
    const SkewArgs joint = skew_args(full, c, geo);
    const ObservedArgs obs = observed_args(cg, x_o);
    const SymmetricRoot rc = symmetric_root(cg.sigma_c);
    const Vector white_m = rc.inv_root * (x_m - sn.mu_c);
    CHECK(close(joint.maha, obs.args.maha + white_m.squaredNorm(), 1e-10));
    CHECK(close(joint.skew_arg, sn.lambda0_c + sn.lambda_c.dot(white_m), 1e-10));
    CHECK(close(joint.log_det, obs.args.log_det + rc.log_det, 1e-10));
    ++checked;
  }
  CHECK(checked == 1000);
}

TEST_CASE("truncated-normal posterior of T and the conditional slope") {
  // skew-normal, p = 2, second coordinate missing: sample (T, X) from the
  // stochastic representation and keep draws with X_o in a thin slice.
  const ComponentParams c{vec({0.5, -1.0}), mat2(2.0, 0.8, 0.8, 1.5), vec({2.0, -1.0})};
  const ComponentGeometry geo = derive_geometry(c);
  const Matrix omega_root = psd_sqrt(geo.omega);
  const MissingPattern pat = MissingPattern::with_missing(2, {1});
  const double x_o = c.mu[0] + 0.8 * geo.skew[0];
  const double half_width = 0.01;

  std::mt19937_64 rng(77);
  std::normal_distribution<double> n01;
  std::vector<double> ts, xms;
  for (int i = 0; i < 600000; ++i) {
    const double t = std::fabs(n01(rng));
    const Vector noise = omega_root * vec({n01(rng), n01(rng)});
    const Vector x = c.mu + t * geo.skew + noise;
    if (std::fabs(x[0] - x_o) < half_width) {
      ts.push_back(t);
      xms.push_back(x[1]);
    }
  }
  REQUIRE(ts.size() > 2000);
  const TPosterior tp = t_posterior(c, pat, vec({x_o}));
  const double sd = std::sqrt(tp.sigma2_t);
  const double tail = std_normal_cdf(tp.mu_t / sd);
  auto cdf = [&](double t) {
    return (std_normal_cdf((t - tp.mu_t) / sd) - std_normal_cdf(-tp.mu_t / sd)) / tail;
  };
  std::vector<double> sorted = ts;
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = cdf(sorted[i]);
    d = std::max({d, f - i / n, (i + 1) / n - f});
  }
  CHECK(ks_pvalue(d, n) > 0.01);

  // least-squares slope of X_m on T
  double mt = 0.0, mx = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    mt += ts[i] / n;
    mx += xms[i] / n;
  }
  double stt = 0.0, stx = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    stt += (ts[i] - mt) * (ts[i] - mt);
    stx += (ts[i] - mt) * (xms[i] - mx);
  }
  const double slope = stx / stt;
  const double icept = mx - slope * mt;
  double sse = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) sse += std::pow(xms[i] - icept - slope * ts[i], 2);
  const double se = std::sqrt(sse / (n - 2.0) / stt);
  const ConditionalNormal cn = conditional_normal(c, pat, vec({x_o}));
  CHECK(std::fabs(slope - cn.psi_c[0]) < 3.0 * se);
}

TEST_CASE("posterior scale moments") {
  SUBCASE("degenerate law") {
    const ComponentParams c = design_component(1);
    const MissingPattern pat = MissingPattern::with_missing(2, {0});
    const Vector x_o = vec({0.7});
    const ScaleMoments sm = posterior_scale_moments(c, ScaleLaw::skew_normal(), pat, x_o);
    const ConditionalGeometry cg = condition_on(c, derive_geometry(c), pat);
    const double a = observed_args(cg, x_o).args.skew_arg;
    CHECK(sm.k_inv == 1.0);
    CHECK(sm.xi == doctest::Approx(mills_w(a)).epsilon(1e-15));
    CHECK(sm.log_k_inv_exact == 0.0);
    CHECK(std::fabs(sm.log_k_inv_taylor) < 1e-11);

    ComponentParams sym = c;
    sym.lambda.setZero();
    const ScaleMoments s0 = posterior_scale_moments(sym, ScaleLaw::skew_normal(), pat, x_o);
    CHECK(s0.k_inv_t == doctest::Approx(std::sqrt(2.0 / std::numbers::pi)).epsilon(1e-14));
  }

  SUBCASE("skew-t importance sampling") {
    const ScaleLaw law = ScaleLaw::skew_t(4.0);
    const ComponentParams c = design_component(0);
    const MissingPattern pat = MissingPattern::with_missing(2, {1});
    const Vector x_o = vec({-3.2});
    const ConditionalGeometry cg = condition_on(c, derive_geometry(c), pat);
    const ObservedArgs obs = observed_args(cg, x_o);
    const ScaleMoments sm = posterior_scale_moments(cg, law, obs);

    const double a = obs.args.skew_arg;
    const double sigma_t = cg.skew_scale;
    const double mu_t = sigma_t * a;
    std::mt19937_64 rng(5);
    std::gamma_distribution<double> gam(2.0, 0.5);
    WeightedMean k_inv, xi, kt, kt2, logk;
    double mass = 0.0;
    const int draws = 1000000;
    for (int i = 0; i < draws; ++i) {
      const double kappa = 1.0 / gam(rng);
      const double w = std::exp(log_conditional_density(obs.args, kappa));
      mass += w / draws;
      const double root = std::sqrt(kappa);
      const double mills = mills_w(a / root);
      k_inv.add(w, 1.0 / kappa);
      xi.add(w, mills / root);
      kt.add(w, (mu_t + root * sigma_t * mills) / kappa);
      kt2.add(w, (mu_t * mu_t + kappa * sigma_t * sigma_t + mu_t * root * sigma_t * mills) / kappa);
      logk.add(w, -std::log(kappa));
    }
    auto within = [](const WeightedMean& wm, double value) {
      const auto [mean, se] = wm.estimate();
      INFO("mc " << mean << " se " << se << " quadrature " << value);
      CHECK(std::fabs(mean - value) < 3.0 * se);
    };
    within(k_inv, sm.k_inv);
    within(xi, sm.xi);
    within(kt, sm.k_inv_t);
    within(kt2, sm.k_inv_t2);
    within(logk, sm.log_k_inv_exact);
    CHECK(std::log(mass) == doctest::Approx(sm.log_density).epsilon(1e-2));
    // the observed marginal is itself skew-t, so the closed form applies
    CHECK(sm.log_density == doctest::Approx(smsn_log_kernel(obs.args, law)).epsilon(1e-9));
    // Jensen: E[log V] <= log E[V]
    CHECK(sm.log_k_inv_taylor <= std::log(sm.k_inv));
    CHECK(sm.log_k_inv_exact <= std::log(sm.k_inv));
  }

  SUBCASE("closed-form marginal agrees for every family") {
    std::mt19937_64 rng(8);
    for (const ScaleLaw& law : {ScaleLaw::skew_t(6.0), ScaleLaw::skew_vgamma(2.5), ScaleLaw::skew_normal()}) {
      for (int rep = 0; rep < 10; ++rep) {
        const ComponentParams c = random_component(rng, 4);
        const MissingPattern pat = random_pattern(rng, 4, true);
        const ConditionalGeometry cg = condition_on(c, derive_geometry(c), pat);
        Vector x_o = gather(c.mu, pat.observed);
        for (Eigen::Index j = 0; j < x_o.size(); ++j) x_o[j] += 0.5 * static_cast<double>(j) - 0.4;
        const ObservedArgs obs = observed_args(cg, x_o);
        const ScaleMoments sm = posterior_scale_moments(cg, law, obs);
        CHECK(sm.log_density == doctest::Approx(smsn_log_kernel(obs.args, law)).epsilon(1e-8));
      }
    }
  }
}

TEST_CASE("skew-t closed-form moments match quadrature") {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> nu_draw(2.1, 60.0);
  const QuadratureOptions closed{1e-10, true};
  for (int rep = 0; rep < 200; ++rep) {
    const int p = 1 + rep % 4;
    const ComponentParams c = random_component(rng, p, rep % 2 ? 4.0 : 1.0);
    const MissingPattern pat = p == 1 ? MissingPattern::complete(1) : random_pattern(rng, p, true);
    const ScaleLaw law = ScaleLaw::skew_t(nu_draw(rng));
    const ConditionalGeometry cg = condition_on(c, derive_geometry(c), pat);
    Vector x_o = gather(c.mu, pat.observed);
    std::normal_distribution<double> n01;
    for (Eigen::Index j = 0; j < x_o.size(); ++j) x_o[j] += 3.0 * n01(rng);
    const ObservedArgs obs = observed_args(cg, x_o);
    const ScaleMoments q = posterior_scale_moments(cg, law, obs);
    const ScaleMoments f = posterior_scale_moments(cg, law, obs, closed);
    INFO("rep " << rep << " nu " << law.param() << " A " << obs.args.skew_arg << " d " << obs.args.maha);
    CHECK(close(f.log_density, q.log_density, 1e-8));
    CHECK(close(f.k_inv, q.k_inv, 1e-8));
    CHECK(close(f.k_inv2, q.k_inv2, 1e-8));
    CHECK(close(f.kappa, q.kappa, 1e-8));
    CHECK(close(f.xi, q.xi, 1e-8));
    CHECK(close(f.xi_pos, q.xi_pos, 1e-8));
    CHECK(close(f.k_inv_t, q.k_inv_t, 1e-8));
    CHECK(close(f.k_inv_t2, q.k_inv_t2, 1e-8));
    CHECK(close(f.log_k_inv_taylor, q.log_k_inv_taylor, 1e-8));
    CHECK(close(f.log_k_inv_exact, q.log_k_inv_exact, 1e-8));
  }
}

TEST_CASE("responsibilities") {
  const MixtureModel sn_model = design_model(ScaleLaw::skew_normal());
  SUBCASE("independent marginal oracle") {
    const std::vector<double> z = responsibilities(sn_model, MissingPattern::complete(2), vec({-5.0, 0.0}));
    double f[2];
    for (int g = 0; g < 2; ++g) f[g] = sn_model.weights[g] * plain_sn_pdf(vec({-5.0, 0.0}), sn_model.components[g]);
    CHECK(std::fabs(z[0] - f[0] / (f[0] + f[1])) < 1e-10);

    const MissingPattern pat = MissingPattern::with_missing(2, {1});
    const std::vector<double> zm = responsibilities(sn_model, pat, vec({-5.0}));
    boost::math::quadrature::sinh_sinh<double> integrator;
    double m[2];
    for (int g = 0; g < 2; ++g) {
      m[g] = sn_model.weights[g] *
             integrator.integrate([&](double t) { return plain_sn_pdf(vec({-5.0, t}), sn_model.components[g]); });
    }
    CHECK(std::fabs(zm[0] - m[0] / (m[0] + m[1])) < 1e-10);
  }

  SUBCASE("trivial cases and permutation") {
    MixtureModel one;
    one.components = {design_component(0)};
    one.laws = {ScaleLaw::skew_t(5.0)};
    one.weights = {1.0};
    CHECK(responsibilities(one, MissingPattern::complete(2), vec({1.0, 2.0}))[0] == 1.0);

    MixtureModel twin = design_model(ScaleLaw::skew_t(5.0));
    twin.components[1] = twin.components[0];
    const std::vector<double> zt = responsibilities(twin, MissingPattern::complete(2), vec({-4.0, 1.0}));
    CHECK(zt[0] == doctest::Approx(0.6).epsilon(1e-14));

    MixtureModel swapped = design_model(ScaleLaw::skew_slash(2.0));
    const std::vector<double> za = responsibilities(swapped, MissingPattern::with_missing(2, {0}), vec({1.5}));
    std::swap(swapped.components[0], swapped.components[1]);
    std::swap(swapped.weights[0], swapped.weights[1]);
    const std::vector<double> zb = responsibilities(swapped, MissingPattern::with_missing(2, {0}), vec({1.5}));
    CHECK(za[0] == doctest::Approx(zb[1]).epsilon(1e-13));
  }

  SUBCASE("underflow falls back to uniform") {
    double total = 0.0;
    bool underflow = false;
    const std::vector<double> terms{-std::numeric_limits<double>::infinity(),
                                    -std::numeric_limits<double>::infinity()};
    const std::vector<double> z = normalize_log_weights(terms, total, underflow);
    CHECK(underflow);
    CHECK(z[0] == 0.5);
  }
}

TEST_CASE("E-step hat quantities") {
  SUBCASE("complete row collapses") {
    MixtureModel m;
    m.components = {ComponentParams{vec({1.0, -1.0}), mat2(2.0, 0.5, 0.5, 1.0), vec({0.0, 0.0})}};
    m.laws = {ScaleLaw::skew_normal()};
    m.weights = {1.0};
    const Vector x = vec({0.3, 0.9});
    const MissingPattern pat = MissingPattern::complete(2);
    const EStepRow row = estep_row(m, pat, x);
    const HatQuantities& h = row.components[0];
    CHECK(h.z == 1.0);
    CHECK((h.zkx - x).norm() < 1e-15);
    CHECK((h.zkxx - x * x.transpose()).norm() < 1e-15);
    const TPosterior tp = t_posterior(m.components[0], pat, x);
    CHECK(h.zkt == doctest::Approx(std::sqrt(tp.sigma2_t) * std::sqrt(2.0 / std::numbers::pi)).epsilon(1e-14));
    CHECK(impute_row(m, pat, x) == x);
  }

  SUBCASE("complete-data forms under a nontrivial law") {
    const MixtureModel m = design_model(ScaleLaw::skew_vgamma(1.7));
    const Vector x = vec({-4.2, 1.1});
    const EStepRow row = estep_row(m, MissingPattern::complete(2), x);
    for (const HatQuantities& h : row.components) {
      CHECK((h.zkx - h.zk * x).norm() < 1e-13);
      CHECK((h.zktx - h.zkt * x).norm() < 1e-13);
      CHECK((h.zkxx - h.zk * x * x.transpose()).norm() < 1e-12);
    }
  }

  SUBCASE("independent blocks impute the mean") {
    MixtureModel m;
    m.components = {ComponentParams{vec({1.0, -2.0}), mat2(2.0, 0.0, 0.0, 1.0), vec({0.0, 0.0})}};
    m.laws = {ScaleLaw::skew_t(5.0)};
    m.weights = {1.0};
    const MissingPattern pat = MissingPattern::with_missing(2, {1});
    const EStepRow row = estep_row(m, pat, vec({3.0, kNaN}));
    const HatQuantities& h = row.components[0];
    CHECK(h.zkx[1] / h.zk == doctest::Approx(-2.0).epsilon(1e-13));
    CHECK(impute_row(row, pat, vec({3.0, kNaN}))[1] == doctest::Approx(-2.0).epsilon(1e-13));
  }

  SUBCASE("printed sigma-side forms agree") {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> n01;
    for (int rep = 0; rep < 30; ++rep) {
      MixtureModel m;
      m.components = {random_component(rng, 4), random_component(rng, 4)};
      m.laws = {ScaleLaw::skew_slash(2.5), ScaleLaw::skew_slash(1.5)};
      m.weights = {0.3, 0.7};
      const MissingPattern pat = random_pattern(rng, 4, false);
      Vector x(4);
      for (int j = 0; j < 4; ++j) x[j] = m.components[0].mu[j] + n01(rng);
      const EStepRow row = estep_row(m, pat, with_nans(x, pat));
      const Vector x_o = gather(x, pat.observed);
      for (int g = 0; g < 2; ++g) {
        const HatQuantities& h = row.components[g];
        const ScaleMoments& sm = h.moments;
        const ConditionalSN sn = conditional_sn(m.components[g], 1.0, pat, x_o);
        const double a = sn.a_o;
        const Vector kx_m = sm.k_inv * sn.mu_c + sm.xi * sn.skew_c;
        const Matrix alpha = sn.mu_c * sn.skew_c.transpose() + sn.skew_c * sn.mu_c.transpose() -
                             a * sn.skew_c * sn.skew_c.transpose();
        const Matrix kxx_mm = sn.sigma_c + sm.k_inv * sn.mu_c * sn.mu_c.transpose() + sm.xi * alpha;
        CHECK((gather(h.zkx, pat.missing) - h.z * kx_m).norm() < 1e-10 * (1.0 + kx_m.norm()));
        CHECK((gather(h.zkxx, pat.missing, pat.missing) - h.z * kxx_mm).norm() < 1e-9 * (1.0 + kxx_mm.norm()));
        CHECK(h.zkxx.isApprox(h.zkxx.transpose(), 1e-14));
        CHECK(h.zkt2 >= 0.0);

        const Matrix centred = h.zkxx - h.zkx * h.zkx.transpose() / h.zk;
        const double min_eig = Eigen::SelfAdjointEigenSolver<Matrix>(centred).eigenvalues()[0];
        CHECK(min_eig > -1e-10 * centred.norm());
      }
      CHECK(row.components[0].z + row.components[1].z == doctest::Approx(1.0).epsilon(1e-14));
    }
  }

  SUBCASE("joint Monte Carlo oracle") {
    // likelihood weighting: draw (Z, kappa, T) from the prior, weight by the
    // density of x_o given them and draw X_m from its Gaussian conditional.
    const MixtureModel m = design_model(ScaleLaw::skew_t(4.0));
    const MissingPattern pat = MissingPattern::with_missing(2, {1});
    const Vector x = vec({-3.5, kNaN});
    const EStepRow row = estep_row(m, pat, x);

    std::mt19937_64 rng(99);
    std::normal_distribution<double> n01;
    std::gamma_distribution<double> gam(2.0, 0.5);
    std::uniform_real_distribution<double> unif;
    struct Acc {
      WeightedMean z, zk, zkt, zkt2, zkx0, zkx1, zktx0, zktx1, zkxx00, zkxx01, zkxx11, xm;
    };
    Acc acc[2];
    std::vector<ComponentGeometry> geo{derive_geometry(m.components[0]), derive_geometry(m.components[1])};
    for (int i = 0; i < 1000000; ++i) {
      const int g = unif(rng) < m.weights[0] ? 0 : 1;
      const ComponentParams& c = m.components[g];
      const Matrix& om = geo[g].omega;
      const Vector& skew = geo[g].skew;
      const double kappa = 1.0 / gam(rng);
      const double t = std::sqrt(kappa) * std::fabs(n01(rng));
      const double mean_o = c.mu[0] + t * skew[0];
      const double var_o = kappa * om(0, 0);
      const double w = std::exp(-0.5 * std::pow(x[0] - mean_o, 2) / var_o) / std::sqrt(var_o);
      const double mean_m = c.mu[1] + t * skew[1] + om(1, 0) / om(0, 0) * (x[0] - mean_o);
      const double var_m = kappa * (om(1, 1) - om(1, 0) * om(1, 0) / om(0, 0));
      const double xm = mean_m + std::sqrt(var_m) * n01(rng);
      const double ki = 1.0 / kappa;
      for (int h = 0; h < 2; ++h) {
        const double on = h == g ? 1.0 : 0.0;
        Acc& a = acc[h];
        a.z.add(w, on);
        a.zk.add(w, on * ki);
        a.zkt.add(w, on * ki * t);
        a.zkt2.add(w, on * ki * t * t);
        a.zkx0.add(w, on * ki * x[0]);
        a.zkx1.add(w, on * ki * xm);
        a.zktx0.add(w, on * ki * t * x[0]);
        a.zktx1.add(w, on * ki * t * xm);
        a.zkxx00.add(w, on * ki * x[0] * x[0]);
        a.zkxx01.add(w, on * ki * x[0] * xm);
        a.zkxx11.add(w, on * ki * xm * xm);
        a.xm.add(w, on * xm);
      }
    }
    auto within = [](const WeightedMean& wm, double value, const char* what) {
      const auto [mean, se] = wm.estimate();
      INFO(what << ": mc " << mean << " se " << se << " e-step " << value);
      CHECK(std::fabs(mean - value) < 3.0 * se + 1e-12);
    };
    double imputed = 0.0;
    for (int g = 0; g < 2; ++g) {
      const HatQuantities& h = row.components[g];
      const Acc& a = acc[g];
      within(a.z, h.z, "z");
      within(a.zk, h.zk, "zk");
      within(a.zkt, h.zkt, "zkt");
      within(a.zkt2, h.zkt2, "zkt2");
      within(a.zkx0, h.zkx[0], "zkx_o");
      within(a.zkx1, h.zkx[1], "zkx_m");
      within(a.zktx0, h.zktx[0], "zktx_o");
      within(a.zktx1, h.zktx[1], "zktx_m");
      within(a.zkxx00, h.zkxx(0, 0), "zkxx_oo");
      within(a.zkxx01, h.zkxx(0, 1), "zkxx_om");
      within(a.zkxx11, h.zkxx(1, 1), "zkxx_mm");
      within(a.xm, h.z * h.cond_mean[0], "z E[x_m]");
      imputed += h.z * h.cond_mean[0];
    }
    CHECK(impute_row(row, pat, x)[1] == doctest::Approx(imputed).epsilon(1e-15));
  }

  SUBCASE("gaussian imputation") {
    std::mt19937_64 rng(31);
    MixtureModel m;
    m.components = {random_component(rng, 4), random_component(rng, 4)};
    for (ComponentParams& c : m.components) c.lambda.setZero();
    m.laws = {ScaleLaw::skew_normal(), ScaleLaw::skew_normal()};
    m.weights = {0.45, 0.55};
    const MissingPattern pat = MissingPattern::with_missing(4, {1, 3});
    const Vector x = vec({0.2, kNaN, -0.4, kNaN});
    const Vector x_o = gather(x, pat.observed);
    double dens[2];
    Vector cond[2];
    for (int g = 0; g < 2; ++g) {
      const PartitionBlocks b = partition(m.components[g], pat);
      const Vector r = x_o - b.mu_o;
      const Eigen::LLT<Matrix> llt(b.sigma_oo);
      cond[g] = b.mu_m + b.sigma_mo * llt.solve(r);
      const double logdet = 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
      dens[g] = m.weights[g] * std::exp(-0.5 * r.dot(llt.solve(r)) - 0.5 * logdet);
    }
    const Vector expect = (dens[0] * cond[0] + dens[1] * cond[1]) / (dens[0] + dens[1]);
    const Vector got = gather(impute_row(m, pat, x), pat.missing);
    CHECK((got - expect).norm() < 1e-10);
  }
}
