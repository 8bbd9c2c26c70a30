#include "smsnmix/numkit.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>

#include "smsnmix/kernels.hpp"

namespace smsn {
namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;
constexpr double kInf = std::numeric_limits<double>::infinity();

void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw Error(Errc::NonFinite, std::string(what) + " received a non-finite argument");
}

// Mills ratio R(t) = Q(t) / phi(t) for t >= 8 by backward evaluation of the
// Laplace continued fraction R(t) = 1/(t + 1/(t + 2/(t + 3/(t + ...)))).
double upper_mills_ratio(double t) {
  double f = t;
  for (int k = 80; k >= 1; --k) f = t + k / f;
  return 1.0 / f;
}

}  // namespace

double std_normal_logpdf(double x) { return -0.5 * x * x - kLogSqrt2Pi; }

double std_normal_cdf(double x) {
  require_finite(x, "std_normal_cdf");
  return 0.5 * std::erfc(-x * std::numbers::sqrt2 * 0.5);
}

double log_std_normal_cdf(double x) {
  require_finite(x, "log_std_normal_cdf");
  if (x > 5.0) return std::log1p(-0.5 * std::erfc(x * std::numbers::sqrt2 * 0.5));
  if (x >= -8.0) return std::log(0.5 * std::erfc(-x * std::numbers::sqrt2 * 0.5));
  const double t = -x;
  return std_normal_logpdf(t) + std::log(upper_mills_ratio(t));
}

double mills_w(double x) {
  require_finite(x, "mills_w");
  if (x < -8.0) return 1.0 / upper_mills_ratio(-x);
  return std::exp(std_normal_logpdf(x) - log_std_normal_cdf(x));
}

double student_t_cdf(double x, double df) {
  if (!(df > 0.0)) throw Error(Errc::Domain, "student_t_cdf requires df > 0");
  require_finite(x, "student_t_cdf");
  return boost::math::cdf(boost::math::students_t_distribution<double>(df), x);
}

double log_student_t_cdf(double x, double df) {
  if (!(df > 0.0)) throw Error(Errc::Domain, "log_student_t_cdf requires df > 0");
  require_finite(x, "log_student_t_cdf");
  const boost::math::students_t_distribution<double> dist(df);
  if (x > 0.0) return std::log1p(-boost::math::cdf(boost::math::complement(dist, x)));
  return std::log(boost::math::cdf(dist, x));
}

// ---------------------------------------------------------------------------

double log_bessel_k(double order, double x) {
  if (!(x > 0.0) || !std::isfinite(x)) throw Error(Errc::Domain, "bessel_k requires x > 0");
  const double v = std::fabs(order);
  if (x <= 30.0 && v <= 50.0) {
    const double direct = std::cyl_bessel_k(v, x);
    if (std::isfinite(direct) && direct > 1e-300) return std::log(direct);
  }
  // K_v(x) = e^{-x} int_0^inf exp(-2x sinh^2(t/2)) cosh(v t) dt
  auto integrand = [x, v](double t) {
    const double sh = std::sinh(0.5 * t);
    const double vt = v * t;
    return -2.0 * x * sh * sh + vt + std::log1p(std::exp(-2.0 * vt)) - std::numbers::ln2;
  };
  return -x + integrate_log(integrand, 0.0, 700.0, 0.0, 1e-13).log_mass;
}

double bessel_k(double order, double x) {
  if (!(x > 0.0) || !std::isfinite(x)) throw Error(Errc::Domain, "bessel_k requires x > 0");
  const double v = std::fabs(order);
  if (x <= 30.0 && v <= 50.0) {
    const double direct = std::cyl_bessel_k(v, x);
    if (std::isfinite(direct)) return direct;
  }
  return std::exp(log_bessel_k(v, x));
}

// ---------------------------------------------------------------------------

double asymmetry(const Matrix& m) {
  const double scale = m.norm();
  if (scale == 0.0) return 0.0;
  return (m - m.transpose()).norm() / scale;
}

namespace {

Eigen::SelfAdjointEigenSolver<Matrix> checked_eigen(const Matrix& m) {
  if (m.rows() != m.cols() || m.rows() == 0)
    throw Error(Errc::DimensionMismatch, "expected a non-empty square matrix");
  if (!m.allFinite()) throw Error(Errc::NonFinite, "matrix has non-finite entries");
  if (asymmetry(m) > 1e-12) throw Error(Errc::InvalidArgument, "matrix is not symmetric");
  const Matrix sym = 0.5 * (m + m.transpose());
  return Eigen::SelfAdjointEigenSolver<Matrix>(sym);
}

}  // namespace

Matrix psd_sqrt(const Matrix& m) {
  const auto eig = checked_eigen(m);
  Vector values = eig.eigenvalues();
  const double top = std::max(values.cwiseAbs().maxCoeff(), 0.0);
  if (values.minCoeff() < -1e-10 * top) throw Error(Errc::NotPSD, "matrix has a negative eigenvalue");
  values = values.cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
}

SymmetricRoot symmetric_root(const Matrix& m) {
  const auto eig = checked_eigen(m);
  const Vector& values = eig.eigenvalues();
  const double top = values.cwiseAbs().maxCoeff();
  if (values.minCoeff() < -1e-10 * top) throw Error(Errc::NotPSD, "matrix has a negative eigenvalue");
  if (!(values.minCoeff() > 1e-12 * top)) throw Error(Errc::Singular, "matrix is numerically singular");
  const Vector s = values.cwiseSqrt();
  SymmetricRoot out;
  out.root = eig.eigenvectors() * s.asDiagonal() * eig.eigenvectors().transpose();
  out.inv_root = eig.eigenvectors() * s.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  out.log_det = values.array().log().sum();
  return out;
}

// ---------------------------------------------------------------------------

double QuadratureRule::apply(const std::function<double(double)>& g) const {
  double acc = 0.0;
  for (std::size_t j = 0; j < nodes.size(); ++j) acc += weights[j] * g(nodes[j]);
  return acc;
}

namespace {

QuadratureRule compute_gauss_legendre(int n) {
  QuadratureRule rule;
  rule.support = Support::Interval;
  rule.nodes.assign(n, 0.0);
  rule.weights.assign(n, 0.0);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = 1.0;
      double p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1);
      }
      pp = n * (z * p1 - p2) / (z * z - 1.0);
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::fabs(z - z1) < 1e-15) break;
    }
    rule.nodes[i] = -z;
    rule.nodes[n - 1 - i] = z;
    rule.weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
    rule.weights[n - 1 - i] = rule.weights[i];
  }
  return rule;
}

}  // namespace

const QuadratureRule& gauss_legendre(int n) {
  if (n < 1) throw Error(Errc::InvalidArgument, "Gauss-Legendre order must be positive");
  static std::mutex mutex;
  static std::map<int, QuadratureRule> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, compute_gauss_legendre(n)).first;
  return it->second;
}

namespace {

constexpr double kWindowDrop = 46.0;
// The mode only anchors the window, so a coarse Brent tolerance suffices.
constexpr int kModeBits = 20;
// Initial window step in the sinh-mapped variable.
constexpr double kSinhStep = 0.25;

struct Evaluated {
  double x;
  double f;
};

// Maximizer of log_f on [lo, hi] assuming unimodality: expanding bracket
// from `start`, then Brent.
Evaluated locate_mode(const std::function<double(double)>& log_f, double lo, double hi,
                      double start) {
  auto f = [&](double x) {
    const double v = log_f(x);
    return std::isnan(v) ? -kInf : v;
  };
  double x0 = std::clamp(start, lo, hi);
  double f0 = f(x0);
  double step = 1.0;

  double dir = 1.0;
  double x1 = std::min(x0 + step, hi);
  double f1 = f(x1);
  if (!(f1 > f0)) {
    const double xm = std::max(x0 - step, lo);
    const double fm = f(xm);
    if (fm > f0) {
      dir = -1.0;
      x1 = xm;
      f1 = fm;
    } else {
      // bracketed by [xm, x1]
      const double a = xm;
      const double b = x1;
      if (a == b) return {x0, f0};
      auto r = boost::math::tools::brent_find_minima([&](double x) { return -f(x); }, a, b, kModeBits);
      return r.second < -f0 ? Evaluated{r.first, -r.second} : Evaluated{x0, f0};
    }
  }
  // f increases from x0 to x1 along dir; march until it drops or a bound is hit.
  double xprev = x0;
  for (int iter = 0; iter < 200; ++iter) {
    step *= 2.0;
    const double x2 = std::clamp(x1 + dir * step, lo, hi);
    if (x2 == x1) return {x1, f1};
    const double f2 = f(x2);
    if (f2 < f1) {
      const double a = std::min(xprev, x2);
      const double b = std::max(xprev, x2);
      auto r = boost::math::tools::brent_find_minima([&](double x) { return -f(x); }, a, b, kModeBits);
      return r.second < -f1 ? Evaluated{r.first, -r.second} : Evaluated{x1, f1};
    }
    xprev = x1;
    x1 = x2;
    f1 = f2;
  }
  return {x1, f1};
}

// Marches from `start` in fixed steps until log_f has dropped kWindowDrop
// below fmax or the bound is reached.
double step_out(const std::function<double(double)>& log_f, double start, double fmax, double step,
                double dir, double bound) {
  double x = start;
  for (int iter = 0; iter < 1000; ++iter) {
    const double next = dir > 0 ? std::min(x + step, bound) : std::max(x - step, bound);
    const double v = log_f(next);
    x = next;
    if (x == bound || !(v > fmax - kWindowDrop)) return x;
  }
  return x;
}

struct RuleResult {
  double log_mass;
  std::vector<double> nodes;
  std::vector<double> weights;
};

RuleResult apply_window(const std::function<double(double)>& log_f, double a, double b, int n) {
  const QuadratureRule& gl = gauss_legendre(n);
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  RuleResult out;
  out.nodes.resize(n);
  out.weights.resize(n);
  std::vector<double> logs(n);
  std::vector<double> base(n);
  double shift = -kInf;
  for (int j = 0; j < n; ++j) {
    out.nodes[j] = mid + half * gl.nodes[j];
    base[j] = half * gl.weights[j];
    const double v = log_f(out.nodes[j]);
    logs[j] = std::isnan(v) ? -kInf : v;
    shift = std::max(shift, logs[j]);
  }
  if (!std::isfinite(shift)) throw Error(Errc::NonConvergent, "integrand vanishes on the window");
  const double mass = kernels::exp_weights(logs, base, shift, out.weights);
  const double inv = 1.0 / mass;
  for (double& w : out.weights) w *= inv;
  out.log_mass = shift + std::log(mass);
  return out;
}

}  // namespace

LogIntegral integrate_log(const std::function<double(double)>& log_f, double lo, double hi,
                          double start, double rel_tol) {
  if (!(lo < hi)) throw Error(Errc::InvalidArgument, "integration bounds must satisfy lo < hi");
  const Evaluated mode = locate_mode(log_f, lo, hi, start);
  if (!std::isfinite(mode.f)) throw Error(Errc::NonConvergent, "integrand has no finite mode");

  // Local scale from a second difference (one-sided at a bound).
  double h = 1e-3 * (1.0 + std::fabs(mode.x));
  double scale = 1.0;
  {
    double curvature = 0.0;
    double slope = 0.0;
    if (mode.x - h >= lo && mode.x + h <= hi) {
      const double fl = log_f(mode.x - h);
      const double fr = log_f(mode.x + h);
      curvature = (fl - 2.0 * mode.f + fr) / (h * h);
    } else {
      const double s = mode.x + h <= hi ? 1.0 : -1.0;
      const double f1 = log_f(mode.x + s * h);
      const double f2 = log_f(mode.x + 2.0 * s * h);
      curvature = (mode.f - 2.0 * f1 + f2) / (h * h);
      slope = std::fabs(f1 - mode.f) / h;
    }
    double candidate = curvature < 0.0 ? 1.0 / std::sqrt(-curvature) : 1.0;
    if (slope > 0.0) candidate = std::min(candidate, 1.0 / slope);
    if (std::isfinite(candidate)) scale = std::clamp(candidate, 1e-8, 1e3);
  }
  // Substitute s = mode + scale sinh(t): algebraic and exponential tails in s
  // decay double-exponentially in t, so the rule stays concentrated on the bulk.
  auto log_g = [&](double t) {
    const double x = mode.x + scale * std::sinh(t);
    if (x < lo || x > hi) return -kInf;
    return log_f(x) + std::log(scale * std::cosh(t));
  };
  const double t_lo = std::asinh((lo - mode.x) / scale);
  const double t_hi = std::asinh((hi - mode.x) / scale);
  const double g0 = log_g(0.0);
  const double a = mode.x <= lo ? 0.0 : step_out(log_g, 0.0, g0, kSinhStep, -1.0, t_lo);
  const double b = mode.x >= hi ? 0.0 : step_out(log_g, 0.0, g0, kSinhStep, +1.0, t_hi);
  if (!(a < b)) throw Error(Errc::NonConvergent, "degenerate integration window");

  // Gauss rules converge superlinearly, so once the doubling gap has shrunk
  // the error of the finer rule is about gap^2 / previous gap.
  RuleResult previous = apply_window(log_g, a, b, kMinQuadratureNodes);
  double previous_gap = 1.0;
  for (int n = 2 * kMinQuadratureNodes; n <= kMaxQuadratureNodes; n *= 2) {
    RuleResult current = apply_window(log_g, a, b, n);
    const double gap = std::fabs(std::expm1(current.log_mass - previous.log_mass));
    const double predicted = gap * std::min(1.0, gap / previous_gap);
    previous_gap = gap;
    if (gap < rel_tol || predicted < 1e-2 * rel_tol || n == kMaxQuadratureNodes) {
      if (gap > 1e-6) throw Error(Errc::NonConvergent, "quadrature did not settle at 1024 nodes");
      LogIntegral out;
      out.rule.support = Support::Interval;
      out.rule.nodes.resize(current.nodes.size());
      for (std::size_t j = 0; j < current.nodes.size(); ++j)
        out.rule.nodes[j] = std::clamp(mode.x + scale * std::sinh(current.nodes[j]), lo, hi);
      out.rule.weights = std::move(current.weights);
      out.log_mass = current.log_mass;
      out.order = n;
      return out;
    }
    previous = std::move(current);
  }
  throw Error(Errc::NonConvergent, "unreachable");
}

ScaleRule build_scale_rule(const ScaleLaw& law, const std::function<double(double)>& log_tilt,
                           double rel_tol) {
  ScaleRule out;
  if (law.is_degenerate()) {
    out.rule.support = Support::PositiveHalfLine;
    out.rule.nodes = {1.0};
    out.rule.weights = {1.0};
    out.log_mass = log_tilt(1.0);
    return out;
  }
  // Integrate over s = log u so both endpoints of the support are pushed to
  // infinity and the integrand is smooth for every admissible shape.
  auto log_f = [&](double s) {
    const double u = std::exp(s);
    return log_tilt(u) + law.log_density(u) + s;
  };
  const bool unit = law.kind() == LawKind::BetaInverse;
  const double lo = -745.0;
  const double hi = unit ? 0.0 : 709.0;
  const double start = unit ? std::log(law.param() / (law.param() + 1.0)) : 0.0;
  LogIntegral li = integrate_log(log_f, lo, hi, start, rel_tol);
  out.rule.support = unit ? Support::UnitInterval : Support::PositiveHalfLine;
  out.rule.nodes.resize(li.rule.nodes.size());
  for (std::size_t j = 0; j < li.rule.nodes.size(); ++j) out.rule.nodes[j] = std::exp(li.rule.nodes[j]);
  out.rule.weights = std::move(li.rule.weights);
  out.log_mass = li.log_mass;
  return out;
}

double integrate_scale(const std::function<double(double)>& g, const ScaleLaw& law) {
  const ScaleRule r = build_scale_rule(law, [](double) { return 0.0; });
  return std::exp(r.log_mass) * r.rule.apply(g);
}

}  // namespace smsn
