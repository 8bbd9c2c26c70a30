#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

#include "smsnmix/error.hpp"
#include "smsnmix/scale_law.hpp"

namespace smsn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Standard normal and Student-t helpers
// ---------------------------------------------------------------------------

double std_normal_logpdf(double x);
double std_normal_cdf(double x);
/// log Phi(x); uses the Mills-ratio continued fraction below x = -8.
double log_std_normal_cdf(double x);

/// W(x) = phi(x) / Phi(x), the inverse Mills ratio of the lower tail.
double mills_w(double x);

double student_t_cdf(double x, double df);
double log_student_t_cdf(double x, double df);

// ---------------------------------------------------------------------------
// Bessel K
// ---------------------------------------------------------------------------

double bessel_k(double order, double x);
/// log K_order(x), finite for every x > 0 (uses the integral representation
/// K_v(x) = int_0^inf exp(-x cosh t) cosh(v t) dt where the direct value
/// would under/overflow).
double log_bessel_k(double order, double x);

// ---------------------------------------------------------------------------
// Symmetric matrices
// ---------------------------------------------------------------------------

/// Symmetric PSD square root.  Eigenvalues in [-1e-10 * max, 0) are clamped
/// to zero; anything more negative raises Errc::NotPSD.
Matrix psd_sqrt(const Matrix& m);

struct SymmetricRoot {
  Matrix root;
  Matrix inv_root;
  double log_det = 0.0;
};

/// Symmetric root and inverse root of a positive definite matrix.
SymmetricRoot symmetric_root(const Matrix& m);

/// Relative asymmetry ||M - M^T|| / ||M||.
double asymmetry(const Matrix& m);

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

enum class Support { UnitInterval, PositiveHalfLine, Interval };

/// Nodes and positive weights such that sum_j w_j g(x_j) approximates an
/// integral of g against some (possibly normalized) measure.
struct QuadratureRule {
  Support support = Support::Interval;
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const noexcept { return nodes.size(); }
  double apply(const std::function<double(double)>& g) const;
};

/// n-point Gauss-Legendre rule on (-1, 1).  Rules are computed once and
/// cached; the returned reference stays valid for the process lifetime.
const QuadratureRule& gauss_legendre(int n);

inline constexpr int kMinQuadratureNodes = 16;
inline constexpr int kMaxQuadratureNodes = 1024;

/// Integral of exp(log_f(s)) over (lo, hi) by windowed Gauss-Legendre in the
/// variable t of s = mode + scale sinh(t), where scale is the local curvature
/// scale at the mode.  The window extends until the mapped integrand has
/// dropped by at least 46 nats; the rule order doubles until successive log-masses
/// agree within rel_tol.  `weights` are normalized to sum to one so that
/// int g(s) exp(log_f(s)) ds ~= exp(log_mass) * sum_j weights_j g(nodes_j).
struct LogIntegral {
  QuadratureRule rule;
  double log_mass = 0.0;
  int order = 0;
};

LogIntegral integrate_log(const std::function<double(double)>& log_f, double lo, double hi,
                          double start, double rel_tol = 1e-10);

/// Posterior-style rule over the support of `law`: nodes u_j with normalized
/// weights proportional to exp(log_tilt(u)) h(u; theta).  log_mass is
/// log int exp(log_tilt(u)) h(u; theta) du.  For the degenerate law the rule
/// is the single node u = 1.
struct ScaleRule {
  QuadratureRule rule;
  double log_mass = 0.0;
};

ScaleRule build_scale_rule(const ScaleLaw& law, const std::function<double(double)>& log_tilt,
                           double rel_tol = 1e-10);

/// int g(u) h(u; theta) du.
double integrate_scale(const std::function<double(double)>& g, const ScaleLaw& law);

}  // namespace smsn
