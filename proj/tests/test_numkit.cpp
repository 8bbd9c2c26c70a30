#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "smsnmix/numkit.hpp"

using namespace smsn;

namespace {

Matrix random_psd(std::mt19937_64& rng, int p, bool full_rank = true) {
  std::normal_distribution<double> n01;
  const int k = full_rank ? p + 2 : std::max(1, p - 1);
  Matrix a(p, k);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < k; ++j) a(i, j) = n01(rng);
  Matrix m = a * a.transpose();
  return 0.5 * (m + m.transpose());
}

}  // namespace

TEST_CASE("standard normal cdf and its log") {
  CHECK(std_normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(std_normal_cdf(8.0) >= 1.0 - 1e-15);
  // mpmath at 60 digits
  const double ref = -53.23128515051247057834703;
  CHECK(std::fabs(log_std_normal_cdf(-10.0) - ref) <= 1e-10 * std::fabs(ref));
  CHECK(std::fabs(log_std_normal_cdf(-7.999) - log_std_normal_cdf(-8.001)) < 0.02);
  double prev = log_std_normal_cdf(-60.0);
  for (double x = -59.5; x < 12.0; x += 0.5) {
    const double cur = log_std_normal_cdf(x);
    CHECK(cur > prev);
    prev = cur;
  }
  CHECK_THROWS_AS(std_normal_cdf(std::nan("")), Error);
}

TEST_CASE("inverse Mills ratio") {
  CHECK(mills_w(0.0) == doctest::Approx(0.7978845608).epsilon(1e-10));
  const double w5 = mills_w(5.0);
  CHECK(w5 <= 1.5e-5);
  CHECK(std::fabs(w5 - 0.000001486719940904905712441744) <= 1e-12 * w5);
  const double w20 = mills_w(-20.0);
  CHECK(std::fabs(w20 - 20.05) / 20.05 < 0.01);
  CHECK(std::fabs(w20 - 20.04975306852785054221402) < 1e-12 * 20.05);
  for (double x = -40.0; x < 10.0; x += 0.37) {
    CHECK(mills_w(x) > std::max(0.0, -x));
  }
  // continuity across the asymptotic switch
  CHECK(mills_w(-8.0 + 1e-9) == doctest::Approx(mills_w(-8.0 - 1e-9)).epsilon(1e-8));
}

TEST_CASE("psd square root") {
  CHECK(psd_sqrt(Matrix::Identity(3, 3)).isApprox(Matrix::Identity(3, 3), 1e-14));
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 4.0;
  d(1, 1) = 9.0;
  const Matrix r = psd_sqrt(d);
  CHECK(r(0, 0) == doctest::Approx(2.0));
  CHECK(r(1, 1) == doctest::Approx(3.0));
  CHECK(std::fabs(r(0, 1)) < 1e-15);

  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const int p = 1 + trial % 8;
    const Matrix m = random_psd(rng, p, trial % 3 != 0);
    const Matrix root = psd_sqrt(m);
    CHECK((root * root - m).norm() <= 1e-10 * m.norm());
    CHECK((root - root.transpose()).norm() <= 1e-12 * root.norm());
  }
  Matrix bad = Matrix::Identity(2, 2);
  bad(1, 1) = -1.0;
  CHECK_THROWS_AS(psd_sqrt(bad), Error);
  try {
    psd_sqrt(bad);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NotPSD);
  }
}

TEST_CASE("symmetric root carries inverse and log determinant") {
  std::mt19937_64 rng(11);
  for (int p = 1; p <= 6; ++p) {
    const Matrix m = random_psd(rng, p);
    const SymmetricRoot sr = symmetric_root(m);
    CHECK((sr.root * sr.inv_root - Matrix::Identity(p, p)).norm() < 1e-9);
    CHECK(sr.log_det == doctest::Approx(std::log(m.determinant())).epsilon(1e-10));
  }
}

TEST_CASE("Gauss-Legendre rules") {
  for (int n : {1, 2, 5, 16, 64, 1024}) {
    const QuadratureRule& r = gauss_legendre(n);
    double sum = 0.0;
    for (std::size_t j = 0; j < r.size(); ++j) {
      CHECK(r.weights[j] > 0.0);
      CHECK(std::fabs(r.nodes[j]) < 1.0);
      sum += r.weights[j];
    }
    CHECK(sum == doctest::Approx(2.0).epsilon(1e-13));
  }
  // exact for degree 2n - 1
  const QuadratureRule& r = gauss_legendre(5);
  CHECK(r.apply([](double x) { return std::pow(x, 8); }) == doctest::Approx(2.0 / 9.0).epsilon(1e-14));
}

TEST_CASE("integrate_scale reproduces closed-form moments") {
  const auto one = [](double) { return 1.0; };
  for (const ScaleLaw& law : {ScaleLaw::skew_normal(), ScaleLaw::skew_t(4.0), ScaleLaw::skew_t(150.0),
                              ScaleLaw::skew_slash(1.2), ScaleLaw::skew_slash(3.0),
                              ScaleLaw::skew_vgamma(1.0), ScaleLaw::skew_vgamma(60.0)}) {
    CHECK(integrate_scale(one, law) == doctest::Approx(1.0).epsilon(1e-10));
  }
  CHECK(integrate_scale([](double u) { return u; }, ScaleLaw::skew_t(4.0)) ==
        doctest::Approx(1.0).epsilon(1e-10));
  CHECK(integrate_scale([](double u) { return 1.0 / u; }, ScaleLaw::skew_slash(3.0)) ==
        doctest::Approx(1.5).epsilon(1e-10));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> nu_dist(2.5, 200.0);
  std::uniform_real_distribution<double> alpha_dist(2.1, 100.0);
  std::uniform_real_distribution<double> eta_dist(0.6, 100.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double nu = nu_dist(rng);
    // Gam(nu/2, nu/2): E[1/U] = nu/(nu-2), E[log U] = digamma(nu/2) - log(nu/2)
    const ScaleLaw t = ScaleLaw::skew_t(nu);
    CHECK(integrate_scale([](double u) { return 1.0 / u; }, t) ==
          doctest::Approx(nu / (nu - 2.0)).epsilon(1e-7));
    const double alpha = alpha_dist(rng);
    const ScaleLaw s = ScaleLaw::skew_slash(alpha);
    CHECK(integrate_scale([](double u) { return 1.0 / u; }, s) ==
          doctest::Approx(alpha / (alpha - 1.0)).epsilon(1e-7));
    CHECK(integrate_scale([](double u) { return u * u; }, s) ==
          doctest::Approx(alpha / (alpha + 2.0)).epsilon(1e-7));
    const double eta = eta_dist(rng);
    const ScaleLaw g = ScaleLaw::skew_vgamma(eta);
    CHECK(integrate_scale([](double u) { return u * u; }, g) ==
          doctest::Approx(1.0 + 1.0 / eta).epsilon(1e-7));
  }
}

TEST_CASE("integrate_log handles boundary modes and distant mass") {
  // int_0^inf e^{-3s} ds = 1/3, mode on the lower bound
  const LogIntegral a = integrate_log([](double s) { return -3.0 * s; }, 0.0, 700.0, 5.0);
  CHECK(std::exp(a.log_mass) == doctest::Approx(1.0 / 3.0).epsilon(1e-10));
  // Gaussian bump far from the start
  const LogIntegral b = integrate_log([](double s) { return -0.5 * (s - 300.0) * (s - 300.0) / 0.01; },
                                      -745.0, 709.0, 0.0);
  CHECK(b.log_mass == doctest::Approx(std::log(std::sqrt(2.0 * std::numbers::pi * 0.01))).epsilon(1e-10));
}

TEST_CASE("Bessel K") {
  CHECK(bessel_k(0.5, 1.0) == doctest::Approx(0.4610685044).epsilon(1e-10));
  CHECK(bessel_k(0.5, 1.0) == doctest::Approx(std::sqrt(std::numbers::pi / 2.0) * std::exp(-1.0)).epsilon(1e-14));
  CHECK(bessel_k(0.0, 1.0) == doctest::Approx(0.42102443824070833334).epsilon(1e-12));
  CHECK_THROWS_AS(bessel_k(1.0, 0.0), Error);
  CHECK_THROWS_AS(bessel_k(1.0, -1.0), Error);
  // mpmath references for the log-scale path
  CHECK(log_bessel_k(2.3, 45.0) == doctest::Approx(-46.622159606928808477).epsilon(1e-12));
  CHECK(log_bessel_k(0.7, 1e-3) == doctest::Approx(4.8882739014386683186).epsilon(1e-12));
  CHECK(log_bessel_k(60.0, 5.0) == doctest::Approx(128.75740206438645934).epsilon(1e-12));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> order(-6.0, 6.0);
  std::uniform_real_distribution<double> arg(0.05, 80.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double v = order(rng);
    const double x = arg(rng);
    CHECK(log_bessel_k(-v, x) == doctest::Approx(log_bessel_k(v, x)).epsilon(1e-12));
    // K_{v+1} = K_{v-1} + (2v/x) K_v, checked in ratio form to stay in range
    const double lk = log_bessel_k(v, x);
    const double lhs = std::exp(log_bessel_k(v + 1.0, x) - lk);
    const double rhs = std::exp(log_bessel_k(v - 1.0, x) - lk) + 2.0 * v / x;
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
  }
}

TEST_CASE("Student-t cdf") {
  for (double df : {0.5, 1.0, 4.0, 37.0}) CHECK(student_t_cdf(0.0, df) == doctest::Approx(0.5));
  CHECK(student_t_cdf(1.0, 1.0) == doctest::Approx(0.75).epsilon(1e-14));
  // incomplete-beta reference from mpmath
  CHECK(std::fabs(student_t_cdf(2.0, 4.0) - 0.94194173824159220275) <= 1e-10);
  CHECK(log_student_t_cdf(-30.0, 3.5) == doctest::Approx(-11.333268622224354217).epsilon(1e-10));
  CHECK_THROWS_AS(student_t_cdf(1.0, 0.0), Error);
  double prev = 0.0;
  for (double x = -20.0; x <= 20.0; x += 0.25) {
    const double c = student_t_cdf(x, 3.0);
    CHECK(c > prev);
    prev = c;
  }
}
