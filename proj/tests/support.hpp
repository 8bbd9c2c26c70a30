#pragma once

#include <cmath>
#include <random>

#include "smsnmix/family.hpp"

namespace smsn::testing {

inline Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// Component parameters of the two-component bivariate simulation design.
inline ComponentParams design_component(int g, bool separated = true) {
  ComponentParams c;
  if (g == 0) {
    c.mu = vec({-5.0, 0.0});
    c.sigma = mat2(3.0, -1.0, -1.0, 3.0);
    c.lambda = vec({3.0, 6.0});
  } else {
    c.mu = vec({separated ? -3.0 : -1.0, 0.0});
    c.sigma = mat2(3.0, 1.0, 1.0, 3.0);
    c.lambda = vec({5.0, 4.0});
  }
  return c;
}

inline Matrix random_spd(std::mt19937_64& rng, int p, double ridge = 0.3) {
  std::normal_distribution<double> n01;
  Matrix a(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) a(i, j) = n01(rng);
  Matrix m = a * a.transpose() / p + ridge * Matrix::Identity(p, p);
  return 0.5 * (m + m.transpose());
}

inline ComponentParams random_component(std::mt19937_64& rng, int p, double skew_scale = 2.0) {
  std::normal_distribution<double> n01;
  ComponentParams c;
  c.mu.resize(p);
  c.lambda.resize(p);
  for (int j = 0; j < p; ++j) {
    c.mu[j] = n01(rng);
    c.lambda[j] = skew_scale * n01(rng);
  }
  c.sigma = random_spd(rng, p);
  return c;
}

// Running mean and standard error of a scalar Monte Carlo estimate.
struct Running {
  double n = 0.0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    n += 1.0;
    const double d = x - mean;
    mean += d / n;
    m2 += d * (x - mean);
  }
  double se() const { return std::sqrt(m2 / (n - 1.0) / n); }
};

}  // namespace smsn::testing
