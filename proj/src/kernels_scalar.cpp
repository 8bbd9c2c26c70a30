#include "smsnmix/kernels.hpp"

#include <cmath>
#include <limits>

namespace smsn::kernels::scalar {

double exp_weights(std::span<const double> log_terms, std::span<const double> base, double shift,
                   std::span<double> out) {
  double total = 0.0;
  for (std::size_t j = 0; j < log_terms.size(); ++j) {
    const double z = log_terms[j] - shift;
    out[j] = z < -708.0 ? 0.0 : base[j] * std::exp(z);
    total += out[j];
  }
  return total;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) acc += a[j] * b[j];
  return acc;
}

void nearest_centers(std::span<const double> points, std::span<const double> centers, int dim,
                     std::span<int> labels, std::span<double> dist2) {
  const std::size_t n = points.size() / static_cast<std::size_t>(dim);
  const std::size_t k = centers.size() / static_cast<std::size_t>(dim);
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (std::size_t c = 0; c < k; ++c) {
      double d = 0.0;
      for (int t = 0; t < dim; ++t) {
        const double diff = points[i * dim + t] - centers[c * dim + t];
        d += diff * diff;
      }
      if (d < best) {
        best = d;
        arg = static_cast<int>(c);
      }
    }
    labels[i] = arg;
    dist2[i] = best;
  }
}

}  // namespace smsn::kernels::scalar
