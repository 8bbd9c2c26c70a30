// Compiled with -mavx2 -mfma; only reached through the runtime dispatcher
// after CPUID has confirmed both extensions.

#include "smsnmix/kernels.hpp"

#include <immintrin.h>

#include <cmath>
#include <limits>

namespace smsn::kernels::avx2 {
namespace {

// exp(x) for x in [-708, 709]: x = n ln2 + r with |r| <= ln2/2, then a
// degree-13 Taylor polynomial for exp(r) (truncation below 5e-18) and an
// exponent-field scale by 2^n.
inline __m256d exp_pd(__m256d x) {
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634074);
  const __m256d ln2_hi = _mm256_set1_pd(6.93145751953125e-1);
  const __m256d ln2_lo = _mm256_set1_pd(1.42860682030941723212e-6);

  x = _mm256_min_pd(x, _mm256_set1_pd(709.0));
  x = _mm256_max_pd(x, _mm256_set1_pd(-708.0));

  const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, log2e),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, ln2_hi, x);
  r = _mm256_fnmadd_pd(n, ln2_lo, r);

  static constexpr double kInvFact[14] = {
      1.0,
      1.0,
      1.0 / 2.0,
      1.0 / 6.0,
      1.0 / 24.0,
      1.0 / 120.0,
      1.0 / 720.0,
      1.0 / 5040.0,
      1.0 / 40320.0,
      1.0 / 362880.0,
      1.0 / 3628800.0,
      1.0 / 39916800.0,
      1.0 / 479001600.0,
      1.0 / 6227020800.0,
  };
  __m256d p = _mm256_set1_pd(kInvFact[13]);
  for (int k = 12; k >= 0; --k) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(kInvFact[k]));

  const __m128i ni = _mm256_cvtpd_epi32(n);
  const __m128i biased = _mm_add_epi32(ni, _mm_set1_epi32(1023));
  const __m256i bits = _mm256_slli_epi64(_mm256_cvtepi32_epi64(biased), 52);
  return _mm256_mul_pd(p, _mm256_castsi256_pd(bits));
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

}  // namespace

double exp_weights(std::span<const double> log_terms, std::span<const double> base, double shift,
                   std::span<double> out) {
  const std::size_t n = log_terms.size();
  const __m256d vshift = _mm256_set1_pd(shift);
  const __m256d floor = _mm256_set1_pd(-708.0);
  __m256d acc = _mm256_setzero_pd();
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    const __m256d z = _mm256_sub_pd(_mm256_loadu_pd(&log_terms[j]), vshift);
    const __m256d keep = _mm256_cmp_pd(z, floor, _CMP_GE_OQ);
    __m256d w = _mm256_mul_pd(_mm256_loadu_pd(&base[j]), exp_pd(z));
    w = _mm256_and_pd(w, keep);
    _mm256_storeu_pd(&out[j], w);
    acc = _mm256_add_pd(acc, w);
  }
  double total = hsum(acc);
  for (; j < n; ++j) {
    const double z = log_terms[j] - shift;
    out[j] = z < -708.0 ? 0.0 : base[j] * std::exp(z);
    total += out[j];
  }
  return total;
}

double dot(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(&a[j]), _mm256_loadu_pd(&b[j]), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(&a[j + 4]), _mm256_loadu_pd(&b[j + 4]), acc1);
  }
  for (; j + 4 <= n; j += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(&a[j]), _mm256_loadu_pd(&b[j]), acc0);
  double total = hsum(_mm256_add_pd(acc0, acc1));
  for (; j < n; ++j) total += a[j] * b[j];
  return total;
}

void nearest_centers(std::span<const double> points, std::span<const double> centers, int dim,
                     std::span<int> labels, std::span<double> dist2) {
  const std::size_t d = static_cast<std::size_t>(dim);
  const std::size_t n = points.size() / d;
  const std::size_t k = centers.size() / d;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d best = _mm256_set1_pd(std::numeric_limits<double>::infinity());
    __m256d arg = _mm256_setzero_pd();
    for (std::size_t c = 0; c < k; ++c) {
      __m256d acc = _mm256_setzero_pd();
      for (std::size_t t = 0; t < d; ++t) {
        const __m256d pt = _mm256_set_pd(points[(i + 3) * d + t], points[(i + 2) * d + t],
                                         points[(i + 1) * d + t], points[i * d + t]);
        const __m256d diff = _mm256_sub_pd(pt, _mm256_set1_pd(centers[c * d + t]));
        // Same accumulation order as the scalar kernel, without contraction.
        acc = _mm256_add_pd(acc, _mm256_mul_pd(diff, diff));
      }
      const __m256d better = _mm256_cmp_pd(acc, best, _CMP_LT_OQ);
      best = _mm256_blendv_pd(best, acc, better);
      arg = _mm256_blendv_pd(arg, _mm256_set1_pd(static_cast<double>(c)), better);
    }
    alignas(32) double b[4];
    alignas(32) double a[4];
    _mm256_store_pd(b, best);
    _mm256_store_pd(a, arg);
    for (int l = 0; l < 4; ++l) {
      dist2[i + l] = b[l];
      labels[i + l] = static_cast<int>(a[l]);
    }
  }
  if (i < n) {
    scalar::nearest_centers(points.subspan(i * d), centers, dim, labels.subspan(i),
                            dist2.subspan(i));
  }
}

}  // namespace smsn::kernels::avx2
