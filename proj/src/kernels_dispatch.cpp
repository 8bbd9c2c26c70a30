#include <atomic>
#include <cstdlib>
#include <string_view>

#include "smsnmix/kernels.hpp"

namespace smsn::kernels {
namespace {

Isa detect() noexcept {
  if (const char* env = std::getenv("SMSNMIX_SIMD")) {
    if (std::string_view(env) == "scalar") return Isa::Scalar;
  }
  return avx2_available() ? Isa::Avx2 : Isa::Scalar;
}

std::atomic<Isa>& current() noexcept {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

bool avx2_available() noexcept {
#if defined(__x86_64__) || defined(__i386__)
  static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok;
#else
  return false;
#endif
}

Isa active_isa() noexcept { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) noexcept {
  if (isa == Isa::Avx2 && !avx2_available()) isa = Isa::Scalar;
  current().store(isa, std::memory_order_relaxed);
}

const char* isa_name(Isa isa) noexcept { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

double exp_weights(std::span<const double> log_terms, std::span<const double> base, double shift,
                   std::span<double> out) {
#if defined(SMSNMIX_HAVE_AVX2)
  if (active_isa() == Isa::Avx2) return avx2::exp_weights(log_terms, base, shift, out);
#endif
  return scalar::exp_weights(log_terms, base, shift, out);
}

double dot(std::span<const double> a, std::span<const double> b) {
#if defined(SMSNMIX_HAVE_AVX2)
  if (active_isa() == Isa::Avx2) return avx2::dot(a, b);
#endif
  return scalar::dot(a, b);
}

void nearest_centers(std::span<const double> points, std::span<const double> centers, int dim,
                     std::span<int> labels, std::span<double> dist2) {
#if defined(SMSNMIX_HAVE_AVX2)
  if (active_isa() == Isa::Avx2) return avx2::nearest_centers(points, centers, dim, labels, dist2);
#endif
  scalar::nearest_centers(points, centers, dim, labels, dist2);
}

}  // namespace smsn::kernels
