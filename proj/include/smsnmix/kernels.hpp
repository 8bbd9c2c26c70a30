#pragma once

// Data-parallel inner loops.  Each kernel has a scalar reference
// implementation and an AVX2/FMA variant; the variant is chosen once at
// runtime from CPUID and can be pinned through SMSNMIX_SIMD=scalar|avx2.

#include <cstddef>
#include <span>

namespace smsn::kernels {

enum class Isa { Scalar, Avx2 };

bool avx2_available() noexcept;
Isa active_isa() noexcept;
/// Pins the dispatch target; falls back to Scalar if Avx2 is unavailable.
void set_isa(Isa isa) noexcept;
const char* isa_name(Isa isa) noexcept;

/// out[j] = base[j] * exp(log_terms[j] - shift); returns sum_j out[j].
/// Terms with log_terms[j] - shift < -708 contribute exactly zero.
double exp_weights(std::span<const double> log_terms, std::span<const double> base,
                   double shift, std::span<double> out);

double dot(std::span<const double> a, std::span<const double> b);

/// For row-major points (n x dim) and centers (k x dim), writes the index of
/// the nearest center (lowest index on ties) and the squared distance.
void nearest_centers(std::span<const double> points, std::span<const double> centers, int dim,
                     std::span<int> labels, std::span<double> dist2);

namespace scalar {
double exp_weights(std::span<const double> log_terms, std::span<const double> base, double shift,
                   std::span<double> out);
double dot(std::span<const double> a, std::span<const double> b);
void nearest_centers(std::span<const double> points, std::span<const double> centers, int dim,
                     std::span<int> labels, std::span<double> dist2);
}  // namespace scalar

namespace avx2 {
double exp_weights(std::span<const double> log_terms, std::span<const double> base, double shift,
                   std::span<double> out);
double dot(std::span<const double> a, std::span<const double> b);
void nearest_centers(std::span<const double> points, std::span<const double> centers, int dim,
                     std::span<int> labels, std::span<double> dist2);
}  // namespace avx2

}  // namespace smsn::kernels
