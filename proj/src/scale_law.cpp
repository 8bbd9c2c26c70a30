#include "smsnmix/scale_law.hpp"

#include <cmath>
#include <limits>

#include "smsnmix/error.hpp"

namespace smsn {

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::NonFinite: return "NonFinite";
    case Errc::Domain: return "Domain";
    case Errc::NotPSD: return "NotPSD";
    case Errc::Singular: return "Singular";
    case Errc::NonConvergent: return "NonConvergent";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::MomentUndefined: return "MomentUndefined";
    case Errc::EmptyComponent: return "EmptyComponent";
    case Errc::DegenerateInit: return "DegenerateInit";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::Parse: return "Parse";
  }
  return "Unknown";
}

ScaleLaw::ScaleLaw(LawKind kind, double param) : kind_(kind), param_(param) {
  switch (kind_) {
    case LawKind::Degenerate: break;
    case LawKind::GammaInverse: {
      const double a = 0.5 * param_;
      log_norm_ = a * std::log(a) - std::lgamma(a);
      break;
    }
    case LawKind::BetaInverse: log_norm_ = std::log(param_); break;
    case LawKind::Gamma: log_norm_ = param_ * std::log(param_) - std::lgamma(param_); break;
  }
}

ScaleLaw ScaleLaw::default_for(LawKind kind, int p) {
  switch (kind) {
    case LawKind::Degenerate: return skew_normal();
    case LawKind::GammaInverse: return skew_t(10.0);
    case LawKind::BetaInverse: return skew_slash(5.0);
    case LawKind::Gamma: return skew_vgamma(0.5 * p + 1.0);
  }
  return skew_normal();
}

double ScaleLaw::kappa(double u) const noexcept {
  switch (kind_) {
    case LawKind::Degenerate: return 1.0;
    case LawKind::GammaInverse:
    case LawKind::BetaInverse: return 1.0 / u;
    case LawKind::Gamma: return u;
  }
  return 1.0;
}

double ScaleLaw::log_density(double u) const noexcept {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  if (!(u > 0.0)) return kNegInf;
  switch (kind_) {
    case LawKind::Degenerate: return u == 1.0 ? 0.0 : kNegInf;
    case LawKind::GammaInverse: {
      const double a = 0.5 * param_;
      return log_norm_ + (a - 1.0) * std::log(u) - a * u;
    }
    case LawKind::BetaInverse:
      if (u >= 1.0) return u == 1.0 ? log_norm_ : kNegInf;
      return log_norm_ + (param_ - 1.0) * std::log(u);
    case LawKind::Gamma: return log_norm_ + (param_ - 1.0) * std::log(u) - param_ * u;
  }
  return kNegInf;
}

HyperBounds ScaleLaw::bounds(int p) const {
  switch (kind_) {
    case LawKind::Degenerate: return {0.0, 0.0};
    case LawKind::GammaInverse: return {2.1, 200.0};
    case LawKind::BetaInverse: return {1.0 + 1e-6, 100.0};
    case LawKind::Gamma: return {0.5 * p + 0.01, 100.0};
  }
  return {0.0, 0.0};
}

void ScaleLaw::validate(int p) const {
  if (is_degenerate()) return;
  const HyperBounds b = bounds(p);
  if (!std::isfinite(param_) || param_ < b.lower || param_ > b.upper) {
    throw Error(Errc::Domain, name() + " hyperparameter " + std::to_string(param_) +
                                  " outside [" + std::to_string(b.lower) + ", " +
                                  std::to_string(b.upper) + "]");
  }
}

std::string ScaleLaw::name() const { return law_kind_name(kind_); }

LawKind law_kind_from_name(std::string_view name) {
  if (name == "skew-normal" || name == "sn") return LawKind::Degenerate;
  if (name == "skew-t" || name == "st") return LawKind::GammaInverse;
  if (name == "skew-slash" || name == "ss") return LawKind::BetaInverse;
  if (name == "skew-vgamma" || name == "svg") return LawKind::Gamma;
  throw Error(Errc::InvalidArgument, "unknown family '" + std::string(name) + "'");
}

std::string law_kind_name(LawKind kind) {
  switch (kind) {
    case LawKind::Degenerate: return "skew-normal";
    case LawKind::GammaInverse: return "skew-t";
    case LawKind::BetaInverse: return "skew-slash";
    case LawKind::Gamma: return "skew-vgamma";
  }
  return "unknown";
}

bool operator==(const ScaleLaw& a, const ScaleLaw& b) {
  return a.kind() == b.kind() && a.param() == b.param();
}

}  // namespace smsn
