#pragma once

#include <string>
#include <string_view>

namespace smsn {

/// Family of the scaling variable U and its link kappa = K(U).
enum class LawKind {
  Degenerate,    // skew-normal: U = 1, kappa = u
  GammaInverse,  // skew-t: U ~ Gam(nu/2, nu/2), kappa = 1/u
  BetaInverse,   // skew-slash: U ~ Beta(alpha, 1), kappa = 1/u
  Gamma,         // skew-variance-gamma: U ~ Gam(eta, gamma^2/2) with gamma^2 = 2 eta, kappa = u
};

struct HyperBounds {
  double lower;
  double upper;
};

/// Scaling-variable law with its single free hyperparameter.  For the Gamma
/// law the rate is tied to the shape (gamma^2 = 2 eta) so that E[U] = 1.
class ScaleLaw {
 public:
  ScaleLaw() = default;

  static ScaleLaw skew_normal() { return ScaleLaw(LawKind::Degenerate, 0.0); }
  static ScaleLaw skew_t(double nu) { return ScaleLaw(LawKind::GammaInverse, nu); }
  static ScaleLaw skew_slash(double alpha) { return ScaleLaw(LawKind::BetaInverse, alpha); }
  static ScaleLaw skew_vgamma(double eta) { return ScaleLaw(LawKind::Gamma, eta); }
  /// Skew-Laplace is the eta = 1 member of the variance-gamma law.
  static ScaleLaw skew_laplace() { return ScaleLaw(LawKind::Gamma, 1.0); }

  /// Law of the given kind at its mid-range starting value for dimension p.
  static ScaleLaw default_for(LawKind kind, int p);

  LawKind kind() const noexcept { return kind_; }
  double param() const noexcept { return param_; }
  ScaleLaw with_param(double value) const { return ScaleLaw(kind_, value); }

  bool is_degenerate() const noexcept { return kind_ == LawKind::Degenerate; }
  int free_params() const noexcept { return is_degenerate() ? 0 : 1; }

  /// gamma^2 for the variance-gamma law (2 eta); 0 otherwise.
  double gamma2() const noexcept { return kind_ == LawKind::Gamma ? 2.0 * param_ : 0.0; }

  double kappa(double u) const noexcept;
  /// log h(u; theta); -inf outside the support.
  double log_density(double u) const noexcept;

  /// Admissible hyperparameter interval for data of dimension p.
  HyperBounds bounds(int p) const;
  /// Throws Error(Domain) when the hyperparameter violates bounds(p).
  void validate(int p) const;

  std::string name() const;

 private:
  ScaleLaw(LawKind kind, double param);

  LawKind kind_ = LawKind::Degenerate;
  double param_ = 0.0;
  double log_norm_ = 0.0;  // parameter-only part of log h
};

/// Accepts "skew-normal", "skew-t", "skew-slash", "skew-vgamma".
LawKind law_kind_from_name(std::string_view name);
std::string law_kind_name(LawKind kind);

bool operator==(const ScaleLaw& a, const ScaleLaw& b);

}  // namespace smsn
