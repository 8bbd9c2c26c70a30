#pragma once

#include <stdexcept>
#include <string>

namespace smsn {

enum class Errc {
  NonFinite,
  Domain,
  NotPSD,
  Singular,
  NonConvergent,
  DimensionMismatch,
  MomentUndefined,
  EmptyComponent,
  DegenerateInit,
  InvalidArgument,
  Parse,
};

const char* errc_name(Errc code) noexcept;

/// Every failure surfaced by the library carries one of the codes above so
/// callers (the CLI in particular) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace smsn
