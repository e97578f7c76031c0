#pragma once

#include <stdexcept>
#include <string>

namespace ovfree {

enum class Errc {
  SingularMatrix,
  DimensionMismatch,
  RealAxisPoint,
  OutsideResolvent,
  UnsupportedPoint,
  NoConvergence,
  LeftCertifiedBall,
  DerivativeSingular,
  BNotDominant,
  NotDominant,
  FreeModeUnsupportedLaw,
  MarginViolation,
  NonHermitian,
  InvalidArgument,
};

constexpr const char* to_string(Errc code) {
  switch (code) {
    case Errc::SingularMatrix: return "SingularMatrix";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::RealAxisPoint: return "RealAxisPoint";
    case Errc::OutsideResolvent: return "OutsideResolvent";
    case Errc::UnsupportedPoint: return "UnsupportedPoint";
    case Errc::NoConvergence: return "NoConvergence";
    case Errc::LeftCertifiedBall: return "LeftCertifiedBall";
    case Errc::DerivativeSingular: return "DerivativeSingular";
    case Errc::BNotDominant: return "BNotDominant";
    case Errc::NotDominant: return "NotDominant";
    case Errc::FreeModeUnsupportedLaw: return "FreeModeUnsupportedLaw";
    case Errc::MarginViolation: return "MarginViolation";
    case Errc::NonHermitian: return "NonHermitian";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every numerical failure in the library is reported through this type; the
/// code identifies the contract that was violated.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace ovfree
