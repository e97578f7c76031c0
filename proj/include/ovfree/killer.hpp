#pragma once

// Compositions of shifted Bernoulli F-transforms whose derivative vanishes at
// prescribed points of the upper half plane.

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace ovfree {

struct KillerStage {
  double s;  ///< shift
  double r;  ///< Bernoulli radius, > 0
};

struct KillerF {
  std::vector<KillerStage> stages;
  std::vector<std::complex<double>> targets;
};

inline constexpr double kKillerDedupeTol = 1e-9;

/// (z − s) − r²/(z − s)
std::complex<double> bernoulli_stage(double s, double r, std::complex<double> z);

/// Stage j is chosen to kill the image of the j-th distinct target under the
/// stages before it.  Targets closer than kKillerDedupeTol are merged.
KillerF build_killer(const std::vector<std::complex<double>>& targets);

std::complex<double> eval_killer(const KillerF& f, std::complex<double> z);
/// Chain rule product of the stage derivatives 1 + r²/(·)².
std::complex<double> killer_derivative(const KillerF& f, std::complex<double> z);
std::complex<double> killer_second_derivative(const KillerF& f, std::complex<double> z);

struct WitnessReport {
  std::complex<double> point;
  double delta;
  double derivative_abs;
  double max_deviation;       ///< max_θ |f(z + δe^{iθ}) − f(z)|
  double max_deviation_half;  ///< the same at δ/2
  double contact_constant;    ///< max_deviation / δ²
  double scaling_ratio;       ///< max_deviation / max_deviation_half (≈ 4 for quadratic contact)
  bool quadratic_contact;
  std::complex<double> x;     ///< two distinct points with nearby images
  std::complex<double> y;
  double image_distance;
  bool locally_invertible;
};

WitnessReport non_invertibility_witness(const KillerF& f, std::complex<double> z, double delta = 1e-3);

struct HalfPlaneCheck {
  int samples;
  int violations;
  double min_increment;  ///< min Im f(z) − Im z over the samples
};

/// Im f(z) ≥ Im z on random points of the upper half plane.
HalfPlaneCheck halfplane_check(const KillerF& f, int samples, std::uint64_t seed);

/// First `count` points of a fixed dense enumeration of the upper half plane.
std::vector<std::complex<double>> dense_prefix(int count);

/// Finite stand-in for the infinite assembly over a dense sequence: killers
/// for the prefixes of length 1..depth.
struct KillerFamily {
  std::vector<std::complex<double>> points;
  std::vector<KillerF> members;
  std::string note;
};

KillerFamily killer_family(int depth);

}  // namespace ovfree
