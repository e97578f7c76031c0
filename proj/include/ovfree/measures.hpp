#pragma once

// Scalar probability laws on R and their Cauchy / F transforms.
//
// Continuous laws are integrated through a smoothing substitution t = t(θ)
// on a finite θ-interval (t = s + γ tan θ for Cauchy, t = 2σ sin θ for the
// semicircle, t = r sin θ for the arcsine law), so every expectation reduces
// to a finite adaptive Gauss–Kronrod integral plus a finite atomic sum.

#include <cmath>
#include <complex>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ovfree/error.hpp"
#include "ovfree/numerics.hpp"
#include "ovfree/quadrature.hpp"

namespace ovfree {

struct CauchyLaw {
  double location = 0.0;
  double scale = 1.0;
};
struct SemicircleLaw {
  double variance = 1.0;
};
/// ½δ_{center−radius} + ½δ_{center+radius}
struct BernoulliLaw {
  double radius = 1.0;
  double center = 0.0;
};
/// density 1/(π√(r²−t²)) on [−r, r]
struct ArcsineLaw {
  double radius = 1.0;
};
struct PointMass {
  double position = 0.0;
};
struct Atom {
  double position;
  double weight;
};
struct AtomicLaw {
  std::vector<Atom> atoms;
};
struct QuadratureLaw {
  std::vector<double> nodes;
  std::vector<double> weights;
};

class ScalarMeasure;

/// A continuous law restricted to [−cutoff, cutoff]; the removed mass sits
/// as an atom at 0.
struct TruncatedLaw {
  std::shared_ptr<const ScalarMeasure> base;
  double cutoff;
};

class ScalarMeasure {
 public:
  using Variant = std::variant<CauchyLaw, SemicircleLaw, BernoulliLaw, ArcsineLaw, PointMass, AtomicLaw,
                               QuadratureLaw, TruncatedLaw>;

  ScalarMeasure() : v_(PointMass{0.0}) {}
  // Validating constructor; throws InvalidArgument on broken invariants.
  ScalarMeasure(Variant v);  // NOLINT(google-explicit-constructor)

  static ScalarMeasure cauchy(double location = 0.0, double scale = 1.0) { return {CauchyLaw{location, scale}}; }
  static ScalarMeasure semicircle(double variance = 1.0) { return {SemicircleLaw{variance}}; }
  static ScalarMeasure bernoulli(double radius = 1.0, double center = 0.0) { return {BernoulliLaw{radius, center}}; }
  static ScalarMeasure arcsine(double radius = 1.0) { return {ArcsineLaw{radius}}; }
  static ScalarMeasure point_mass(double position = 0.0) { return {PointMass{position}}; }
  static ScalarMeasure atomic(std::vector<Atom> atoms) { return {AtomicLaw{std::move(atoms)}}; }

  const Variant& variant() const noexcept { return v_; }
  template <class T>
  const T* as() const noexcept {
    return std::get_if<T>(&v_);
  }
  template <class T>
  bool is() const noexcept {
    return std::holds_alternative<T>(v_);
  }

  bool is_discrete() const noexcept;
  bool is_cauchy_family() const noexcept { return is<CauchyLaw>(); }
  std::string name() const;

  /// All atoms (position, weight) including the defect atom of a truncation.
  std::vector<Atom> atoms() const;

  /// Smooth parametrization of the absolutely continuous part: t(θ) with
  /// density·dt/dθ = weight(θ) on [theta_lo, theta_hi].  Empty for discrete laws.
  struct Substitution {
    enum class Kind { Tangent, Sine, SineSquaredCos } kind;
    double shift;
    double scale;
    double theta_lo;
    double theta_hi;
    double t(double theta) const;
    double weight(double theta) const;
  };
  std::optional<Substitution> continuous_part() const;

  friend bool operator==(const ScalarMeasure& a, const ScalarMeasure& b);

 private:
  Variant v_;
};

/// ∫ f(t) dμ(t): atomic sum plus substituted Gauss–Kronrod integral.
template <class F>
auto expect(const ScalarMeasure& mu, F&& f, const QuadratureOptions& opt = {}) {
  using T = std::decay_t<decltype(f(0.0))>;
  std::optional<T> acc;
  auto add = [&](const T& term) {
    if (acc) *acc = *acc + term;
    else acc = term;
  };
  for (const Atom& a : mu.atoms()) add(T(f(a.position) * a.weight));
  if (auto sub = mu.continuous_part()) {
    if (sub->theta_hi > sub->theta_lo) {
      auto integrand = [&](double theta) -> T { return T(f(sub->t(theta)) * sub->weight(theta)); };
      add(integrate(integrand, sub->theta_lo, sub->theta_hi, opt).value);
    }
  }
  return *acc;
}

/// g(z) = ∫ (z − t)^{-1} dμ(t)
cplx g_scalar(const ScalarMeasure& mu, cplx z);
/// F(z) = 1/g(z), defined on the upper half plane.
cplx f_scalar(const ScalarMeasure& mu, cplx z);
/// m-th derivative of g: (−1)^m m! ∫ (z − t)^{−(m+1)} dμ(t).
cplx g_derivative(const ScalarMeasure& mu, cplx z, int order);

/// μ([lo, hi]) for the closed interval.
double interval_mass(const ScalarMeasure& mu, double lo, double hi);
/// μ((−∞, x]).
double cdf(const ScalarMeasure& mu, double x);

struct TruncationResult {
  ScalarMeasure truncated;
  double retained_mass;
  double cutoff;
};

/// μ restricted to [−k, k] plus an atom of the missing mass at 0.
TruncationResult truncate(const ScalarMeasure& mu, double k);

inline constexpr long kTightnessSearchMax = 1L << 20;

/// Smallest integer N ≤ 2²⁰ with μ([−N, N]) > 1 − ε for every member, or
/// nullopt when the family is not tight at that level.
std::optional<long> tightness_cutoff(std::span<const ScalarMeasure> family, double eps);

/// Generalized inverse of the CDF at p ∈ (0, 1) (left-continuous; ties go
/// to the smaller atom).
double quantile(const ScalarMeasure& mu, double p);
/// quantile((j − ½)/N), j = 1..N
std::vector<double> quantile_nodes(const ScalarMeasure& mu, int N);

}  // namespace ovfree
