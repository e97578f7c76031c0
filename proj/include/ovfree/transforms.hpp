#pragma once

// The Ω domain, the map K(w) = G(w^{-1}), Bloch-type certification of local
// invertibility around the base points d_n(λ), certified Newton inversion of
// G, and the R-transform R(w) = G^{⟨−1⟩}(w) − w^{-1}.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include "ovfree/numerics.hpp"
#include "ovfree/ovdist.hpp"

namespace ovfree {

/// b = D + T with D block diagonal (2n blocks of size base_dim, even-indexed
/// blocks in the upper half plane, odd-indexed in the lower) and
/// margin = min_j λ_min(|Im b_j|) − ‖T‖ > 0.
struct OmegaPoint {
  int half_dim;
  int block_dim;
  ComplexMatrix D;
  ComplexMatrix T;
  double block_margin;
  double perturbation_norm;
  double margin;
};

enum class OmegaRejection { WrongPattern, PerturbationTooLarge };

struct OmegaReject {
  OmegaRejection reason;
  std::string detail;
};

using OmegaResult = std::variant<OmegaPoint, OmegaReject>;

std::string to_string(OmegaRejection r);

OmegaResult omega_membership(const ComplexMatrix& b, int n, int base_dim = 1);

/// d_n(λ) = iλ·diag(1, −1, 1, −1, …) with blocks of size base_dim.
struct BasePoint {
  int n = 1;
  int base_dim = 1;
  double lambda = 1.0;

  int dim() const noexcept { return 2 * n * base_dim; }
  ComplexMatrix matrix() const;
};

/// K(w) = G(w^{-1})
ComplexMatrix k_map(const OVDistribution& dist, const ComplexMatrix& w);
/// J_K(w) = J_G(w^{-1})·(−w^{-T} ⊗ w^{-1})
ComplexMatrix k_jacobian(const OVDistribution& dist, const ComplexMatrix& w);

struct BlochRadii {
  double r;
  double P;
};

/// r = R²a/(4M), P = R²a²/(8M)
BlochRadii bloch_radii(double R, double a, double M);

struct CertifiedBall {
  ComplexMatrix center;        ///< base point in the domain of K
  ComplexMatrix image_center;  ///< K(center)
  double lambda = 0.0;
  double R = 0.0;
  double a = 0.0;
  double M = 0.0;
  double r = 0.0;
  double P = 0.0;
};

struct CertifyOptions {
  double safety_a = 0.9;
  double safety_M = 1.5;
  std::uint64_t seed = 0x0f7ee;
};

/// Certifies K on B_R(d_n(λ)): a = safety_a·σ_min(J_K)/√m (operator-norm
/// lower bound for ‖DK^{-1}‖^{-1}), M = safety_M·max ‖K(c + y) − K(c)‖ over a
/// Latin-hypercube sample of 2m² directions on ‖y‖ = R.  Throws
/// DerivativeSingular when cond(J_K) exceeds the cap.
CertifiedBall bloch_certify(const OVDistribution& dist, const BasePoint& base, double R, const CertifyOptions& opt = {});

struct InversionOptions {
  double tol = 1e-10;
  int max_iter = 100;
};

/// b with G(b) = target, found by Newton on K(w) = target for w ∈ B_r(center)
/// (steps halved to stay in the ball); b = w^{-1}.  Throws LeftCertifiedBall
/// when target ∉ B_P(K(center)) or the iteration cannot stay in the ball,
/// NoConvergence after max_iter steps.
ComplexMatrix invert_G(const OVDistribution& dist, const ComplexMatrix& target, const CertifiedBall& ball,
                       const std::optional<ComplexMatrix>& guess = std::nullopt, const InversionOptions& opt = {});

/// Plain Newton on G(b) = target from guess_b, with no certificate.
ComplexMatrix invert_G_uncertified(const OVDistribution& dist, const ComplexMatrix& target, const ComplexMatrix& guess_b,
                                   const InversionOptions& opt = {});

ComplexMatrix r_transform(const OVDistribution& dist, const ComplexMatrix& w, const CertifiedBall& ball);

/// min over sampled pairs x ≠ y in B_r(center) of ‖K(x) − K(y)‖ / ‖x − y‖
double injectivity_spot_check(const OVDistribution& dist, const CertifiedBall& ball, int pairs, std::uint64_t seed);

/// Uniform-ish point of B_radius(center) in operator norm.
ComplexMatrix random_ball_point(const ComplexMatrix& center, double radius, std::mt19937_64& rng);

/// ‖LHS − RHS‖ for E[(B − T(x) ⊗ 1_n)^{-1}] = B^{-1} − B^{-1} G(B₀ + B^{-1}) B^{-1},
/// T(t) = diag((t − i)^{-1}, (t + i)^{-1}), B₀ = diag(i, −i) ⊗ 1_n.
/// Throws BNotDominant when ‖B^{-1}‖ ≥ 1.
double block_resolvent_identity_check(const OVDistribution& dist, const ComplexMatrix& B);

}  // namespace ovfree
