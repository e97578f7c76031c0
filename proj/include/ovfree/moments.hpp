#pragma once

// Mixed moments of resolvent words φ((z₁ − X_{i₁})^{-1} ⋯ (z_k − X_{i_k})^{-1})
// under equal, classical, Boolean and free independence, and the matrix
// Cauchy transform of diag(X₁, …, X_n) by a Neumann series in those moments.

#include <cstdint>
#include <span>
#include <vector>

#include "ovfree/matrix_model.hpp"
#include "ovfree/measures.hpp"
#include "ovfree/numerics.hpp"
#include "ovfree/word.hpp"

namespace ovfree {

/// ∏_j (z_j − t)^{-1} = Σ_p Σ_{l=1}^{m_p} coefficients[l−1]·(z_p − t)^{−l}
struct PartialFraction {
  struct Pole {
    cplx z;
    int multiplicity;
    std::vector<cplx> coefficients;
  };
  std::vector<Pole> poles;

  cplx evaluate(double t) const;
};

/// Poles closer than this (relative to max(1, |z|)) are treated as one.
inline constexpr double kPoleMergeTol = 1e-12;

PartialFraction partial_fractions(std::span<const cplx> zs);

/// φ(∏_j (z_j − X)^{-1}) for one variable X with law μ.  Uses the partial
/// fraction expansion against g and its derivatives, and falls back to direct
/// quadrature of the product when the expansion cancels badly.
cplx single_var_moment(const ScalarMeasure& mu, std::span<const cplx> zs);

struct MonteCarloSettings {
  int N = 400;
  int trials = 32;
  std::uint64_t seed = 1234;
};

struct ResolventWord {
  Word letters;
  std::vector<ScalarMeasure> laws;
  IndependenceMode mode = IndependenceMode::Free;
  /// allow free mode for non-Cauchy laws by estimating on a matrix model
  bool mc_delegation = false;
  MonteCarloSettings mc{};
};

struct MomentValue {
  cplx value;
  double standard_error = 0.0;
  bool monte_carlo = false;
};

/// Throws InvalidArgument for malformed words and FreeModeUnsupportedLaw for
/// free words over non-Cauchy laws without MC delegation.
MomentValue evaluate(const ResolventWord& word);

cplx mixed_moment(const Word& letters, std::span<const ScalarMeasure> laws, IndependenceMode mode);

struct FbcsReport {
  cplx equal;
  cplx classical;
  cplx boolean;
  cplx free;
  cplx reference;  ///< ∏ (z_j + i)^{-1}

  double max_deviation() const;
};

/// All four modes for Cauchy(0, 1) variables against the fixed value.
FbcsReport fbcs_check(std::span<const cplx> zs, std::span<const int> vars);

struct NeumannResult {
  ComplexMatrix G;
  double tail_bound;
  double q;    ///< ‖|B′|‖₂ / min Im d
  int p_max;
};

/// E[(B − X)^{-1}] for X = diag(X_{r mod n}) acting on dim(B) = k·n rows,
/// with B = D + B′ split into diagonal and off-diagonal parts and
/// (B − X)^{-1} = Σ_p (−1)^p R (B′R)^p, R = (D − X)^{-1}.
/// Throws NotDominant when Im D ⊁ 0 or q ≥ 1.
NeumannResult matrix_G_via_neumann(const ComplexMatrix& B, std::span<const ScalarMeasure> laws, IndependenceMode mode,
                                   int p_max);

/// Series truncated at the smallest order whose tail bound is ≤ tol.
NeumannResult matrix_G_via_neumann_to_tol(const ComplexMatrix& B, std::span<const ScalarMeasure> laws,
                                          IndependenceMode mode, double tol);

/// Smallest p with ρ q^{p+1}/(1 − q) ≤ tol (capped at 200).
int neumann_order_for(double q, double rho, double tol);

/// Same series, every path expanded into its own mixed_moment call.  Only
/// for small p; used to cross-check the dynamic program.
ComplexMatrix matrix_G_via_path_enumeration(const ComplexMatrix& B, std::span<const ScalarMeasure> laws,
                                            IndependenceMode mode, int p_max);

}  // namespace ovfree
