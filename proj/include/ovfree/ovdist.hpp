#pragma once

// B-valued random variables over B = M_n(C), each presented as an evaluator of
// its matrix Cauchy transform G(b) = E[(b − X ⊗ 1_k)^{-1}] at points b of
// dimension k·n.  Amplification follows amplify(): b ∈ M_k(M_n) with n×n blocks.

#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "ovfree/matrix_model.hpp"
#include "ovfree/measures.hpp"
#include "ovfree/moments.hpp"
#include "ovfree/numerics.hpp"

namespace ovfree {

/// X = x·1_n for a scalar variable x with law μ.
struct ScalarEmbedded {
  ScalarMeasure law;
};

/// X = b0, a constant Hermitian element of B.
struct DiracB {
  ComplexMatrix b0;
};

/// Centered B-valued semicircular with covariance η(b) = Σ_j a_j b a_j*.
struct OVSemicircular {
  std::vector<ComplexMatrix> coeffs;
};

/// X = diag(X₁, …, X_n) with scalar laws and an independence relation.
struct DiagonalIndependent {
  std::vector<ScalarMeasure> laws;
  IndependenceMode mode = IndependenceMode::Free;
  bool allow_mc = false;
  MonteCarloSettings mc{};
  double series_tol = 1e-13;
  /// matrix model used only when allow_mc is set
  std::shared_ptr<const MatrixModelSampler> sampler;
};

struct MatrixModelBackend {
  std::shared_ptr<const MatrixModelSampler> sampler;
};

class OVDistribution {
 public:
  using Backend = std::variant<ScalarEmbedded, DiracB, OVSemicircular, DiagonalIndependent, MatrixModelBackend>;

  OVDistribution(int base_dim, Backend backend);

  static OVDistribution scalar(ScalarMeasure mu, int base_dim = 1);
  static OVDistribution dirac(ComplexMatrix b0);
  static OVDistribution semicircular(std::vector<ComplexMatrix> coeffs);
  static OVDistribution diagonal(std::vector<ScalarMeasure> laws, IndependenceMode mode, bool allow_mc = false,
                                 MonteCarloSettings mc = {});
  static OVDistribution matrix_model(MatrixModelSpec spec);

  int base_dim() const noexcept { return base_dim_; }
  const Backend& backend() const noexcept { return backend_; }
  template <class T>
  const T* as() const noexcept {
    return std::get_if<T>(&backend_);
  }
  bool is_monte_carlo() const noexcept;
  std::string kind() const;

 private:
  int base_dim_;
  Backend backend_;
};

/// η^{(k)}(b) = Σ_j (1_k ⊗ a_j) b (1_k ⊗ a_j)*
ComplexMatrix covariance_map(const OVSemicircular& s, const ComplexMatrix& b);

inline constexpr double kFixedPointTol = 1e-12;
inline constexpr int kFixedPointMaxIter = 10000;

ComplexMatrix eval_G(const OVDistribution& dist, const ComplexMatrix& b);
/// dG(b)[h] = −E[(b − X)^{-1} h (b − X)^{-1}]
ComplexMatrix eval_dG(const OVDistribution& dist, const ComplexMatrix& b, const ComplexMatrix& h);
/// Jacobian of G at b in column-major vec coordinates (dim² × dim²).
ComplexMatrix jacobian_G(const OVDistribution& dist, const ComplexMatrix& b);

struct GEstimate {
  ComplexMatrix value;
  double standard_error = 0.0;  ///< zero for the exact backends
};

GEstimate eval_G_estimate(const OVDistribution& dist, const ComplexMatrix& b);

}  // namespace ovfree
