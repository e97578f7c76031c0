#pragma once

// Random matrix realizations of B-valued laws over B = M_n(C).
//
// A scalar variable with law μ is realized on C^N as U·diag(quantile nodes)·U*
// with U Haar distributed (or as a scaled GUE matrix for semicircle laws).
// Independent Haar rotations make the realizations asymptotically free, and
// their amplifications 1_n ⊗ X_i are then B-free with respect to
// E = id_n ⊗ tr_N.  Layout: an element of M_n(M_N) is stored as an (nN)-square
// matrix indexed by (i·N + α), so b ∈ M_n embeds as kron(b, I_N).

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ovfree/measures.hpp"
#include "ovfree/numerics.hpp"
#include "ovfree/word.hpp"

namespace ovfree {

std::uint64_t splitmix64(std::uint64_t x);
/// Engine keyed by (seed, stream); independent of the order streams are used.
std::mt19937_64 stream_engine(std::uint64_t seed, std::uint64_t stream);

/// Haar unitary from the QR factorization of a complex Ginibre matrix with the
/// phases of R's diagonal moved into Q.
ComplexMatrix haar_unitary(int N, std::mt19937_64& rng);
/// GUE normalized so that E|H_ij|² = 1/N (semicircle of variance 1).
ComplexMatrix gue_matrix(int N, std::mt19937_64& rng);

enum class Realization {
  HaarRotated,  ///< U diag(nodes) U*, U Haar: asymptotically free
  GUE,          ///< σ·GUE, semicircle laws only
  Diagonal,     ///< diag(nodes): every such variable commutes and coincides
  Permuted,     ///< diag(shuffled nodes): commuting, asymptotically classically independent
};

std::string to_string(Realization r);
Realization realization_from_string(const std::string& s);

struct ModelVariable {
  ScalarMeasure law;
  Realization realization = Realization::HaarRotated;
};

struct MixerFactor {
  enum class Kind { Variable, Constant } kind;
  int variable = 0;  // 0-based
  std::string constant;
};

struct MixerTerm {
  double coefficient = 1.0;
  std::vector<MixerFactor> factors;
};

/// Polynomial in the variables X1..Xk with n×n constant coefficients, written
/// as sums ('+', '-') of products ('*') of X<i>, named constants and real numbers.
struct Mixer {
  std::vector<MixerTerm> terms;
};

Mixer parse_mixer(const std::string& text, int num_vars, const std::map<std::string, ComplexMatrix>& constants);

struct MatrixModelSpec {
  int n = 1;
  int N = 500;
  int trials = 32;
  std::uint64_t seed = 1234;
  std::vector<ModelVariable> vars;
  std::string mixer = "X1";
  std::map<std::string, ComplexMatrix> constants;
};

/// Throws InvalidArgument when the spec is inconsistent (dims, mixer).
void validate(const MatrixModelSpec& spec);

ComplexMatrix sample_scalar_variable(const ModelVariable& var, int N, std::mt19937_64& rng);

/// One Hermitian realization of dimension n·N.
ComplexMatrix sample_matrix_model(const MatrixModelSpec& spec, int N, std::uint64_t seed);

struct MCEstimate {
  ComplexMatrix mean;
  double standard_error = 0.0;  ///< max over entries of the real/imag standard errors
  int trials = 0;
};

MCEstimate summarize_trials(std::span<const ComplexMatrix> per_trial);

/// Realizes every trial of a model once (trial t uses stream t of the seed)
/// and evaluates resolvent functionals on the cached samples, so repeated
/// evaluations share common random numbers.
class MatrixModelSampler {
 public:
  explicit MatrixModelSampler(MatrixModelSpec spec);

  const MatrixModelSpec& spec() const noexcept { return spec_; }

  /// average over trials of id ⊗ tr_N[(b ⊗ 1_N − 1_k ⊗ S)^{-1}]
  MCEstimate estimate_G(const ComplexMatrix& b) const;
  /// derivative of estimate_G in direction h, same samples
  MCEstimate estimate_dG(const ComplexMatrix& b, const ComplexMatrix& h) const;
  /// trial-averaged Jacobian in column-major vec coordinates
  ComplexMatrix jacobian(const ComplexMatrix& b) const;

 private:
  struct Cache;
  void ensure_cache() const;
  std::vector<ComplexMatrix> trial_resolvent_traces(const ComplexMatrix& b) const;

  MatrixModelSpec spec_;
  std::shared_ptr<Cache> cache_;
};

MCEstimate mc_estimate_G(const MatrixModelSpec& spec, const ComplexMatrix& b);

struct MCScalarEstimate {
  cplx mean;
  double standard_error;
  int trials;
};

/// tr_N of a product of resolvents Π_j (z_j − X_{var_j})^{-1} with each X_i
/// realized independently (Haar rotations unless a realization is given).
MCScalarEstimate mc_mixed_moment(const Word& letters, std::span<const ScalarMeasure> laws, int N, int trials,
                                 std::uint64_t seed, Realization realization = Realization::HaarRotated);

}  // namespace ovfree
