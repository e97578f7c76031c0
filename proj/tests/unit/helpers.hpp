#pragma once

#include <random>

#include "ovfree/numerics.hpp"

namespace ovfree::test {

inline ComplexMatrix random_matrix(int m, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  ComplexMatrix x(m, m);
  for (int c = 0; c < m; ++c)
    for (int r = 0; r < m; ++r) {
      const double re = normal(rng);
      const double im = normal(rng);
      x(r, c) = cplx(re, im);
    }
  return x;
}

inline ComplexMatrix random_hermitian(int m, std::mt19937_64& rng, double scale = 1.0) {
  const ComplexMatrix x = random_matrix(m, rng, scale);
  return (x + x.adjoint()) * 0.5;
}

/// Hermitian part H plus i·(margin·1 + positive semidefinite)
inline ComplexMatrix random_upper(int m, std::mt19937_64& rng, double margin = 0.5, double scale = 1.0) {
  const ComplexMatrix h = random_hermitian(m, rng, scale);
  const ComplexMatrix g = random_matrix(m, rng, 0.3 * scale);
  return h + cplx(0.0, 1.0) * (g * g.adjoint() + margin * ComplexMatrix::Identity(m, m));
}

inline ComplexMatrix scalar_matrix(cplx z, int m) { return z * ComplexMatrix::Identity(m, m); }

inline double dist(const ComplexMatrix& a, const ComplexMatrix& b) { return operator_norm(ComplexMatrix(a - b)); }

}  // namespace ovfree::test
