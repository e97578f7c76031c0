#pragma once

// Dense complex linear algebra shared by every other module.  Everything here
// is a free function over Eigen expressions; the scalar type is carried by the
// argument, so the same code serves double and long double matrices.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <limits>

#include "ovfree/error.hpp"

namespace ovfree {

using cplx = std::complex<double>;

template <class Real>
using CMatrix = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, Eigen::Dynamic>;
template <class Real>
using CVector = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, 1>;

using ComplexMatrix = CMatrix<double>;
using ComplexVector = CVector<double>;

inline constexpr double kConditionCap = 1e14;
inline constexpr double kResidualTol = 1e-10;

template <class Derived>
using PlainOf = typename Derived::PlainObject;

template <class Derived>
using RealOf = typename Eigen::NumTraits<typename Derived::Scalar>::Real;

template <class Derived>
bool is_square(const Eigen::MatrixBase<Derived>& x) {
  return x.rows() == x.cols();
}

template <class Derived>
void require_square(const Eigen::MatrixBase<Derived>& x, const char* who) {
  if (!is_square(x)) throw Error(Errc::DimensionMismatch, std::string(who) + ": matrix is not square");
}

template <class Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& x) {
  return x.allFinite();
}

/// max row sum of moduli
template <class Derived>
RealOf<Derived> inf_norm(const Eigen::MatrixBase<Derived>& x) {
  if (x.size() == 0) return 0;
  return x.cwiseAbs().rowwise().sum().maxCoeff();
}

template <class Derived>
RealOf<Derived> operator_norm(const Eigen::MatrixBase<Derived>& x) {
  if (x.size() == 0) return 0;
  if (x.rows() == 1 && x.cols() == 1) return std::abs(x(0, 0));
  Eigen::JacobiSVD<PlainOf<Derived>> svd(x.eval());
  return svd.singularValues()(0);
}

template <class Derived>
RealOf<Derived> smallest_singular_value(const Eigen::MatrixBase<Derived>& x) {
  Eigen::JacobiSVD<PlainOf<Derived>> svd(x.eval());
  return svd.singularValues()(svd.singularValues().size() - 1);
}

/// Inverse with a condition-number guard.  Throws SingularMatrix when the LU
/// reciprocal-condition estimate exceeds kConditionCap or the residual check
/// ‖x·y − I‖∞ ≤ kResidualTol·‖x‖∞·‖y‖∞ fails after one refinement step.
template <class Derived>
PlainOf<Derived> inverse(const Eigen::MatrixBase<Derived>& x) {
  using Plain = PlainOf<Derived>;
  using Real = RealOf<Derived>;
  require_square(x, "inverse");
  if (!all_finite(x)) throw Error(Errc::SingularMatrix, "inverse: non-finite entries");
  const Eigen::Index m = x.rows();
  if (m == 1) {
    const auto v = x(0, 0);
    if (v == typename Derived::Scalar(0)) throw Error(Errc::SingularMatrix, "inverse: zero scalar");
    Plain out(1, 1);
    out(0, 0) = typename Derived::Scalar(1) / v;
    return out;
  }
  Eigen::PartialPivLU<Plain> lu(x.eval());
  const Real rcond = lu.rcond();
  if (!(rcond > Real(1) / Real(kConditionCap)))
    throw Error(Errc::SingularMatrix, "inverse: condition estimate exceeds cap");
  Plain y = lu.inverse();
  const Plain eye = Plain::Identity(m, m);
  auto residual_ok = [&](const Plain& cand) {
    return inf_norm(x * cand - eye) <= Real(kResidualTol) * inf_norm(x) * inf_norm(cand);
  };
  if (!residual_ok(y)) {
    y += lu.solve(eye - x * y);
    if (!residual_ok(y)) throw Error(Errc::SingularMatrix, "inverse: residual check failed");
  }
  if (!all_finite(y)) throw Error(Errc::SingularMatrix, "inverse: non-finite result");
  return y;
}

/// ℑ(x) = (x − x*)/(2i), Hermitian by construction.
template <class Derived>
PlainOf<Derived> imag_part(const Eigen::MatrixBase<Derived>& x) {
  require_square(x, "imag_part");
  using S = typename Derived::Scalar;
  PlainOf<Derived> out = (x - x.adjoint()) / S(0, 2);
  // symmetrize away rounding so eigen-solvers see an exactly Hermitian input
  return (out + out.adjoint()) / RealOf<Derived>(2);
}

template <class Derived>
PlainOf<Derived> real_part(const Eigen::MatrixBase<Derived>& x) {
  require_square(x, "real_part");
  return (x + x.adjoint()) / RealOf<Derived>(2);
}

template <class Derived>
PlainOf<Derived> hermitian_part(const Eigen::MatrixBase<Derived>& x) {
  return real_part(x);
}

template <class Derived>
RealOf<Derived> min_hermitian_eigenvalue(const Eigen::MatrixBase<Derived>& h) {
  Eigen::SelfAdjointEigenSolver<PlainOf<Derived>> es(h.eval(), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

template <class Derived>
RealOf<Derived> max_hermitian_eigenvalue(const Eigen::MatrixBase<Derived>& h) {
  Eigen::SelfAdjointEigenSolver<PlainOf<Derived>> es(h.eval(), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(es.eigenvalues().size() - 1);
}

/// λ_min(ℑ x); positive exactly when x lies in the matrix upper half plane.
template <class Derived>
RealOf<Derived> half_plane_margin(const Eigen::MatrixBase<Derived>& x) {
  return min_hermitian_eigenvalue(imag_part(x));
}

template <class Derived>
bool is_hermitian(const Eigen::MatrixBase<Derived>& x, double rel_tol = 1e-12) {
  if (!is_square(x)) return false;
  const auto scale = std::max<RealOf<Derived>>(1, x.cwiseAbs().maxCoeff());
  return (x - x.adjoint()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

template <class Derived>
bool is_normal(const Eigen::MatrixBase<Derived>& x, double rel_tol = 1e-12) {
  const auto scale = std::max<RealOf<Derived>>(1, x.squaredNorm());
  return (x * x.adjoint() - x.adjoint() * x).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

template <class DA, class DB>
PlainOf<DA> kron(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  PlainOf<DA> out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

template <class DA, class DB>
PlainOf<DA> direct_sum(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  PlainOf<DA> out = PlainOf<DA>::Zero(a.rows() + b.rows(), a.cols() + b.cols());
  out.topLeftCorner(a.rows(), a.cols()) = a;
  out.bottomRightCorner(b.rows(), b.cols()) = b;
  return out;
}

/// x ⊗ 1_k as an element of M_k(M_n): k diagonal copies of x.
template <class Derived>
PlainOf<Derived> amplify(const Eigen::MatrixBase<Derived>& x, Eigen::Index k) {
  PlainOf<Derived> out = PlainOf<Derived>::Zero(k * x.rows(), k * x.cols());
  for (Eigen::Index j = 0; j < k; ++j) out.block(j * x.rows(), j * x.cols(), x.rows(), x.cols()) = x;
  return out;
}

/// id_n ⊗ tr_N: normalized trace over each N×N block of an (n·N)-square matrix
/// laid out as kron(b, I_N).
template <class Derived>
PlainOf<Derived> partial_trace(const Eigen::MatrixBase<Derived>& x, Eigen::Index n, Eigen::Index N) {
  require_square(x, "partial_trace");
  if (n <= 0 || N <= 0 || x.rows() != n * N)
    throw Error(Errc::DimensionMismatch, "partial_trace: dimension is not n*N");
  PlainOf<Derived> out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) out(i, j) = x.block(i * N, j * N, N, N).trace() / RealOf<Derived>(N);
  return out;
}

/// column-major vec
template <class Derived>
CVector<RealOf<Derived>> vec(const Eigen::MatrixBase<Derived>& x) {
  PlainOf<Derived> tmp = x;
  return Eigen::Map<const CVector<RealOf<Derived>>>(tmp.data(), tmp.size());
}

inline ComplexMatrix unvec(const ComplexVector& v, Eigen::Index rows) {
  return Eigen::Map<const ComplexMatrix>(v.data(), rows, v.size() / rows);
}

/// Matrix unit e_{ij} of size m.
inline ComplexMatrix matrix_unit(Eigen::Index m, Eigen::Index i, Eigen::Index j) {
  ComplexMatrix e = ComplexMatrix::Zero(m, m);
  e(i, j) = 1.0;
  return e;
}

}  // namespace ovfree
