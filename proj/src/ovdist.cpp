#include "ovfree/ovdist.hpp"

#include <cmath>

namespace ovfree {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// divided differences closer than this use the derivative instead
constexpr double kConfluentTol = 1e-7;

void require_point(const OVDistribution& dist, const ComplexMatrix& b, const char* who) {
  require_square(b, who);
  if (b.rows() == 0 || b.rows() % dist.base_dim() != 0)
    throw Error(Errc::DimensionMismatch, std::string(who) + ": point dimension is not a multiple of the base dimension");
  if (!all_finite(b)) throw Error(Errc::InvalidArgument, std::string(who) + ": non-finite point");
}

ComplexMatrix resolvent(const ComplexMatrix& x) {
  try {
    return inverse(x);
  } catch (const Error& e) {
    if (e.code() == Errc::SingularMatrix) throw Error(Errc::OutsideResolvent, "point is not in the resolvent set");
    throw;
  }
}

ComplexMatrix shifted(const ComplexMatrix& b, cplx t) {
  ComplexMatrix x = b;
  x.diagonal().array() -= t;
  return x;
}

cplx g_or_reject(const ScalarMeasure& mu, cplx z) {
  if (z.imag() == 0.0) throw Error(Errc::OutsideResolvent, "eigenvalue of the point lies on the real axis");
  return g_scalar(mu, z);
}

cplx dg_or_reject(const ScalarMeasure& mu, cplx z) {
  if (z.imag() == 0.0) throw Error(Errc::OutsideResolvent, "eigenvalue of the point lies on the real axis");
  return g_derivative(mu, z, 1);
}

struct NormalForm {
  ComplexMatrix U;
  ComplexVector beta;
};

std::optional<NormalForm> normal_form(const ComplexMatrix& b) {
  if (!is_normal(b)) return std::nullopt;
  Eigen::ComplexSchur<ComplexMatrix> schur(b);
  return NormalForm{schur.matrixU(), schur.matrixT().diagonal()};
}

// Cauchy laws in either half plane: (b − s ± iγ)^{-1}
std::optional<ComplexMatrix> cauchy_closed_form(const CauchyLaw& c, const ComplexMatrix& b) {
  if (half_plane_margin(b) > 0.0) return resolvent(shifted(b, cplx(c.location, -c.scale)));
  if (half_plane_margin(ComplexMatrix(-b)) > 0.0) return resolvent(shifted(b, cplx(c.location, c.scale)));
  return std::nullopt;
}

ComplexMatrix scalar_G(const ScalarMeasure& mu, const ComplexMatrix& b) {
  if (auto c = mu.as<CauchyLaw>())
    if (auto r = cauchy_closed_form(*c, b)) return *r;
  if (mu.is_discrete()) {
    ComplexMatrix acc = ComplexMatrix::Zero(b.rows(), b.cols());
    for (const Atom& a : mu.atoms()) acc += a.weight * resolvent(shifted(b, a.position));
    return acc;
  }
  if (auto nf = normal_form(b)) {
    ComplexVector gv(nf->beta.size());
    for (Eigen::Index j = 0; j < gv.size(); ++j) gv(j) = g_or_reject(mu, nf->beta(j));
    return nf->U * gv.asDiagonal() * nf->U.adjoint();
  }
  return expect(mu, [&b](double t) -> ComplexMatrix { return resolvent(shifted(b, t)); });
}

ComplexMatrix scalar_dG(const ScalarMeasure& mu, const ComplexMatrix& b, const ComplexMatrix& h) {
  if (auto c = mu.as<CauchyLaw>()) {
    if (auto r = cauchy_closed_form(*c, b)) return -(*r) * h * (*r);
  }
  if (mu.is_discrete()) {
    ComplexMatrix acc = ComplexMatrix::Zero(b.rows(), b.cols());
    for (const Atom& a : mu.atoms()) {
      const ComplexMatrix r = resolvent(shifted(b, a.position));
      acc -= a.weight * r * h * r;
    }
    return acc;
  }
  if (auto nf = normal_form(b)) {
    // Daleckii–Krein: ∫ r_i r_j dμ = (g(β_i) − g(β_j))/(β_j − β_i)
    const Eigen::Index m = nf->beta.size();
    ComplexVector gv(m);
    for (Eigen::Index j = 0; j < m; ++j) gv(j) = g_or_reject(mu, nf->beta(j));
    ComplexMatrix L(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) {
        const cplx bi = nf->beta(i), bj = nf->beta(j);
        if (std::abs(bi - bj) <= kConfluentTol * std::max(1.0, std::abs(bi))) L(i, j) = -dg_or_reject(mu, 0.5 * (bi + bj));
        else L(i, j) = (gv(i) - gv(j)) / (bj - bi);
      }
    }
    const ComplexMatrix ht = nf->U.adjoint() * h * nf->U;
    return -(nf->U * L.cwiseProduct(ht) * nf->U.adjoint());
  }
  return expect(mu, [&](double t) -> ComplexMatrix {
    const ComplexMatrix r = resolvent(shifted(b, t));
    return -(r * h * r);
  });
}

ComplexMatrix semicircular_G(const OVSemicircular& s, const ComplexMatrix& b) {
  ComplexMatrix G = resolvent(b);
  for (int it = 0; it < kFixedPointMaxIter; ++it) {
    const ComplexMatrix next = resolvent(b - covariance_map(s, G));
    const double change = (next - G).cwiseAbs().maxCoeff();
    if (change <= kFixedPointTol * std::max(1.0, G.cwiseAbs().maxCoeff())) return next;
    G = 0.5 * G + 0.5 * next;
  }
  throw Error(Errc::NoConvergence, "semicircular fixed point did not converge in 1e4 iterations");
}

// I − L with L: X ↦ G η(X) G in vec coordinates
ComplexMatrix semicircular_system(const OVSemicircular& s, const ComplexMatrix& G) {
  const Eigen::Index m = G.rows();
  const Eigen::Index k = m / s.coeffs.front().rows();
  ComplexMatrix sys = ComplexMatrix::Identity(m * m, m * m);
  for (const ComplexMatrix& a : s.coeffs) {
    const ComplexMatrix A = amplify(a, k);
    const ComplexMatrix left = A.adjoint() * G;
    sys -= kron(ComplexMatrix(left.transpose()), ComplexMatrix(G * A));
  }
  return sys;
}

ComplexMatrix semicircular_dG(const OVSemicircular& s, const ComplexMatrix& b, const ComplexMatrix& h) {
  const ComplexMatrix G = semicircular_G(s, b);
  const ComplexMatrix sys = semicircular_system(s, G);
  Eigen::PartialPivLU<ComplexMatrix> lu(sys);
  if (!(lu.rcond() > 1.0 / kConditionCap)) throw Error(Errc::DerivativeSingular, "semicircular derivative system is singular");
  const ComplexVector x = lu.solve(vec(ComplexMatrix(-(G * h * G))));
  return unvec(x, b.rows());
}

ComplexMatrix dirac_shift(const DiracB& d, const ComplexMatrix& b) {
  return b - amplify(d.b0, b.rows() / d.b0.rows());
}

ComplexMatrix diagonal_G(const DiagonalIndependent& d, const ComplexMatrix& b, double* standard_error) {
  try {
    return matrix_G_via_neumann_to_tol(b, d.laws, d.mode, d.series_tol).G;
  } catch (const Error& e) {
    if (e.code() != Errc::NotDominant) throw;
    if (!d.allow_mc || !d.sampler)
      throw Error(Errc::UnsupportedPoint, std::string("diagonal model outside the Neumann region (") + e.what() + ")");
  }
  const MCEstimate est = d.sampler->estimate_G(b);
  if (standard_error) *standard_error = est.standard_error;
  return est.mean;
}

ComplexMatrix diagonal_dG(const DiagonalIndependent& d, const ComplexMatrix& b, const ComplexMatrix& h) {
  const Eigen::Index m = b.rows();
  const double h_norm = operator_norm(Eigen::MatrixXd(h.cwiseAbs()));
  if (h_norm == 0.0) return ComplexMatrix::Zero(m, m);
  // E[(B̃ − X̃)^{-1}] for B̃ = [[b, t·h], [0, b]] carries −t·E[R h R] in its corner
  double t = 0.0;
  bool dominant = true;
  double min_im = std::numeric_limits<double>::infinity();
  for (Eigen::Index r = 0; r < m; ++r) min_im = std::min(min_im, b(r, r).imag());
  if (min_im > 0.0) {
    ComplexMatrix off = b;
    off.diagonal().setZero();
    const double slack = min_im - operator_norm(Eigen::MatrixXd(off.cwiseAbs()));
    if (slack > 0.0) t = 0.5 * slack / h_norm;
    else dominant = false;
  } else {
    dominant = false;
  }
  if (dominant) {
    ComplexMatrix big = ComplexMatrix::Zero(2 * m, 2 * m);
    big.topLeftCorner(m, m) = b;
    big.bottomRightCorner(m, m) = b;
    big.topRightCorner(m, m) = t * h;
    const ComplexMatrix G = matrix_G_via_neumann_to_tol(big, d.laws, d.mode, d.series_tol * t).G;
    return G.topRightCorner(m, m) / t;
  }
  if (!d.allow_mc || !d.sampler) throw Error(Errc::UnsupportedPoint, "diagonal model outside the Neumann region");
  return d.sampler->estimate_dG(b, h).mean;
}

MatrixModelSpec diagonal_model_spec(const std::vector<ScalarMeasure>& laws, IndependenceMode mode,
                                    const MonteCarloSettings& mc) {
  MatrixModelSpec spec;
  spec.n = static_cast<int>(laws.size());
  spec.N = mc.N;
  spec.trials = mc.trials;
  spec.seed = mc.seed;
  Realization real = Realization::HaarRotated;
  switch (mode) {
    case IndependenceMode::Free: real = Realization::HaarRotated; break;
    case IndependenceMode::Classical: real = Realization::Permuted; break;
    case IndependenceMode::Equal: real = Realization::Diagonal; break;
    case IndependenceMode::Boolean:
      throw Error(Errc::InvalidArgument, "Boolean independence has no matrix-model realization");
  }
  std::string mixer;
  for (std::size_t i = 0; i < laws.size(); ++i) {
    spec.vars.push_back({laws[i], real});
    const std::string name = "E" + std::to_string(i + 1);
    spec.constants[name] = matrix_unit(spec.n, static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
    mixer += (i ? " + " : "") + name + "*X" + std::to_string(i + 1);
  }
  spec.mixer = mixer;
  return spec;
}

}  // namespace

OVDistribution::OVDistribution(int base_dim, Backend backend) : base_dim_(base_dim), backend_(std::move(backend)) {
  if (base_dim_ < 1) throw Error(Errc::InvalidArgument, "base dimension must be positive");
  std::visit(overloaded{
                 [](const ScalarEmbedded&) {},
                 [this](const DiracB& d) {
                   if (d.b0.rows() != base_dim_ || d.b0.cols() != base_dim_)
                     throw Error(Errc::DimensionMismatch, "Dirac value must be base_dim x base_dim");
                   if (!is_hermitian(d.b0)) throw Error(Errc::NonHermitian, "Dirac value must be Hermitian");
                 },
                 [this](const OVSemicircular& s) {
                   if (s.coeffs.empty()) throw Error(Errc::InvalidArgument, "semicircular needs at least one coefficient");
                   for (const auto& a : s.coeffs)
                     if (a.rows() != base_dim_ || a.cols() != base_dim_)
                       throw Error(Errc::DimensionMismatch, "covariance coefficients must be base_dim x base_dim");
                 },
                 [this](const DiagonalIndependent& d) {
                   if (static_cast<int>(d.laws.size()) != base_dim_)
                     throw Error(Errc::DimensionMismatch, "diagonal model needs one law per diagonal entry");
                 },
                 [this](const MatrixModelBackend& m) {
                   if (!m.sampler) throw Error(Errc::InvalidArgument, "matrix model backend without sampler");
                   if (m.sampler->spec().n != base_dim_) throw Error(Errc::DimensionMismatch, "matrix model n differs from base_dim");
                 },
             },
             backend_);
}

OVDistribution OVDistribution::scalar(ScalarMeasure mu, int base_dim) {
  return {base_dim, ScalarEmbedded{std::move(mu)}};
}

OVDistribution OVDistribution::dirac(ComplexMatrix b0) {
  const int n = static_cast<int>(b0.rows());
  return {n, DiracB{std::move(b0)}};
}

OVDistribution OVDistribution::semicircular(std::vector<ComplexMatrix> coeffs) {
  if (coeffs.empty()) throw Error(Errc::InvalidArgument, "semicircular needs at least one coefficient");
  const int n = static_cast<int>(coeffs.front().rows());
  return {n, OVSemicircular{std::move(coeffs)}};
}

OVDistribution OVDistribution::diagonal(std::vector<ScalarMeasure> laws, IndependenceMode mode, bool allow_mc,
                                        MonteCarloSettings mc) {
  const int n = static_cast<int>(laws.size());
  DiagonalIndependent d{std::move(laws), mode, allow_mc, mc, 1e-13, nullptr};
  if (allow_mc) d.sampler = std::make_shared<const MatrixModelSampler>(diagonal_model_spec(d.laws, mode, mc));
  return {n, std::move(d)};
}

OVDistribution OVDistribution::matrix_model(MatrixModelSpec spec) {
  const int n = spec.n;
  return {n, MatrixModelBackend{std::make_shared<const MatrixModelSampler>(std::move(spec))}};
}

bool OVDistribution::is_monte_carlo() const noexcept {
  if (std::holds_alternative<MatrixModelBackend>(backend_)) return true;
  if (auto d = std::get_if<DiagonalIndependent>(&backend_)) return d->allow_mc;
  return false;
}

std::string OVDistribution::kind() const {
  return std::visit(overloaded{
                        [](const ScalarEmbedded&) { return std::string("scalar"); },
                        [](const DiracB&) { return std::string("dirac"); },
                        [](const OVSemicircular&) { return std::string("semicircular"); },
                        [](const DiagonalIndependent&) { return std::string("diagonal"); },
                        [](const MatrixModelBackend&) { return std::string("matrix_model"); },
                    },
                    backend_);
}

ComplexMatrix covariance_map(const OVSemicircular& s, const ComplexMatrix& b) {
  const Eigen::Index n = s.coeffs.front().rows();
  if (b.rows() % n != 0) throw Error(Errc::DimensionMismatch, "covariance_map: dimension mismatch");
  const Eigen::Index k = b.rows() / n;
  ComplexMatrix out = ComplexMatrix::Zero(b.rows(), b.cols());
  for (const ComplexMatrix& a : s.coeffs) {
    const ComplexMatrix A = amplify(a, k);
    out += A * b * A.adjoint();
  }
  return out;
}

GEstimate eval_G_estimate(const OVDistribution& dist, const ComplexMatrix& b) {
  require_point(dist, b, "eval_G");
  return std::visit(overloaded{
                        [&](const ScalarEmbedded& s) { return GEstimate{scalar_G(s.law, b), 0.0}; },
                        [&](const DiracB& d) { return GEstimate{resolvent(dirac_shift(d, b)), 0.0}; },
                        [&](const OVSemicircular& s) { return GEstimate{semicircular_G(s, b), 0.0}; },
                        [&](const DiagonalIndependent& d) {
                          double se = 0.0;
                          ComplexMatrix g = diagonal_G(d, b, &se);
                          return GEstimate{std::move(g), se};
                        },
                        [&](const MatrixModelBackend& m) {
                          const MCEstimate est = m.sampler->estimate_G(b);
                          return GEstimate{est.mean, est.standard_error};
                        },
                    },
                    dist.backend());
}

ComplexMatrix eval_G(const OVDistribution& dist, const ComplexMatrix& b) {
  return eval_G_estimate(dist, b).value;
}

ComplexMatrix eval_dG(const OVDistribution& dist, const ComplexMatrix& b, const ComplexMatrix& h) {
  require_point(dist, b, "eval_dG");
  if (h.rows() != b.rows() || h.cols() != b.cols()) throw Error(Errc::DimensionMismatch, "eval_dG: direction shape");
  return std::visit(overloaded{
                        [&](const ScalarEmbedded& s) { return scalar_dG(s.law, b, h); },
                        [&](const DiracB& d) {
                          const ComplexMatrix r = resolvent(dirac_shift(d, b));
                          return ComplexMatrix(-(r * h * r));
                        },
                        [&](const OVSemicircular& s) { return semicircular_dG(s, b, h); },
                        [&](const DiagonalIndependent& d) { return diagonal_dG(d, b, h); },
                        [&](const MatrixModelBackend& m) { return m.sampler->estimate_dG(b, h).mean; },
                    },
                    dist.backend());
}

ComplexMatrix jacobian_G(const OVDistribution& dist, const ComplexMatrix& b) {
  require_point(dist, b, "jacobian_G");
  const Eigen::Index m = b.rows();
  if (auto mm = dist.as<MatrixModelBackend>()) return mm->sampler->jacobian(b);
  if (auto s = dist.as<OVSemicircular>()) {
    const ComplexMatrix G = semicircular_G(*s, b);
    Eigen::PartialPivLU<ComplexMatrix> lu(semicircular_system(*s, G));
    if (!(lu.rcond() > 1.0 / kConditionCap)) throw Error(Errc::DerivativeSingular, "semicircular derivative system is singular");
    return lu.solve(ComplexMatrix(-kron(ComplexMatrix(G.transpose()), G)));
  }
  ComplexMatrix jac(m * m, m * m);
  for (Eigen::Index col = 0; col < m * m; ++col) jac.col(col) = vec(eval_dG(dist, b, matrix_unit(m, col % m, col / m)));
  return jac;
}

}  // namespace ovfree
