#include "ovfree/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ovfree/concurrency.hpp"
#include "ovfree/matrix_model.hpp"

namespace ovfree {

std::string to_string(OmegaRejection r) {
  return r == OmegaRejection::WrongPattern ? "WrongPattern" : "PerturbationTooLarge";
}

OmegaResult omega_membership(const ComplexMatrix& b, int n, int base_dim) {
  require_square(b, "omega_membership");
  if (n < 1 || base_dim < 1 || b.rows() != 2 * n * base_dim)
    throw Error(Errc::DimensionMismatch, "omega_membership: dimension is not 2n*base_dim");
  OmegaPoint pt{n, base_dim, ComplexMatrix::Zero(b.rows(), b.cols()), b, 0.0, 0.0, 0.0};
  double block_margin = std::numeric_limits<double>::infinity();
  for (int j = 0; j < 2 * n; ++j) {
    const ComplexMatrix blk = b.block(j * base_dim, j * base_dim, base_dim, base_dim);
    const double m = (j % 2 == 0) ? half_plane_margin(blk) : half_plane_margin(ComplexMatrix(-blk));
    if (!(m > 0.0))
      return OmegaReject{OmegaRejection::WrongPattern,
                         "block " + std::to_string(j + 1) + (j % 2 == 0 ? " is not in B+" : " is not in B-")};
    block_margin = std::min(block_margin, m);
    pt.D.block(j * base_dim, j * base_dim, base_dim, base_dim) = blk;
  }
  pt.T = b - pt.D;
  pt.block_margin = block_margin;
  pt.perturbation_norm = operator_norm(pt.T);
  pt.margin = block_margin - pt.perturbation_norm;
  if (!(pt.margin > 0.0))
    return OmegaReject{OmegaRejection::PerturbationTooLarge,
                       "perturbation norm " + std::to_string(pt.perturbation_norm) + " exceeds block margin " +
                           std::to_string(block_margin)};
  return pt;
}

ComplexMatrix BasePoint::matrix() const {
  if (n < 1 || base_dim < 1 || !(lambda > 0.0)) throw Error(Errc::InvalidArgument, "base point needs n, base_dim >= 1 and lambda > 0");
  ComplexVector d(dim());
  for (int j = 0; j < 2 * n; ++j)
    for (int l = 0; l < base_dim; ++l) d(j * base_dim + l) = cplx(0.0, (j % 2 == 0) ? lambda : -lambda);
  return d.asDiagonal();
}

ComplexMatrix k_map(const OVDistribution& dist, const ComplexMatrix& w) {
  return eval_G(dist, inverse(w));
}

ComplexMatrix k_jacobian(const OVDistribution& dist, const ComplexMatrix& w) {
  const ComplexMatrix wi = inverse(w);
  return -(jacobian_G(dist, wi) * kron(ComplexMatrix(wi.transpose()), wi));
}

BlochRadii bloch_radii(double R, double a, double M) {
  if (!(R > 0.0 && a > 0.0 && M > 0.0)) throw Error(Errc::InvalidArgument, "bloch_radii: R, a and M must be positive");
  return {R * R * a / (4.0 * M), R * R * a * a / (8.0 * M)};
}

namespace {

std::vector<ComplexMatrix> latin_hypercube_sphere(Eigen::Index m, int samples, double radius, std::mt19937_64& rng) {
  const Eigen::Index coords = 2 * m * m;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<int>> strata(static_cast<std::size_t>(coords));
  for (auto& perm : strata) {
    perm.resize(static_cast<std::size_t>(samples));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
  }
  std::vector<ComplexMatrix> out;
  for (int s = 0; s < samples; ++s) {
    ComplexMatrix y(m, m);
    for (Eigen::Index c = 0; c < m * m; ++c) {
      const double re = -1.0 + 2.0 * (strata[2 * c][s] + unit(rng)) / samples;
      const double im = -1.0 + 2.0 * (strata[2 * c + 1][s] + unit(rng)) / samples;
      y(c % m, c / m) = cplx(re, im);
    }
    const double nrm = operator_norm(y);
    if (nrm == 0.0) continue;
    out.push_back(y * (radius / nrm));
  }
  return out;
}

ComplexVector newton_step(const ComplexMatrix& J, const ComplexMatrix& residual) {
  Eigen::PartialPivLU<ComplexMatrix> lu(J);
  if (!(lu.rcond() > 1.0 / kConditionCap)) throw Error(Errc::DerivativeSingular, "Jacobian condition exceeds the cap");
  return lu.solve(vec(ComplexMatrix(-residual)));
}

}  // namespace

CertifiedBall bloch_certify(const OVDistribution& dist, const BasePoint& base, double R, const CertifyOptions& opt) {
  if (!(R > 0.0) || R > base.lambda / 2.0 * (1.0 + 1e-12))
    throw Error(Errc::InvalidArgument, "bloch_certify: need 0 < R <= lambda/2");
  if (base.base_dim != dist.base_dim()) throw Error(Errc::DimensionMismatch, "bloch_certify: base point block size differs from base_dim");
  CertifiedBall ball;
  ball.center = base.matrix();
  ball.lambda = base.lambda;
  ball.R = R;
  const Eigen::Index m = ball.center.rows();
  ball.image_center = k_map(dist, ball.center);

  const ComplexMatrix J = k_jacobian(dist, ball.center);
  Eigen::JacobiSVD<ComplexMatrix> svd(J);
  const auto& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  if (!(smin > 0.0) || sv(0) / smin > kConditionCap)
    throw Error(Errc::DerivativeSingular, "certification impossible: Jacobian of K is singular at the base point");
  ball.a = opt.safety_a * smin / std::sqrt(double(m));

  std::mt19937_64 rng = stream_engine(opt.seed, 0);
  const auto dirs = latin_hypercube_sphere(m, static_cast<int>(2 * m * m), R, rng);
  std::vector<double> dev(dirs.size(), 0.0);
  parallel_for(dirs.size(), [&](std::size_t s) { dev[s] = operator_norm(ComplexMatrix(k_map(dist, ball.center + dirs[s]) - ball.image_center)); });
  const double sup = *std::max_element(dev.begin(), dev.end());
  ball.M = opt.safety_M * sup;
  const BlochRadii radii = bloch_radii(R, ball.a, ball.M);
  ball.r = std::min(radii.r, R);
  ball.P = std::min(radii.P, ball.M);
  return ball;
}

ComplexMatrix invert_G(const OVDistribution& dist, const ComplexMatrix& target, const CertifiedBall& ball,
                       const std::optional<ComplexMatrix>& guess, const InversionOptions& opt) {
  if (target.rows() != ball.center.rows() || target.cols() != ball.center.cols())
    throw Error(Errc::DimensionMismatch, "invert_G: target and ball differ in dimension");
  const double offset = operator_norm(ComplexMatrix(target - ball.image_center));
  if (!(offset < ball.P))
    throw Error(Errc::LeftCertifiedBall, "invert_G: target lies outside the certified image ball (distance " +
                                             std::to_string(offset) + ", P = " + std::to_string(ball.P) + ")");
  const Eigen::Index m = target.rows();
  ComplexMatrix w = guess ? *guess : ball.center;
  if (!(operator_norm(ComplexMatrix(w - ball.center)) < ball.r))
    throw Error(Errc::LeftCertifiedBall, "invert_G: initial guess outside the certified ball");
  ComplexMatrix residual = k_map(dist, w) - target;
  double res_norm = operator_norm(residual);
  bool polished = false;
  for (int it = 0; it < opt.max_iter; ++it) {
    if (res_norm <= opt.tol) {
      if (polished) break;
      polished = true;
    }
    const ComplexVector step = newton_step(k_jacobian(dist, w), residual);
    ComplexMatrix dw = unvec(step, m);
    ComplexMatrix next;
    ComplexMatrix next_res;
    double next_norm = 0.0;
    bool inside = false;
    for (int halving = 0; halving < 60; ++halving) {
      next = w + dw;
      if (operator_norm(ComplexMatrix(next - ball.center)) < ball.r) {
        inside = true;
        break;
      }
      dw *= 0.5;
    }
    if (!inside) throw Error(Errc::LeftCertifiedBall, "invert_G: Newton iterate cannot stay inside the certified ball");
    next_res = k_map(dist, next) - target;
    next_norm = operator_norm(next_res);
    if (polished && next_norm >= res_norm) break;
    w = std::move(next);
    residual = std::move(next_res);
    res_norm = next_norm;
  }
  if (!(res_norm <= opt.tol)) throw Error(Errc::NoConvergence, "invert_G: residual " + std::to_string(res_norm) + " after Newton");
  return inverse(w);
}

ComplexMatrix invert_G_uncertified(const OVDistribution& dist, const ComplexMatrix& target, const ComplexMatrix& guess_b,
                                   const InversionOptions& opt) {
  const Eigen::Index m = target.rows();
  ComplexMatrix b = guess_b;
  ComplexMatrix residual = eval_G(dist, b) - target;
  double res_norm = operator_norm(residual);
  bool polished = false;
  for (int it = 0; it < opt.max_iter; ++it) {
    if (res_norm <= opt.tol) {
      if (polished) break;
      polished = true;
    }
    ComplexMatrix db = unvec(newton_step(jacobian_G(dist, b), residual), m);
    // backtrack when the step leaves the evaluable domain or increases the residual
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving) {
      try {
        const ComplexMatrix next = b + db;
        const ComplexMatrix next_res = eval_G(dist, next) - target;
        const double next_norm = operator_norm(next_res);
        if (next_norm < res_norm || (!polished && halving == 0 && next_norm < 2.0 * res_norm)) {
          b = next;
          residual = next_res;
          res_norm = next_norm;
          accepted = true;
          break;
        }
      } catch (const Error& e) {
        if (e.code() != Errc::OutsideResolvent && e.code() != Errc::NoConvergence && e.code() != Errc::SingularMatrix) throw;
      }
      db *= 0.5;
    }
    if (!accepted) break;
  }
  if (!(res_norm <= opt.tol)) throw Error(Errc::NoConvergence, "invert_G: residual " + std::to_string(res_norm) + " after Newton");
  return b;
}

ComplexMatrix r_transform(const OVDistribution& dist, const ComplexMatrix& w, const CertifiedBall& ball) {
  return invert_G(dist, w, ball) - inverse(w);
}

ComplexMatrix random_ball_point(const ComplexMatrix& center, double radius, std::mt19937_64& rng) {
  const Eigen::Index m = center.rows();
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ComplexMatrix y(m, m);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < m; ++i) {
      const double re = normal(rng);
      const double im = normal(rng);
      y(i, j) = cplx(re, im);
    }
  const double scale = radius * std::pow(unit(rng), 1.0 / double(2 * m * m)) / operator_norm(y);
  return center + y * scale;
}

double injectivity_spot_check(const OVDistribution& dist, const CertifiedBall& ball, int pairs, std::uint64_t seed) {
  std::vector<double> ratio(static_cast<std::size_t>(pairs), 0.0);
  parallel_for(ratio.size(), [&](std::size_t p) {
    std::mt19937_64 rng = stream_engine(seed, p);
    const ComplexMatrix x = random_ball_point(ball.center, 0.999 * ball.r, rng);
    const ComplexMatrix y = random_ball_point(ball.center, 0.999 * ball.r, rng);
    const double d = operator_norm(ComplexMatrix(x - y));
    ratio[p] = d > 0.0 ? operator_norm(ComplexMatrix(k_map(dist, x) - k_map(dist, y))) / d
                       : std::numeric_limits<double>::infinity();
  });
  return ratio.empty() ? std::numeric_limits<double>::infinity() : *std::min_element(ratio.begin(), ratio.end());
}

double block_resolvent_identity_check(const OVDistribution& dist, const ComplexMatrix& B) {
  const auto* se = dist.as<ScalarEmbedded>();
  if (!se) throw Error(Errc::InvalidArgument, "block identity check needs a scalar-embedded distribution");
  require_square(B, "block_resolvent_identity_check");
  if (B.rows() % 2 != 0) throw Error(Errc::DimensionMismatch, "block identity check needs an even dimension");
  const Eigen::Index n = B.rows() / 2;
  const ComplexMatrix Binv = inverse(B);
  const double binv_norm = operator_norm(Binv);
  if (!(binv_norm < 1.0)) throw Error(Errc::BNotDominant, "block identity check needs ||B^-1|| < 1");
  const cplx I(0.0, 1.0);
  const ComplexMatrix eye_n = ComplexMatrix::Identity(n, n);
  auto integrand = [&](double t) -> ComplexMatrix {
    ComplexMatrix T = ComplexMatrix::Zero(2, 2);
    T(0, 0) = 1.0 / (t - I);
    T(1, 1) = 1.0 / (t + I);
    return inverse(ComplexMatrix(B - kron(T, eye_n)));
  };
  const ComplexMatrix lhs = expect(se->law, integrand);
  ComplexMatrix B0 = ComplexMatrix::Zero(2, 2);
  B0(0, 0) = I;
  B0(1, 1) = -I;
  const ComplexMatrix rhs = Binv - Binv * eval_G(dist, ComplexMatrix(kron(B0, eye_n) + Binv)) * Binv;
  return operator_norm(ComplexMatrix(lhs - rhs));
}

}  // namespace ovfree
