#include "ovfree/convolution.hpp"

#include <algorithm>
#include <cmath>

#include "ovfree/concurrency.hpp"
#include "ovfree/matrix_model.hpp"

namespace ovfree {

JointBall certify_jointly(std::span<const OVDistribution> dists, const BasePoint& base, double R,
                          const CertifyOptions& opt) {
  if (dists.empty()) throw Error(Errc::InvalidArgument, "certify_jointly: no distributions");
  JointBall jb;
  jb.center = base.matrix();
  for (const auto& d : dists) jb.members.push_back(bloch_certify(d, base, R, opt));
  jb.r = jb.members.front().r;
  jb.P = jb.members.front().P;
  jb.target_center = ComplexMatrix::Zero(jb.center.rows(), jb.center.cols());
  for (const auto& b : jb.members) {
    jb.r = std::min(jb.r, b.r);
    jb.P = std::min(jb.P, b.P);
    jb.target_center += b.image_center;
  }
  jb.target_center /= double(jb.members.size());
  jb.target_radius = std::numeric_limits<double>::infinity();
  for (const auto& b : jb.members)
    jb.target_radius = std::min(jb.target_radius, b.P - operator_norm(ComplexMatrix(b.image_center - jb.target_center)));
  if (!(jb.target_radius > 0.0))
    throw Error(Errc::LeftCertifiedBall, "certified target balls do not overlap at lambda = " + std::to_string(base.lambda) +
                                             "; use a smaller base point");
  return jb;
}

std::vector<ComplexMatrix> sample_targets(const JointBall& ball, int count, std::uint64_t seed) {
  std::vector<ComplexMatrix> out;
  for (int j = 0; j < count; ++j) {
    std::mt19937_64 rng = stream_engine(seed, static_cast<std::uint64_t>(j));
    out.push_back(random_ball_point(ball.target_center, 0.9 * ball.target_radius, rng));
  }
  return out;
}

ConvolutionTask make_convolution_task(OVDistribution X, OVDistribution Y, std::optional<OVDistribution> sum,
                                      const BasePoint& base, double R, int points, std::uint64_t seed) {
  if (X.base_dim() != Y.base_dim() || (sum && sum->base_dim() != X.base_dim()))
    throw Error(Errc::DimensionMismatch, "convolution: operands differ in base dimension");
  std::vector<OVDistribution> members{X, Y};
  if (sum) members.push_back(*sum);
  CertifyOptions opt;
  opt.seed = seed;
  JointBall jb = certify_jointly(members, base, R, opt);
  std::vector<ComplexMatrix> pts = sample_targets(jb, points, seed ^ 0x9e3779b97f4a7c15ULL);
  return {std::move(X), std::move(Y), std::move(sum), std::move(jb), std::move(pts)};
}

ComplexMatrix r_sum_at(const ConvolutionTask& task, const ComplexMatrix& w) {
  return r_transform(task.X, w, task.ball.members[0]) + r_transform(task.Y, w, task.ball.members[1]);
}

std::vector<ComplexMatrix> r_sum(const ConvolutionTask& task) {
  std::vector<ComplexMatrix> out(task.eval_points.size());
  parallel_for(out.size(), [&](std::size_t j) { out[j] = r_sum_at(task, task.eval_points[j]); });
  return out;
}

namespace {

// ω₁ = b + h_Y(b + h_X(ω₁)), h(z) = G(z)^{-1} − z, converges for Im b ≻ 0.
// On success w = G_X(ω₁), bx = ω₁, by = ω₂ solve the defining relation.
void subordination_start(const OVDistribution& X, const OVDistribution& Y, const ComplexMatrix& b, ComplexMatrix& w,
                         ComplexMatrix& bx, ComplexMatrix& by) {
  auto h = [](const OVDistribution& d, const ComplexMatrix& z) { return ComplexMatrix(inverse(eval_G(d, z)) - z); };
  try {
    ComplexMatrix om1 = b;
    for (int it = 0; it < 2000; ++it) {
      const ComplexMatrix om2 = b + h(X, om1);
      const ComplexMatrix next = b + h(Y, om2);
      const double change = operator_norm(ComplexMatrix(next - om1));
      om1 = next;
      if (change <= 1e-13 * std::max(1.0, operator_norm(om1))) break;
    }
    const ComplexMatrix om2 = b + h(X, om1);
    const ComplexMatrix g = eval_G(X, om1);
    if (!all_finite(g) || !all_finite(om2)) return;
    w = g;
    bx = om1;
    by = om2;
  } catch (const Error&) {
    // keep the plain start
  }
}

}  // namespace

SumEvaluation eval_G_of_sum(const OVDistribution& X, const OVDistribution& Y, const ComplexMatrix& b) {
  require_square(b, "eval_G_of_sum");
  const int base = X.base_dim();
  // either block parity: b* ∈ Ω puts b in the resolvent set just as well
  auto omega = [&](const ComplexMatrix& x) {
    return std::holds_alternative<OmegaPoint>(omega_membership(x, int(x.rows()) / (2 * base), base));
  };
  const bool in_omega = b.rows() % (2 * base) == 0 && (omega(b) || omega(ComplexMatrix(b.adjoint())));
  if (!(half_plane_margin(b) > 0.0) && !in_omega)
    throw Error(Errc::OutsideResolvent, "eval_G_of_sum: b must lie in the upper half plane or in Omega (either block parity)");
  const Eigen::Index m = b.rows();
  ComplexMatrix w = inverse(b);
  ComplexMatrix bx = b, by = b;
  if (half_plane_margin(b) > 0.0) subordination_start(X, Y, b, w, bx, by);
  // Φ(w) = G_X^{⟨−1⟩}(w) + G_Y^{⟨−1⟩}(w) − w^{-1} − b
  auto phi = [&](const ComplexMatrix& wc, ComplexMatrix& gx, ComplexMatrix& gy) {
    const ComplexMatrix wi = inverse(wc);
    gx = invert_G_uncertified(X, wc, gx, {1e-13, 100});
    gy = invert_G_uncertified(Y, wc, gy, {1e-13, 100});
    ComplexMatrix out = gx + gy - wi - b;
    if (!all_finite(out)) throw Error(Errc::NoConvergence, "eval_G_of_sum: non-finite iterate");
    return out;
  };
  ComplexMatrix res = phi(w, bx, by);
  double res_norm = operator_norm(res);
  int it = 0;
  bool polished = false;
  for (; it < 100; ++it) {
    if (res_norm <= 1e-12 * std::max(1.0, operator_norm(b))) {
      if (polished) break;
      polished = true;
    }
    const ComplexMatrix wi = inverse(w);
    Eigen::PartialPivLU<ComplexMatrix> lx(jacobian_G(X, bx)), ly(jacobian_G(Y, by));
    const ComplexMatrix eye = ComplexMatrix::Identity(m * m, m * m);
    const ComplexMatrix J = lx.solve(eye) + ly.solve(eye) + kron(ComplexMatrix(wi.transpose()), wi);
    Eigen::PartialPivLU<ComplexMatrix> lu(J);
    if (!(lu.rcond() > 1.0 / kConditionCap)) throw Error(Errc::DerivativeSingular, "eval_G_of_sum: singular Jacobian");
    ComplexMatrix dw = unvec(lu.solve(vec(ComplexMatrix(-res))), m);
    bool accepted = false;
    for (int halving = 0; halving < 40 && !accepted; ++halving, dw *= 0.5) {
      ComplexMatrix nbx = bx, nby = by;
      try {
        const ComplexMatrix next = w + dw;
        const ComplexMatrix nres = phi(next, nbx, nby);
        const double nn = operator_norm(nres);
        if (nn < res_norm || (halving == 0 && !polished && nn < 2.0 * res_norm)) {
          w = next;
          bx = nbx;
          by = nby;
          res = nres;
          res_norm = nn;
          accepted = true;
        }
      } catch (const Error& e) {
        if (e.code() != Errc::NoConvergence && e.code() != Errc::OutsideResolvent && e.code() != Errc::SingularMatrix &&
            e.code() != Errc::DerivativeSingular)
          throw;
      }
    }
    if (!accepted) break;
  }
  if (!(res_norm <= kSumResidualTol))
    throw Error(Errc::NoConvergence, "eval_G_of_sum: residual " + std::to_string(res_norm) + " after Newton");
  return {w, res_norm, it};
}

SumEvaluation eval_G_of_sum(const ConvolutionTask& task, const ComplexMatrix& b) {
  return eval_G_of_sum(task.X, task.Y, b);
}

namespace {

// 3·(propagated MC error) of G^{⟨−1⟩}(w) for a Monte-Carlo backend
double inversion_budget(const OVDistribution& dist, const ComplexMatrix& b) {
  if (!dist.is_monte_carlo()) return 0.0;
  const GEstimate est = eval_G_estimate(dist, b);
  if (est.standard_error == 0.0) return 0.0;
  const Eigen::Index m = b.rows();
  const ComplexMatrix J = k_jacobian(dist, inverse(b));
  const double smin = smallest_singular_value(J);
  const double nb = operator_norm(b);
  return 3.0 * double(m) * est.standard_error * nb * nb / smin;
}

}  // namespace

AdditivityReport verify_additivity(const ConvolutionTask& task) {
  if (!task.sum) throw Error(Errc::InvalidArgument, "verify_additivity needs an evaluator for X + Y");
  const std::size_t n = task.eval_points.size();
  AdditivityReport rep;
  rep.discrepancy.assign(n, 0.0);
  rep.stderr_budget.assign(n, 0.0);
  parallel_for(n, [&](std::size_t j) {
    const ComplexMatrix& w = task.eval_points[j];
    const ComplexMatrix wi = inverse(w);
    const ComplexMatrix bx = invert_G(task.X, w, task.ball.members[0]);
    const ComplexMatrix by = invert_G(task.Y, w, task.ball.members[1]);
    const ComplexMatrix bs = invert_G(*task.sum, w, task.ball.members[2]);
    rep.discrepancy[j] = operator_norm(ComplexMatrix((bx - wi) + (by - wi) - (bs - wi)));
    rep.stderr_budget[j] = inversion_budget(task.X, bx) + inversion_budget(task.Y, by) + inversion_budget(*task.sum, bs);
  });
  for (std::size_t j = 0; j < n; ++j) {
    rep.max_discrepancy = std::max(rep.max_discrepancy, rep.discrepancy[j]);
    rep.max_budget = std::max(rep.max_budget, rep.stderr_budget[j]);
    if (rep.stderr_budget[j] > 0.0 && rep.discrepancy[j] > rep.stderr_budget[j]) rep.within_budget = false;
  }
  return rep;
}

std::vector<TruncationRow> truncation_sweep(const OVDistribution& dist, const ComplexMatrix& b,
                                            std::span<const double> cutoffs, double C, double r) {
  const auto* se = dist.as<ScalarEmbedded>();
  if (!se) throw Error(Errc::InvalidArgument, "truncation_sweep needs a scalar-embedded distribution");
  if (!(r > 0.0 && C > 0.0)) throw Error(Errc::InvalidArgument, "truncation_sweep: C and r must be positive");
  const double nb = operator_norm(b);
  const double margin = half_plane_margin(b);
  if (!(nb < C)) throw Error(Errc::MarginViolation, "truncation_sweep: ||b|| = " + std::to_string(nb) + " is not below C");
  if (!(margin > r)) throw Error(Errc::MarginViolation, "truncation_sweep: Im b margin " + std::to_string(margin) + " is not above r");
  const ComplexMatrix g = eval_G(dist, b);
  std::vector<TruncationRow> rows(cutoffs.size());
  parallel_for(rows.size(), [&](std::size_t j) {
    const double k = cutoffs[j];
    const TruncationResult tr = truncate(se->law, k);
    const OVDistribution dk = OVDistribution::scalar(tr.truncated, dist.base_dim());
    const double err = operator_norm(ComplexMatrix(eval_G(dk, b) - g));
    const double bound = std::sqrt(std::max(0.0, 1.0 - tr.retained_mass)) * (1.0 + C / r) / r;
    rows[j] = {k, tr.retained_mass, err, bound, err <= bound};
  });
  return rows;
}

std::vector<ComplexMatrix> test_set(int m, double C, double r, int count, std::uint64_t seed) {
  if (!(C > r && r > 0.0) || m < 1) throw Error(Errc::InvalidArgument, "test_set: need C > r > 0 and m >= 1");
  std::vector<ComplexMatrix> out;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int j = 0; j < count; ++j) {
    std::mt19937_64 rng = stream_engine(seed, static_cast<std::uint64_t>(j));
    const double s = r + (0.95 * C - r) * (0.05 + 0.9 * unit(rng));
    ComplexMatrix h(m, m);
    for (int c = 0; c < m; ++c)
      for (int l = 0; l < m; ++l) {
        const double re = normal(rng);
        const double im = normal(rng);
        h(l, c) = cplx(re, im);
      }
    h = (h + h.adjoint()).eval() * 0.5;
    const double room = 0.95 * C - s;
    const double nh = operator_norm(h);
    if (nh > 0.0) h *= room * unit(rng) / nh;
    out.push_back(h + cplx(0.0, s) * ComplexMatrix::Identity(m, m));
  }
  return out;
}

ConvergenceReport convergence_check(std::span<const OVDistribution> family, const GFunction& limit,
                                    std::span<const ComplexMatrix> test_points, std::span<const double> envelope,
                                    double tightness_eps) {
  if (test_points.empty()) throw Error(Errc::InvalidArgument, "convergence_check: empty test set");
  ConvergenceReport rep;
  std::vector<ComplexMatrix> limits(test_points.size());
  for (std::size_t t = 0; t < test_points.size(); ++t) limits[t] = limit(test_points[t]);
  rep.limit_at_probe = limits.front();
  rep.sup_error.assign(family.size(), 0.0);
  parallel_for(family.size(), [&](std::size_t k) {
    double sup = 0.0;
    for (std::size_t t = 0; t < test_points.size(); ++t)
      sup = std::max(sup, operator_norm(ComplexMatrix(eval_G(family[k], test_points[t]) - limits[t])));
    rep.sup_error[k] = sup;
  });
  for (std::size_t k = 1; k < rep.sup_error.size(); ++k)
    if (rep.sup_error[k] > rep.sup_error[k - 1] + kConvergenceNoise) rep.monotone = false;
  for (std::size_t k = 0; k < std::min(envelope.size(), rep.sup_error.size()); ++k)
    if (rep.sup_error[k] > envelope[k]) rep.within_envelope = false;

  // a Cauchy transform of a probability law satisfies iy·G(iy) → 1
  const Eigen::Index m = test_points.front().rows();
  const double y = 1e8;
  const ComplexMatrix probe = cplx(0.0, y) * limit(cplx(0.0, y) * ComplexMatrix::Identity(m, m));
  rep.limit_mass = probe.trace().real() / double(m);
  rep.mass_deficit = std::abs(rep.limit_mass - 1.0) > 1e-3;

  // a vaguely convergent sequence is tight exactly when no mass escapes
  std::vector<ScalarMeasure> laws;
  for (const auto& d : family)
    if (auto se = d.as<ScalarEmbedded>()) laws.push_back(se->law);
  if (!laws.empty() && laws.size() == family.size()) {
    rep.tightness_cutoff = tightness_cutoff(laws, tightness_eps);
    rep.tight = rep.tightness_cutoff.has_value() && !rep.mass_deficit;
  }
  return rep;
}

}  // namespace ovfree
