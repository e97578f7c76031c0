#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "ovfree/matrix_model.hpp"
#include "ovfree/transforms.hpp"

using namespace ovfree;
using test::dist;

namespace {

const cplx I(0.0, 1.0);

ComplexMatrix mat2(cplx a, cplx b, cplx c, cplx d) {
  ComplexMatrix m(2, 2);
  m << a, b, c, d;
  return m;
}

// r(λ)/λ ∈ [c/2, 2c] for c = √(min·max)
bool within_factor_two_band(const std::vector<double>& ratio) {
  const auto [lo, hi] = std::minmax_element(ratio.begin(), ratio.end());
  return *hi / *lo <= 4.0;
}

std::vector<ComplexMatrix> targets_in(const CertifiedBall& ball, int count, std::uint64_t seed) {
  std::vector<ComplexMatrix> out;
  for (int j = 0; j < count; ++j) {
    auto rng = stream_engine(seed, j);
    out.push_back(random_ball_point(ball.image_center, 0.9 * ball.P, rng));
  }
  return out;
}

}  // namespace

TEST_CASE("omega_membership examples") {
  const BasePoint d{1, 1, 0.7};
  const OmegaResult base = omega_membership(d.matrix(), 1);
  REQUIRE(std::holds_alternative<OmegaPoint>(base));
  CHECK(std::get<OmegaPoint>(base).margin == doctest::Approx(0.7));

  const OmegaResult pert = omega_membership(mat2(I, 0.5, 0.5, -I), 1);
  REQUIRE(std::holds_alternative<OmegaPoint>(pert));
  CHECK(std::get<OmegaPoint>(pert).margin == doctest::Approx(0.5));

  const OmegaResult wrong = omega_membership(mat2(I, 0.0, 0.0, I), 1);
  REQUIRE(std::holds_alternative<OmegaReject>(wrong));
  CHECK(std::get<OmegaReject>(wrong).reason == OmegaRejection::WrongPattern);

  const OmegaResult big = omega_membership(mat2(I, 1.5, 1.5, -I), 1);
  REQUIRE(std::holds_alternative<OmegaReject>(big));
  CHECK(std::get<OmegaReject>(big).reason == OmegaRejection::PerturbationTooLarge);
}

TEST_CASE("omega points with matrix blocks stay in every resolvent set") {
  std::mt19937_64 rng(21);
  int accepted = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 2, k = 2;
    ComplexMatrix b = ComplexMatrix::Zero(2 * n * k, 2 * n * k);
    for (int j = 0; j < 2 * n; ++j) {
      const ComplexMatrix blk = test::random_upper(k, rng, 0.5);
      b.block(j * k, j * k, k, k) = (j % 2 == 0) ? blk : ComplexMatrix(blk.adjoint());
    }
    b += 0.2 * test::random_matrix(2 * n * k, rng) / double(2 * n * k);
    const OmegaResult res = omega_membership(b, n, k);
    if (!std::holds_alternative<OmegaPoint>(res)) continue;
    ++accepted;
    const double margin = std::get<OmegaPoint>(res).margin;
    const int N = 3;
    const ComplexMatrix a = test::random_hermitian(N, rng, 100.0);
    const ComplexMatrix big = kron(ComplexMatrix(ComplexMatrix::Identity(2 * n * k, 2 * n * k)), a) -
                              kron(b, ComplexMatrix(ComplexMatrix::Identity(N, N)));
    CHECK(operator_norm(inverse(big)) <= (1.0 + 1e-9) / margin);
  }
  CHECK(accepted > 100);
}

TEST_CASE("base points and the K map") {
  const BasePoint d{2, 1, 0.5};
  const ComplexMatrix m = d.matrix();
  CHECK(m.rows() == 4);
  CHECK(m(0, 0) == 0.5 * I);
  CHECK(m(1, 1) == -0.5 * I);
  CHECK(m(2, 2) == 0.5 * I);
  CHECK(m(3, 3) == -0.5 * I);

  const ComplexMatrix w = mat2(cplx(0.1, 0.4), 0.05, 0.02, cplx(0.0, -0.3));
  CHECK(dist(k_map(OVDistribution::dirac(ComplexMatrix::Zero(1, 1)), w), w) < 1e-15);
  const ComplexMatrix winv = inverse(w);
  // w in the lower half plane, so w^{-1} is in the upper one
  const ComplexMatrix low = mat2(cplx(0.1, -0.4), 0.05, 0.02, cplx(0.0, -0.3));
  CHECK(dist(k_map(OVDistribution::scalar(ScalarMeasure::cauchy()), low),
             inverse(ComplexMatrix(inverse(low) + I * ComplexMatrix::Identity(2, 2)))) < 1e-14);
  const OVDistribution sc = OVDistribution::scalar(ScalarMeasure::semicircle(1.0));
  CHECK(dist(k_map(sc, w), eval_G(sc, winv)) == 0.0);
}

TEST_CASE("K Jacobian matches finite differences") {
  const OVDistribution d = OVDistribution::scalar(ScalarMeasure::semicircle(1.0));
  const ComplexMatrix w = BasePoint{1, 1, 0.4}.matrix() + mat2(0.01, 0.02, 0.0, -0.01);
  const ComplexMatrix J = k_jacobian(d, w);
  std::mt19937_64 rng(3);
  const ComplexMatrix h = test::random_matrix(2, rng);
  const double s = 1e-7;
  const ComplexMatrix fd = (k_map(d, ComplexMatrix(w + s * h)) - k_map(d, ComplexMatrix(w - s * h))) / (2 * s);
  CHECK((J * vec(h) - vec(fd)).norm() < 1e-6 * fd.norm());
}

TEST_CASE("Bloch radii formulas") {
  const BlochRadii r = bloch_radii(1.0, 1.0, 1.0);
  CHECK(r.r == 0.25);
  CHECK(r.P == 0.125);
}

TEST_CASE("certification of Dirac and Cauchy laws") {
  const CertifiedBall dirac = bloch_certify(OVDistribution::dirac(ComplexMatrix::Zero(1, 1)), BasePoint{1, 1, 0.6}, 0.3);
  CHECK(dirac.r > 0.0);
  CHECK(dirac.r <= dirac.R);
  CHECK(dirac.P > 0.0);
  CHECK(dirac.P <= dirac.M);

  const OVDistribution cauchy = OVDistribution::scalar(ScalarMeasure::cauchy());
  const CertifiedBall ball = bloch_certify(cauchy, BasePoint{1, 1, 0.5}, 0.25);
  CHECK(ball.r > 0.0);
  CHECK(ball.r <= ball.R);
  CHECK(injectivity_spot_check(cauchy, ball, 200, 9) > 0.0);
  CHECK_THROWS_AS(bloch_certify(cauchy, BasePoint{1, 1, 0.5}, 0.3), Error);
}

TEST_CASE("inversion examples") {
  const OVDistribution zero = OVDistribution::dirac(ComplexMatrix::Zero(1, 1));
  const CertifiedBall bz = bloch_certify(zero, BasePoint{1, 1, 0.5}, 0.25);
  for (const ComplexMatrix& w : targets_in(bz, 5, 1)) CHECK(dist(invert_G(zero, w, bz), inverse(w)) < 1e-12);

  const OVDistribution shifted = OVDistribution::dirac(0.3 * ComplexMatrix::Identity(1, 1));
  const CertifiedBall bs = bloch_certify(shifted, BasePoint{1, 1, 0.5}, 0.25);
  for (const ComplexMatrix& w : targets_in(bs, 5, 2))
    CHECK(dist(invert_G(shifted, w, bs), ComplexMatrix(inverse(w) + 0.3 * ComplexMatrix::Identity(2, 2))) < 1e-12);

  const OVDistribution sc = OVDistribution::scalar(ScalarMeasure::semicircle(1.0));
  const ComplexMatrix b = invert_G_uncertified(sc, test::scalar_matrix(-I / 3.0, 1), test::scalar_matrix(2.5 * I, 1));
  CHECK(std::abs(b(0, 0) - 8.0 * I / 3.0) < 1e-12);
  CHECK(std::abs(eval_G(sc, b)(0, 0) - (-I / 3.0)) < 1e-12);
}

TEST_CASE("targets outside the certified image are refused") {
  const OVDistribution d = OVDistribution::scalar(ScalarMeasure::cauchy());
  const CertifiedBall ball = bloch_certify(d, BasePoint{1, 1, 0.5}, 0.25);
  const ComplexMatrix far = ball.image_center + 2.0 * ball.P * ComplexMatrix::Identity(2, 2);
  try {
    invert_G(d, far, ball);
    FAIL("expected LeftCertifiedBall");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::LeftCertifiedBall);
  }
}

TEST_CASE("R-transform examples") {
  const ComplexMatrix b0 = 0.4 * ComplexMatrix::Identity(1, 1);
  const OVDistribution dirac = OVDistribution::dirac(b0);
  const CertifiedBall bd = bloch_certify(dirac, BasePoint{1, 1, 0.5}, 0.25);
  for (const ComplexMatrix& w : targets_in(bd, 5, 3))
    CHECK(dist(r_transform(dirac, w, bd), test::scalar_matrix(0.4, 2)) < 1e-12);

  const OVDistribution pm = OVDistribution::scalar(ScalarMeasure::point_mass(0.0));
  const CertifiedBall bp = bloch_certify(pm, BasePoint{1, 1, 0.5}, 0.25);
  for (const ComplexMatrix& w : targets_in(bp, 5, 4)) CHECK(operator_norm(r_transform(pm, w, bp)) < 1e-12);

  for (double var : {0.5, 2.0}) {
    const OVDistribution sc = OVDistribution::scalar(ScalarMeasure::semicircle(var));
    const CertifiedBall bsc = bloch_certify(sc, BasePoint{1, 1, 0.3}, 0.15);
    for (const ComplexMatrix& w : targets_in(bsc, 5, 5)) CHECK(dist(r_transform(sc, w, bsc), ComplexMatrix(var * w)) < 1e-10);
  }
}

TEST_CASE("round trip on 100 targets per ball") {
  const std::vector<OVDistribution> dists{OVDistribution::scalar(ScalarMeasure::cauchy()),
                                          OVDistribution::scalar(ScalarMeasure::semicircle(1.0)),
                                          OVDistribution::scalar(ScalarMeasure::bernoulli(1.0)),
                                          OVDistribution::semicircular({ComplexMatrix::Identity(1, 1)})};
  for (const auto& d : dists)
    for (double lambda : {0.1, 0.4}) {
      const CertifiedBall ball = bloch_certify(d, BasePoint{1, 1, lambda}, lambda / 2);
      double worst = 0.0;
      for (const ComplexMatrix& w : targets_in(ball, 100, 6)) {
        const ComplexMatrix b = invert_G(d, w, ball);
        worst = std::max(worst, dist(eval_G(d, b), w));
        CHECK(dist(inverse(b), ball.center) <= ball.r * (1 + 1e-12));
      }
      CHECK(worst <= 1e-9);
    }
}

TEST_CASE("diagonal targets have diagonal preimages") {
  const OVDistribution d = OVDistribution::scalar(ScalarMeasure::cauchy());
  const CertifiedBall ball = bloch_certify(d, BasePoint{2, 1, 0.3}, 0.15);
  ComplexMatrix w = ball.image_center;
  for (int j = 0; j < 4; ++j) w(j, j) += 0.3 * ball.P * std::polar(1.0, 0.7 * j);
  const ComplexMatrix b = invert_G(d, w, ball);
  const ComplexMatrix off = b - ComplexMatrix(b.diagonal().asDiagonal());
  CHECK(operator_norm(off) <= 1e-8);
  for (int j = 0; j < 4; ++j) {
    // scalar Cauchy: G^{⟨−1⟩}(w) = 1/w ∓ i on the upper/lower half plane
    const cplx expected = 1.0 / w(j, j) + (j % 2 == 0 ? I : -I);
    CHECK(std::abs(b(j, j) - expected) <= 1e-8);
    CHECK((j % 2 == 0 ? -1.0 : 1.0) * b(j, j).imag() > 0.0);
  }
}

TEST_CASE("certified radius scales linearly in lambda") {
  for (const ScalarMeasure& mu : {ScalarMeasure::cauchy(), ScalarMeasure::semicircle(1.0), ScalarMeasure::bernoulli(1.0),
                                  ScalarMeasure::arcsine(1.0)}) {
    const OVDistribution d = OVDistribution::scalar(mu);
    std::vector<double> ratio;
    for (double lambda : {0.1, 0.2, 0.4, 0.8}) ratio.push_back(bloch_certify(d, BasePoint{1, 1, lambda}, lambda / 2).r / lambda);
    CHECK(within_factor_two_band(ratio));
  }
}

TEST_CASE("certified image radius is O(lambda) as lambda shrinks") {
  for (const ScalarMeasure& mu : {ScalarMeasure::cauchy(), ScalarMeasure::semicircle(1.0), ScalarMeasure::bernoulli(1.0)}) {
    const OVDistribution d = OVDistribution::scalar(mu);
    std::vector<double> ratio;
    for (double lambda : {0.0025, 0.005, 0.01, 0.02}) ratio.push_back(bloch_certify(d, BasePoint{1, 1, lambda}, lambda / 2).P / lambda);
    const auto [lo, hi] = std::minmax_element(ratio.begin(), ratio.end());
    CHECK(*hi / *lo <= 2.0);
  }
}

TEST_CASE("forward map obeys the Lipschitz envelope on the certified ball") {
  const OVDistribution d = OVDistribution::scalar(ScalarMeasure::semicircle(1.0));
  const CertifiedBall ball = bloch_certify(d, BasePoint{1, 1, 0.4}, 0.2);
  std::mt19937_64 rng(31);
  for (int k = 0; k < 100; ++k) {
    const ComplexMatrix x = random_ball_point(ball.center, 0.5 * ball.r, rng);
    const ComplexMatrix y = random_ball_point(x, 0.45 * ball.r * (k + 1) / 100.0, rng);
    const double dxy = dist(x, y);
    if (!(2 * dxy < ball.r)) continue;
    CHECK(dist(k_map(d, x), k_map(d, y)) <= 2 * ball.M * dxy / (ball.r - 2 * dxy));
  }
}

TEST_CASE("block resolvent identity") {
  const OVDistribution pm = OVDistribution::scalar(ScalarMeasure::point_mass(0.0));
  CHECK(block_resolvent_identity_check(pm, test::scalar_matrix(3.0 * I, 2)) <= 1e-12);
  const OVDistribution cauchy = OVDistribution::scalar(ScalarMeasure::cauchy());
  CHECK(block_resolvent_identity_check(cauchy, test::scalar_matrix(3.0 * I, 2)) <= 1e-9);

  std::mt19937_64 rng(41);
  ComplexMatrix g = test::random_matrix(2, rng);
  Eigen::JacobiSVD<ComplexMatrix> svd(g, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const ComplexMatrix B = svd.matrixU() * Eigen::Vector2d(2.0, 3.0).cast<cplx>().asDiagonal() * svd.matrixV().adjoint();
  CHECK(operator_norm(inverse(B)) == doctest::Approx(0.5));
  CHECK(block_resolvent_identity_check(OVDistribution::scalar(ScalarMeasure::semicircle(1.0)), B) <= 1e-9);

  try {
    block_resolvent_identity_check(cauchy, test::scalar_matrix(0.5 * I, 2));
    FAIL("expected BNotDominant");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::BNotDominant);
  }
}
