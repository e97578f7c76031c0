#include <doctest.h>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "ovfree/convolution.hpp"
#include "ovfree/matrix_model.hpp"

using namespace ovfree;
using test::dist;

namespace {

const cplx I(0.0, 1.0);

ComplexMatrix mat2(cplx a, cplx b, cplx c, cplx d) {
  ComplexMatrix m(2, 2);
  m << a, b, c, d;
  return m;
}

ConvolutionTask task_for(OVDistribution X, OVDistribution Y, std::optional<OVDistribution> sum, double lambda = 0.01,
                         int base_dim = 1, int points = 10) {
  return make_convolution_task(std::move(X), std::move(Y), std::move(sum), BasePoint{1, base_dim, lambda}, lambda / 2,
                               points, 17);
}

// G of the semicircle law with variance v
cplx semicircle_g(double v, cplx z) {
  cplx s = std::sqrt(z * z - 4.0 * v);
  if ((s / z).real() < 0.0) s = -s;
  return (z - s) / (2.0 * v);
}

std::vector<double> cutoffs() { return {1, 2, 4, 8, 16, 32}; }

}  // namespace

TEST_CASE("r_sum examples") {
  const ComplexMatrix c1 = 0.3 * ComplexMatrix::Identity(1, 1), c2 = -0.1 * ComplexMatrix::Identity(1, 1);
  const ConvolutionTask dirac = task_for(OVDistribution::dirac(c1), OVDistribution::dirac(c2), std::nullopt);
  for (const ComplexMatrix& r : r_sum(dirac)) CHECK(dist(r, test::scalar_matrix(0.2, 2)) < 1e-12);

  const OVDistribution cauchy = OVDistribution::scalar(ScalarMeasure::cauchy());
  const ConvolutionTask trivial =
      task_for(OVDistribution::scalar(ScalarMeasure::point_mass(0.0)), cauchy, std::nullopt);
  const CertifiedBall& cb = trivial.ball.members[1];
  for (const ComplexMatrix& w : trivial.eval_points) CHECK(dist(r_sum_at(trivial, w), r_transform(cauchy, w, cb)) < 1e-10);

  const ConvolutionTask sc = task_for(OVDistribution::scalar(ScalarMeasure::semicircle(0.5)),
                                      OVDistribution::scalar(ScalarMeasure::semicircle(1.5)), std::nullopt, 0.02);
  const std::vector<ComplexMatrix> rs = r_sum(sc);
  REQUIRE(rs.size() == sc.eval_points.size());
  for (std::size_t j = 0; j < rs.size(); ++j) CHECK(dist(rs[j], ComplexMatrix(2.0 * sc.eval_points[j])) < 1e-10);
}

TEST_CASE("joint ball targets lie in every member's certified image") {
  const ConvolutionTask t = task_for(OVDistribution::scalar(ScalarMeasure::semicircle(1.0)),
                                     OVDistribution::scalar(ScalarMeasure::bernoulli(1.0)),
                                     OVDistribution::scalar(ScalarMeasure::cauchy()), 0.02);
  CHECK(t.ball.target_radius > 0.0);
  for (const ComplexMatrix& w : t.eval_points)
    for (const CertifiedBall& b : t.ball.members) CHECK(dist(w, b.image_center) < b.P);
}

TEST_CASE("eval_G_of_sum examples") {
  const OVDistribution sc = OVDistribution::scalar(ScalarMeasure::semicircle(1.0));
  const SumEvaluation s = eval_G_of_sum(sc, sc, test::scalar_matrix(2.0 * I, 1));
  CHECK(std::abs(s.G(0, 0) - semicircle_g(2.0, 2.0 * I)) < 1e-10);
  CHECK(std::abs(s.G(0, 0) - I * (1.0 - std::sqrt(3.0)) / 2.0) < 1e-10);
  CHECK(s.residual <= kSumResidualTol);

  const OVDistribution cauchy = OVDistribution::scalar(ScalarMeasure::cauchy());
  CHECK(std::abs(eval_G_of_sum(cauchy, cauchy, test::scalar_matrix(2.0 * I, 1)).G(0, 0) - (-0.25 * I)) < 1e-10);

  const ComplexMatrix c1 = mat2(0.5, 0.1, 0.1, -0.2), c2 = mat2(0.0, 0.3, 0.3, 1.0);
  const ComplexMatrix b = mat2(cplx(0.2, 1.5), 0.4, 0.1, cplx(-0.3, 2.0));
  const SumEvaluation d = eval_G_of_sum(OVDistribution::dirac(c1), OVDistribution::dirac(c2), b);
  CHECK(dist(d.G, inverse(ComplexMatrix(b - c1 - c2))) < 1e-10);
}

TEST_CASE("sum of semicircles matches the closed form at matrix points") {
  const OVDistribution sc = OVDistribution::scalar(ScalarMeasure::semicircle(1.0));
  const OVDistribution sc2 = OVDistribution::scalar(ScalarMeasure::semicircle(2.0));
  std::mt19937_64 rng(5);
  for (int k = 0; k < 10; ++k) {
    const ComplexMatrix b = test::random_upper(2, rng, 0.8);
    CHECK(dist(eval_G_of_sum(sc, sc, b).G, eval_G(sc2, b)) < 1e-9);
  }
}

TEST_CASE("eval_G_of_sum is commutative and Nevanlinna") {
  const OVDistribution X = OVDistribution::scalar(ScalarMeasure::semicircle(1.0));
  const OVDistribution Y = OVDistribution::scalar(ScalarMeasure::cauchy(0.5, 0.7));
  std::mt19937_64 rng(6);
  for (int k = 0; k < 20; ++k) {
    const ComplexMatrix b = test::random_upper(1 + k % 2, rng, 0.5 + 0.1 * k);
    const ComplexMatrix gxy = eval_G_of_sum(X, Y, b).G;
    CHECK(dist(gxy, eval_G_of_sum(Y, X, b).G) <= 1e-10);
    CHECK(operator_norm(gxy) <= (1 + 1e-9) / half_plane_margin(b));
    CHECK(max_hermitian_eigenvalue(imag_part(gxy)) < 0.0);
  }
}

TEST_CASE("eval_G_of_sum accepts the reflected block pattern") {
  const OVDistribution sc = OVDistribution::scalar(ScalarMeasure::semicircle(1.0));
  const OVDistribution sc2 = OVDistribution::scalar(ScalarMeasure::semicircle(2.0));
  const ComplexMatrix b = mat2(-3.0 * I, 0.2, 0.2, 3.0 * I);
  CHECK(dist(eval_G_of_sum(sc, sc, b).G, eval_G(sc2, b)) < 1e-9);
  try {
    eval_G_of_sum(sc, sc, ComplexMatrix::Identity(2, 2));
    FAIL("expected OutsideResolvent");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::OutsideResolvent);
  }
}

TEST_CASE("additivity: operator-valued semicircular") {
  const ComplexMatrix a1 = mat2(1.0, 0.2, 0.2, 0.5), a2 = mat2(0.0, cplx(0.3, 0.1), cplx(0.3, -0.1), 0.7);
  const ConvolutionTask t = task_for(OVDistribution::semicircular({a1}), OVDistribution::semicircular({a2}),
                                     OVDistribution::semicircular({a1, a2}), 0.01, 2);
  const AdditivityReport rep = verify_additivity(t);
  CHECK(rep.max_discrepancy <= 1e-8);
  CHECK(rep.max_budget == 0.0);
}

TEST_CASE("additivity: Bernoulli against arcsine") {
  const OVDistribution b = OVDistribution::scalar(ScalarMeasure::bernoulli(1.0));
  const ConvolutionTask t = task_for(b, b, OVDistribution::scalar(ScalarMeasure::arcsine(2.0)), 0.02);
  CHECK(verify_additivity(t).max_discrepancy <= 1e-6);
}

TEST_CASE("additivity: Dirac") {
  const ComplexMatrix c1 = 0.4 * ComplexMatrix::Identity(1, 1), c2 = -0.7 * ComplexMatrix::Identity(1, 1);
  const ConvolutionTask t = task_for(OVDistribution::dirac(c1), OVDistribution::dirac(c2),
                                     OVDistribution::dirac(ComplexMatrix(c1 + c2)), 0.01);
  CHECK(verify_additivity(t).max_discrepancy <= 1e-12);
}

TEST_CASE("additivity against a matrix model stays within its error budget") {
  MatrixModelSpec spec;
  spec.N = 200;
  spec.trials = 16;
  spec.seed = 8;
  spec.vars = {{ScalarMeasure::semicircle(1.0), Realization::GUE}, {ScalarMeasure::semicircle(1.0), Realization::GUE}};
  spec.mixer = "X1 + X2";
  const OVDistribution sc = OVDistribution::scalar(ScalarMeasure::semicircle(1.0));
  const ConvolutionTask t = task_for(sc, sc, OVDistribution::matrix_model(spec), 0.02, 1, 5);
  const AdditivityReport rep = verify_additivity(t);
  CHECK(rep.max_budget > 0.0);
  CHECK(rep.within_budget);
}

TEST_CASE("truncation sweep examples") {
  const ComplexMatrix b = test::scalar_matrix(2.0 * I, 1);
  const std::vector<double> ks = cutoffs();
  for (const TruncationRow& row : truncation_sweep(OVDistribution::scalar(ScalarMeasure::point_mass(0.0)), b, ks, 2.1, 1.9))
    CHECK(row.error == 0.0);

  const double k1 = 1.0;
  const auto cauchy = truncation_sweep(OVDistribution::scalar(ScalarMeasure::cauchy()), b, std::span(&k1, 1), 2.1, 1.9);
  CHECK(cauchy[0].bound == doctest::Approx(std::sqrt(0.5) * (1 + 2.1 / 1.9) / 1.9));
  CHECK(cauchy[0].bound == doctest::Approx(0.7835).epsilon(1e-3));
  CHECK(cauchy[0].error < cauchy[0].bound);

  const double k4 = 4.0;
  CHECK(truncation_sweep(OVDistribution::scalar(ScalarMeasure::bernoulli(3.0)), b, std::span(&k4, 1), 2.1, 1.9)[0].error == 0.0);
}

TEST_CASE("truncation bound holds across laws, cutoffs and points") {
  const std::vector<double> ks = cutoffs();
  for (const ScalarMeasure& mu : {ScalarMeasure::cauchy(), ScalarMeasure::semicircle(1.0), ScalarMeasure::bernoulli(1.0)})
    for (const ComplexMatrix& b : test_set(2, 4.0, 1.0, 5, 3))
      for (const TruncationRow& row : truncation_sweep(OVDistribution::scalar(mu), b, ks, 4.0, 1.0)) {
        CHECK(row.within_bound);
        CHECK(row.error <= row.bound);
      }
}

TEST_CASE("truncation sweep enforces its margins") {
  const std::vector<double> ks{1.0};
  const OVDistribution d = OVDistribution::scalar(ScalarMeasure::cauchy());
  for (double C : {2.0, 1.5}) {
    try {
      truncation_sweep(d, test::scalar_matrix(2.0 * I, 1), ks, C, 1.9);
      FAIL("expected MarginViolation");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::MarginViolation);
    }
  }
  CHECK_THROWS_AS(truncation_sweep(d, test::scalar_matrix(2.0 * I, 1), ks, 3.0, 2.0), Error);
}

TEST_CASE("test sets respect their constraints") {
  for (const ComplexMatrix& b : test_set(3, 4.0, 1.0, 20, 9)) {
    CHECK(operator_norm(b) < 4.0);
    CHECK(half_plane_margin(b) > 1.0);
  }
}

TEST_CASE("convergence of Cauchy truncations") {
  const ScalarMeasure mu = ScalarMeasure::cauchy();
  const OVDistribution full = OVDistribution::scalar(mu);
  std::vector<OVDistribution> family;
  std::vector<double> envelope;
  for (double k : cutoffs()) {
    const TruncationResult tr = truncate(mu, k);
    family.push_back(OVDistribution::scalar(tr.truncated));
    envelope.push_back(std::sqrt(1.0 - tr.retained_mass) * (1.0 + 4.0) / 1.0);
  }
  const std::vector<ComplexMatrix> pts = test_set(1, 4.0, 1.0, 20, 4);
  const ConvergenceReport rep =
      convergence_check(family, [&](const ComplexMatrix& b) { return eval_G(full, b); }, pts, envelope);
  CHECK(rep.monotone);
  CHECK(rep.within_envelope);
  CHECK(rep.sup_error.back() < rep.sup_error.front());
  REQUIRE(rep.tight.has_value());
  CHECK(*rep.tight);
  CHECK_FALSE(rep.mass_deficit);
  CHECK(rep.limit_mass == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("constant family converges trivially") {
  const OVDistribution d = OVDistribution::scalar(ScalarMeasure::semicircle(1.0));
  const std::vector<OVDistribution> family(4, d);
  const ConvergenceReport rep =
      convergence_check(family, [&](const ComplexMatrix& b) { return eval_G(d, b); }, test_set(2, 4.0, 1.0, 8, 5));
  for (double e : rep.sup_error) CHECK(e == 0.0);
  CHECK(rep.monotone);
  CHECK_FALSE(rep.mass_deficit);
}

TEST_CASE("escaping family is flagged") {
  std::vector<OVDistribution> family;
  for (double k : cutoffs()) family.push_back(OVDistribution::scalar(ScalarMeasure::atomic({{0.0, 0.5}, {k, 0.5}})));
  const std::vector<ComplexMatrix> pts{test::scalar_matrix(2.0 * I, 1)};
  const ConvergenceReport rep =
      convergence_check(family, [](const ComplexMatrix& b) { return ComplexMatrix(0.5 * inverse(b)); }, pts);
  CHECK(rep.mass_deficit);
  CHECK(rep.limit_mass == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(std::abs(rep.limit_at_probe(0, 0) - (-0.25 * I)) < 1e-15);
  REQUIRE(rep.tight.has_value());
  CHECK_FALSE(*rep.tight);
  CHECK(rep.sup_error.back() < rep.sup_error.front());
}
