#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "ovfree/matrix_model.hpp"

using namespace ovfree;
using test::dist;

namespace {

const cplx I(0.0, 1.0);

double semicircle_cdf(double x) {
  if (x <= -2) return 0.0;
  if (x >= 2) return 1.0;
  return 0.5 + (x * std::sqrt(4 - x * x) / 4 + std::asin(x / 2)) / std::numbers::pi;
}

/// real and imaginary parts each within k standard errors
bool within(cplx diff, double se, double k = 3.0) { return std::abs(diff.real()) <= k * se && std::abs(diff.imag()) <= k * se; }

}  // namespace

TEST_CASE("stream engines are reproducible and distinct") {
  auto a = stream_engine(42, 0), b = stream_engine(42, 0), c = stream_engine(42, 1);
  const auto va = a(), vb = b(), vc = c();
  CHECK(va == vb);
  CHECK(va != vc);
  CHECK(splitmix64(1) != splitmix64(2));
}

TEST_CASE("Haar unitaries are unitary") {
  auto rng = stream_engine(7, 0);
  const ComplexMatrix u = haar_unitary(40, rng);
  CHECK(dist(u * u.adjoint(), ComplexMatrix::Identity(40, 40)) < 1e-12);
}

TEST_CASE("GUE spectrum is close to the semicircle") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto rng = stream_engine(seed, 0);
    const ComplexMatrix h = gue_matrix(500, rng);
    CHECK(is_hermitian(h));
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h, Eigen::EigenvaluesOnly);
    std::vector<double> ev(es.eigenvalues().data(), es.eigenvalues().data() + 500);
    std::sort(ev.begin(), ev.end());
    double ks = 0.0;
    for (int j = 0; j < 500; ++j) {
      const double f = semicircle_cdf(ev[j]);
      ks = std::max({ks, std::abs(f - double(j) / 500), std::abs(f - double(j + 1) / 500)});
    }
    CHECK(ks <= 0.08);
  }
}

TEST_CASE("Haar-rotated Bernoulli keeps its spectrum") {
  auto rng = stream_engine(9, 0);
  const ComplexMatrix x = sample_scalar_variable({ScalarMeasure::bernoulli(1.0), Realization::HaarRotated}, 64, rng);
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(x, Eigen::EigenvaluesOnly);
  for (int j = 0; j < 64; ++j) CHECK(std::abs(std::abs(es.eigenvalues()(j)) - 1.0) < 1e-12);
  CHECK(std::abs(x.trace()) < 1e-10);
}

TEST_CASE("point-mass model is a scalar matrix") {
  MatrixModelSpec spec;
  spec.n = 2;
  spec.N = 8;
  spec.vars = {{ScalarMeasure::point_mass(1.5), Realization::HaarRotated}};
  spec.mixer = "X1";
  const ComplexMatrix s = sample_matrix_model(spec, 8, 5);
  CHECK(dist(s, test::scalar_matrix(1.5, 16)) < 1e-12);
  ComplexMatrix b(2, 2);
  b << cplx(0.2, 1.0), 0.3, 0.3, cplx(-0.1, 2.0);
  const MCEstimate est = mc_estimate_G(spec, b);
  CHECK(dist(est.mean, inverse(ComplexMatrix(b - test::scalar_matrix(1.5, 2)))) < 1e-12);
  CHECK(est.standard_error < 1e-12);
}

TEST_CASE("mixer grammar with matrix coefficients") {
  std::map<std::string, ComplexMatrix> consts;
  ComplexMatrix e1 = ComplexMatrix::Zero(2, 2), e2 = ComplexMatrix::Zero(2, 2);
  e1(0, 0) = 1;
  e2(1, 1) = 1;
  consts["E1"] = e1;
  consts["E2"] = e2;
  MatrixModelSpec spec;
  spec.n = 2;
  spec.N = 4;
  spec.vars = {{ScalarMeasure::point_mass(1.0), Realization::HaarRotated},
               {ScalarMeasure::point_mass(-2.0), Realization::HaarRotated}};
  spec.mixer = "E1*X1 + E2*X2";
  spec.constants = consts;
  const ComplexMatrix s = sample_matrix_model(spec, 4, 1);
  const ComplexMatrix expected = kron(ComplexMatrix(e1 - 2.0 * e2), ComplexMatrix(ComplexMatrix::Identity(4, 4)));
  CHECK(dist(s, expected) < 1e-12);
  CHECK_THROWS_AS(parse_mixer("X3", 2, consts), Error);
  CHECK_THROWS_AS(parse_mixer("E9*X1", 2, consts), Error);
}

TEST_CASE("single GUE: G(2i) within three standard errors of the semicircle") {
  MatrixModelSpec spec;
  spec.N = 500;
  spec.trials = 32;
  spec.seed = 2024;
  spec.vars = {{ScalarMeasure::semicircle(1.0), Realization::GUE}};
  const MCEstimate est = mc_estimate_G(spec, test::scalar_matrix(2.0 * I, 1));
  const cplx exact = I * (1.0 - std::sqrt(2.0));
  CHECK(est.trials == 32);
  CHECK(est.standard_error > 0.0);
  CHECK(within(est.mean(0, 0) - exact, est.standard_error));
}

TEST_CASE("free Bernoulli sum: G(2i) within three standard errors of the arcsine law") {
  MatrixModelSpec spec;
  spec.N = 400;
  spec.trials = 32;
  spec.seed = 77;
  spec.vars = {{ScalarMeasure::bernoulli(1.0), Realization::HaarRotated},
               {ScalarMeasure::bernoulli(1.0), Realization::HaarRotated}};
  spec.mixer = "X1 + X2";
  const MCEstimate est = mc_estimate_G(spec, test::scalar_matrix(2.0 * I, 1));
  const cplx exact = -I / (2.0 * std::sqrt(2.0));
  CHECK(within(est.mean(0, 0) - exact, est.standard_error));
}

TEST_CASE("estimates at N and 2N agree within five combined standard errors") {
  MatrixModelSpec spec;
  spec.trials = 16;
  spec.seed = 5;
  spec.vars = {{ScalarMeasure::bernoulli(1.0), Realization::HaarRotated},
               {ScalarMeasure::semicircle(1.0), Realization::HaarRotated}};
  spec.mixer = "X1 + X2";
  const ComplexMatrix b = test::scalar_matrix(cplx(0.5, 1.5), 1);
  spec.N = 100;
  const MCEstimate a = mc_estimate_G(spec, b);
  spec.N = 200;
  const MCEstimate c = mc_estimate_G(spec, b);
  const double combined = std::hypot(a.standard_error, c.standard_error);
  CHECK(within(a.mean(0, 0) - c.mean(0, 0), combined, 5.0));
}

TEST_CASE("sampler is deterministic given its seed") {
  MatrixModelSpec spec;
  spec.N = 60;
  spec.trials = 4;
  spec.seed = 31;
  spec.vars = {{ScalarMeasure::cauchy(), Realization::HaarRotated}};
  const ComplexMatrix b = test::scalar_matrix(cplx(0.1, 1.0), 1);
  const MCEstimate a = MatrixModelSampler(spec).estimate_G(b);
  const MCEstimate c = MatrixModelSampler(spec).estimate_G(b);
  CHECK(a.mean(0, 0) == c.mean(0, 0));
  CHECK(a.standard_error == c.standard_error);
}

TEST_CASE("free mixed moments on matrix models") {
  const std::vector<ScalarMeasure> laws{ScalarMeasure::cauchy(), ScalarMeasure::cauchy()};
  const Word w{{2.0 * I, 0}, {3.0 * I, 1}};
  const MCScalarEstimate est = mc_mixed_moment(w, laws, 200, 16, 3);
  CHECK(within(est.mean - (-1.0 / 12.0), est.standard_error));
}
