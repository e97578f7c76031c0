#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "ovfree/measures.hpp"

using namespace ovfree;

namespace {

const cplx I(0.0, 1.0);

std::vector<ScalarMeasure> sample_laws() {
  return {ScalarMeasure::cauchy(),
          ScalarMeasure::cauchy(0.5, 2.0),
          ScalarMeasure::semicircle(1.0),
          ScalarMeasure::semicircle(0.3),
          ScalarMeasure::bernoulli(1.0),
          ScalarMeasure::bernoulli(2.0, 0.5),
          ScalarMeasure::arcsine(1.5),
          ScalarMeasure::point_mass(0.7),
          ScalarMeasure::atomic({{-1.0, 0.25}, {0.0, 0.5}, {3.0, 0.25}}),
          ScalarMeasure(QuadratureLaw{{-1.0, 0.0, 2.0}, {0.2, 0.3, 0.5}})};
}

}  // namespace

TEST_CASE("g_scalar closed forms") {
  CHECK(std::abs(g_scalar(ScalarMeasure::cauchy(), 2.0 * I) - (-I / 3.0)) < 1e-15);
  CHECK(std::abs(g_scalar(ScalarMeasure::point_mass(0.0), I) - (-I)) < 1e-15);
  CHECK(std::abs(g_scalar(ScalarMeasure::semicircle(1.0), 2.0 * I) - I * (1.0 - std::sqrt(2.0))) < 1e-12);
  // lower half plane uses the reflected closed form
  CHECK(std::abs(g_scalar(ScalarMeasure::cauchy(), -2.0 * I) - (I / 3.0)) < 1e-15);
  CHECK_THROWS_AS(g_scalar(ScalarMeasure::cauchy(), 1.0), Error);
}

TEST_CASE("g_scalar by quadrature matches the arcsine closed form") {
  const cplx z = 2.0 * I;
  // 1/√(z² − 4) on the decaying branch
  CHECK(std::abs(g_scalar(ScalarMeasure::arcsine(2.0), z) - (-I / (2.0 * std::sqrt(2.0)))) < 1e-12);
  const cplx w(0.4, 0.7);
  const cplx closed = 1.0 / (std::sqrt(w - 1.0) * std::sqrt(w + 1.0));
  CHECK(std::abs(g_scalar(ScalarMeasure::arcsine(1.0), w) - closed) < 1e-11);
}

TEST_CASE("f_scalar examples") {
  const cplx z(0.3, 0.8);
  CHECK(std::abs(f_scalar(ScalarMeasure::bernoulli(1.0), z) - (z * z - 1.0) / z) < 1e-14);
  CHECK(std::abs(f_scalar(ScalarMeasure::bernoulli(1.0), I) - 2.0 * I) < 1e-15);
  CHECK(std::abs(f_scalar(ScalarMeasure::point_mass(1.5), z) - (z - 1.5)) < 1e-15);
  CHECK(std::abs(f_scalar(ScalarMeasure::cauchy(), z) - (z + I)) < 1e-15);
}

TEST_CASE("F-transforms increase imaginary parts") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> re(-5, 5), lg(-2, 1);
  for (const auto& mu : sample_laws())
    for (int k = 0; k < 200; ++k) {
      const cplx z(re(rng), std::pow(10.0, lg(rng)));
      CHECK(f_scalar(mu, z).imag() >= z.imag() * (1 - 1e-10));
    }
}

TEST_CASE("g_derivative closed forms and finite differences") {
  CHECK(std::abs(g_derivative(ScalarMeasure::point_mass(0.0), I, 1) - 1.0) < 1e-15);
  CHECK(std::abs(g_derivative(ScalarMeasure::cauchy(), 2.0 * I, 1) - 1.0 / 9.0) < 1e-15);
  const cplx z(0.2, 1.1);
  const double h = 1e-5;
  for (const auto& mu : sample_laws()) {
    const cplx fd = (g_scalar(mu, z + h) - g_scalar(mu, z - h)) / (2 * h);
    CHECK(std::abs(g_derivative(mu, z, 1) - fd) < 1e-6);
    const cplx fd2 = (g_derivative(mu, z + h, 1) - g_derivative(mu, z - h, 1)) / (2 * h);
    CHECK(std::abs(g_derivative(mu, z, 2) - fd2) < 1e-6);
  }
}

TEST_CASE("Nevanlinna property on random points") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> re(-10, 10), lg(-3, 2);
  const auto laws = sample_laws();
  int violations = 0;
  for (int k = 0; k < 10000; ++k) {
    const ScalarMeasure& mu = laws[k % laws.size()];
    const cplx z(re(rng), std::pow(10.0, lg(rng)));
    const cplx g = g_scalar(mu, z);
    if (!(g.imag() < 0.0) || std::abs(g) > (1.0 + 1e-10) / z.imag()) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("truncate examples") {
  const TruncationResult c = truncate(ScalarMeasure::cauchy(), 1.0);
  CHECK(c.retained_mass == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(c.cutoff == 1.0);
  double atom0 = 0.0;
  for (const Atom& a : c.truncated.atoms())
    if (a.position == 0.0) atom0 += a.weight;
  CHECK(atom0 == doctest::Approx(0.5).epsilon(1e-14));

  const TruncationResult p = truncate(ScalarMeasure::point_mass(0.0), 3.0);
  CHECK(p.retained_mass == 1.0);
  CHECK(std::abs(g_scalar(p.truncated, I) - (-I)) < 1e-15);

  const TruncationResult b = truncate(ScalarMeasure::bernoulli(2.0), 1.0);
  CHECK(b.retained_mass == 0.0);
  CHECK(std::abs(g_scalar(b.truncated, 2.0 * I) - 1.0 / (2.0 * I)) < 1e-15);
}

TEST_CASE("truncate is idempotent and retained mass grows to one") {
  for (const auto& mu : sample_laws()) {
    const TruncationResult once = truncate(mu, 1.5);
    const TruncationResult twice = truncate(once.truncated, 1.5);
    const auto a1 = once.truncated.atoms(), a2 = twice.truncated.atoms();
    const cplx z(0.1, 0.9);
    CHECK(std::abs(g_scalar(once.truncated, z) - g_scalar(twice.truncated, z)) < 1e-12);
    CHECK(twice.retained_mass == doctest::Approx(1.0).epsilon(1e-12));
    double prev = 0.0;
    for (double k = 1; k <= 64; k *= 2) {
      const double m = truncate(mu, k).retained_mass;
      CHECK(m >= prev - 1e-15);
      prev = m;
    }
    CHECK(prev > 0.98);
  }
}

TEST_CASE("g of truncations approaches g") {
  const ScalarMeasure mu = ScalarMeasure::cauchy();
  const cplx z = 2.0 * I;
  double prev = 1e300;
  for (double k = 1; k <= 64; k *= 2) {
    const double err = std::abs(g_scalar(truncate(mu, k).truncated, z) - g_scalar(mu, z));
    CHECK(err <= prev + 1e-12);
    prev = err;
  }
  CHECK(prev < 0.01);
}

TEST_CASE("tightness_cutoff examples") {
  const std::vector<ScalarMeasure> cauchy{ScalarMeasure::cauchy()};
  // mass on [−1, 1] is exactly 1/2, so the strict test first passes at N = 2
  CHECK(tightness_cutoff(cauchy, 0.5) == 2L);
  const std::vector<ScalarMeasure> pm{ScalarMeasure::point_mass(3.0)};
  CHECK(tightness_cutoff(pm, 0.1) == 3L);
  std::vector<ScalarMeasure> escaping;
  for (long k = 1; k <= (1L << 21); k *= 2)
    escaping.push_back(ScalarMeasure::atomic({{0.0, 0.5}, {double(k), 0.5}}));
  CHECK_FALSE(tightness_cutoff(escaping, 0.1).has_value());
}

TEST_CASE("quantile_nodes examples") {
  CHECK(quantile_nodes(ScalarMeasure::point_mass(2.5), 4) == std::vector<double>{2.5, 2.5, 2.5, 2.5});
  CHECK(quantile_nodes(ScalarMeasure::bernoulli(1.0), 4) == std::vector<double>{-1, -1, 1, 1});
  const auto c = quantile_nodes(ScalarMeasure::cauchy(), 2);
  CHECK(c[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(c[1] == doctest::Approx(1.0).epsilon(1e-12));
  const auto s = quantile_nodes(ScalarMeasure::semicircle(1.0), 101);
  CHECK(std::abs(s[50]) < 1e-10);
  for (double t : {-1.0, 0.3, 1.2}) {
    const double p = cdf(ScalarMeasure::semicircle(1.0), t);
    CHECK(quantile(ScalarMeasure::semicircle(1.0), p) == doctest::Approx(t).epsilon(1e-8));
  }
}

TEST_CASE("invalid laws are rejected") {
  CHECK_THROWS_AS(ScalarMeasure::cauchy(0.0, -1.0), Error);
  CHECK_THROWS_AS(ScalarMeasure::atomic({{0.0, 0.4}, {1.0, 0.4}}), Error);
  CHECK_THROWS_AS(ScalarMeasure(QuadratureLaw{{1.0, 0.0}, {0.5, 0.5}}), Error);
  CHECK_THROWS_AS(ScalarMeasure::semicircle(0.0), Error);
}
