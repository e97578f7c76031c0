#include <doctest.h>

#include <random>

#include "ovfree/killer.hpp"

using namespace ovfree;
using cd = std::complex<double>;

namespace {
const cd I(0.0, 1.0);
}

TEST_CASE("bernoulli_stage examples") {
  CHECK(std::abs(bernoulli_stage(0, 1, I) - 2.0 * I) < 1e-15);
  const KillerF one{{{0.0, 0.7}}, {}};
  CHECK(std::abs(killer_derivative(one, 0.7 * I)) < 1e-15);
  const cd z(0.4, 1.3);
  CHECK(std::abs(bernoulli_stage(0.25, 1e-9, z) - (z - 0.25)) < 1e-15);
  CHECK(bernoulli_stage(0.25, 2.0, z).imag() >= z.imag());
}

TEST_CASE("build_killer examples") {
  const KillerF f1 = build_killer({I});
  REQUIRE(f1.stages.size() == 1);
  CHECK(f1.stages[0].s == 0.0);
  CHECK(f1.stages[0].r == 1.0);
  const cd z(0.3, 0.5);
  CHECK(std::abs(eval_killer(f1, z) - (z * z - 1.0) / z) < 1e-14);

  const KillerF f2 = build_killer({I, cd(1, 1)});
  REQUIRE(f2.stages.size() == 2);
  CHECK(f2.stages[1].s == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(f2.stages[1].r == doctest::Approx(1.5).epsilon(1e-15));
  for (const cd& t : f2.targets) {
    CHECK(std::abs(killer_derivative(f2, t)) <= 1e-10);
    const double h = 1e-6;
    const cd fd = (eval_killer(f2, t + h) - eval_killer(f2, t - h)) / (2 * h);
    CHECK(std::abs(fd) <= 1e-6);
  }

  const KillerF dup = build_killer({I, I, I + 1e-12});
  CHECK(dup.stages.size() == 1);
  CHECK(std::abs(killer_derivative(dup, I)) == 0.0);
}

TEST_CASE("empty killer is the identity") {
  const KillerF f;
  const cd z(1, 2);
  CHECK(eval_killer(f, z) == z);
  CHECK(killer_derivative(f, z) == cd(1, 0));
}

TEST_CASE("chain-rule derivative matches central differences") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> re(-2, 2), im(0.2, 3);
  const KillerF f = build_killer({I, cd(1, 1), cd(0.3, 2), cd(-1, 0.5)});
  for (int k = 0; k < 100; ++k) {
    const cd z(re(rng), im(rng));
    const double h = 1e-6;
    const cd fd = (eval_killer(f, z + h) - eval_killer(f, z - h)) / (2 * h);
    const cd d = killer_derivative(f, z);
    CHECK(std::abs(d - fd) <= 1e-6 * std::max(1.0, std::abs(d)));
    const cd fd2 = (killer_derivative(f, z + h) - killer_derivative(f, z - h)) / (2 * h);
    const cd d2 = killer_second_derivative(f, z);
    CHECK(std::abs(d2 - fd2) <= 1e-5 * std::max(1.0, std::abs(d2)));
  }
}

TEST_CASE("witness at a single-stage kill point") {
  const KillerF f = build_killer({I});
  CHECK(std::abs(killer_second_derivative(f, I) - (-2.0 * I)) < 1e-15);
  const WitnessReport w = non_invertibility_witness(f, I);
  CHECK(w.quadratic_contact);
  CHECK(w.contact_constant == doctest::Approx(1.0).epsilon(0.01));
  CHECK(w.scaling_ratio == doctest::Approx(4.0).epsilon(0.01));
  CHECK(std::abs(w.x - w.y) > 0.5 * w.delta);
  CHECK(w.image_distance <= 1e-2 * w.delta);
  CHECK_FALSE(w.locally_invertible);
}

TEST_CASE("witness away from kill points reports local invertibility") {
  const KillerF f = build_killer({I});
  const cd z(0.0, 3.0);
  CHECK(std::abs(killer_derivative(f, z)) > 0.1);
  const WitnessReport w = non_invertibility_witness(f, z);
  CHECK_FALSE(w.quadratic_contact);
  CHECK(w.locally_invertible);
}

TEST_CASE("random killers: kills, contact and half-plane preservation") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> re(-3, 3), im(0.1, 3);
  std::uniform_int_distribution<int> count(1, 5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<cd> targets(static_cast<std::size_t>(count(rng)));
    for (cd& z : targets) {
      const double x = re(rng);
      z = cd(x, im(rng));
    }
    const KillerF f = build_killer(targets);
    for (const cd& z : f.targets) {
      CHECK(std::abs(killer_derivative(f, z)) <= 1e-8);
      const WitnessReport w = non_invertibility_witness(f, z, std::min(1e-3, z.imag() / 10));
      CHECK(w.quadratic_contact);
      CHECK(w.image_distance <= 1e-2 * w.delta);
    }
    const HalfPlaneCheck hc = halfplane_check(f, 10000, 100 + trial);
    CHECK(hc.violations == 0);
  }
}

TEST_CASE("adding targets keeps earlier kills") {
  std::vector<cd> targets{cd(0.2, 0.9), cd(-1, 2), cd(2, 0.4), cd(0.5, 1.5), cd(-0.3, 0.3)};
  for (std::size_t k = 1; k <= targets.size(); ++k) {
    const KillerF f = build_killer(std::vector<cd>(targets.begin(), targets.begin() + k));
    for (std::size_t j = 0; j < k; ++j) CHECK(std::abs(killer_derivative(f, targets[j])) <= 1e-10);
  }
}

TEST_CASE("killer family over a dense prefix") {
  const KillerFamily fam = killer_family(8);
  CHECK(fam.points.size() == 8);
  CHECK(fam.members.size() == 8);
  CHECK_FALSE(fam.note.empty());
  for (std::size_t k = 0; k < fam.members.size(); ++k)
    for (std::size_t j = 0; j <= k; ++j) CHECK(std::abs(killer_derivative(fam.members[k], fam.points[j])) <= 1e-8);
}
