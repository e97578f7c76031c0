#include "ovfree/killer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "ovfree/error.hpp"
#include "ovfree/matrix_model.hpp"

namespace ovfree {

using cd = std::complex<double>;

cd bernoulli_stage(double s, double r, cd z) {
  const cd u = z - s;
  return u - r * r / u;
}

KillerF build_killer(const std::vector<cd>& targets) {
  KillerF f;
  for (const cd& z : targets) {
    if (!(z.imag() > 0.0)) throw Error(Errc::InvalidArgument, "killer targets must lie in the upper half plane");
    const bool dup = std::any_of(f.targets.begin(), f.targets.end(),
                                 [&](const cd& t) { return std::abs(t - z) < kKillerDedupeTol; });
    if (dup) continue;
    const cd w = eval_killer(f, z);
    f.stages.push_back({w.real(), w.imag()});
    f.targets.push_back(z);
  }
  return f;
}

cd eval_killer(const KillerF& f, cd z) {
  for (const auto& st : f.stages) z = bernoulli_stage(st.s, st.r, z);
  return z;
}

cd killer_derivative(const KillerF& f, cd z) {
  cd d = 1.0;
  for (const auto& st : f.stages) {
    const cd u = z - st.s;
    d *= 1.0 + st.r * st.r / (u * u);
    z = u - st.r * st.r / u;
  }
  return d;
}

cd killer_second_derivative(const KillerF& f, cd z) {
  // (g∘h)'' = g''(h)·h'² + g'(h)·h''
  cd d1 = 1.0, d2 = 0.0;
  for (const auto& st : f.stages) {
    const cd u = z - st.s;
    const double r2 = st.r * st.r;
    const cd g1 = 1.0 + r2 / (u * u);
    const cd g2 = -2.0 * r2 / (u * u * u);
    d2 = g2 * d1 * d1 + g1 * d2;
    d1 *= g1;
    z = u - r2 / u;
  }
  return d2;
}

namespace {

double max_circle_deviation(const KillerF& f, cd z, cd fz, double delta, int grid) {
  double m = 0.0;
  for (int k = 0; k < grid; ++k) {
    const double th = 2.0 * std::numbers::pi * k / grid;
    m = std::max(m, std::abs(eval_killer(f, z + std::polar(delta, th)) - fz));
  }
  return m;
}

}  // namespace

WitnessReport non_invertibility_witness(const KillerF& f, cd z, double delta) {
  if (!(delta > 0.0) || !(delta < z.imag())) throw Error(Errc::InvalidArgument, "witness: need 0 < delta < Im z");
  constexpr int grid = 256;
  WitnessReport rep{};
  rep.point = z;
  rep.delta = delta;
  const cd fz = eval_killer(f, z);
  rep.derivative_abs = std::abs(killer_derivative(f, z));
  rep.max_deviation = max_circle_deviation(f, z, fz, delta, grid);
  rep.max_deviation_half = max_circle_deviation(f, z, fz, 0.5 * delta, grid);
  rep.contact_constant = rep.max_deviation / (delta * delta);
  rep.scaling_ratio = rep.max_deviation_half > 0.0 ? rep.max_deviation / rep.max_deviation_half : 0.0;
  rep.quadratic_contact = rep.scaling_ratio > 3.5 && rep.scaling_ratio < 4.5;

  // near a critical point f(z + u) ≈ f(z) + c·u², so z − u is a first-order
  // preimage partner of z + u; Newton on f(y) = f(x) sharpens it
  rep.image_distance = std::numeric_limits<double>::infinity();
  for (int k = 0; k < grid / 2; ++k) {
    const cd u = std::polar(delta, 2.0 * std::numbers::pi * k / grid);
    const cd x = z + u;
    const cd fx = eval_killer(f, x);
    cd y = z - u;
    for (int it = 0; it < 8; ++it) {
      const cd d = killer_derivative(f, y);
      if (std::abs(d) == 0.0) break;
      const cd step = (eval_killer(f, y) - fx) / d;
      if (!(std::abs(step) < 0.5 * delta)) break;
      y -= step;
    }
    if (!(std::abs(y - x) > 0.5 * delta) || !(y.imag() > 0.0)) continue;
    const double dist = std::abs(eval_killer(f, y) - fx);
    if (dist < rep.image_distance) {
      rep.image_distance = dist;
      rep.x = x;
      rep.y = y;
    }
  }
  rep.locally_invertible = !(rep.quadratic_contact && rep.image_distance <= 1e-2 * delta);
  return rep;
}

HalfPlaneCheck halfplane_check(const KillerF& f, int samples, std::uint64_t seed) {
  std::mt19937_64 rng = stream_engine(seed, 0);
  std::uniform_real_distribution<double> re(-10.0, 10.0), lg(-3.0, 1.0);
  HalfPlaneCheck out{samples, 0, std::numeric_limits<double>::infinity()};
  for (int j = 0; j < samples; ++j) {
    const double x = re(rng);
    const cd z(x, std::pow(10.0, lg(rng)));
    const cd w = eval_killer(f, z);
    const double inc = w.imag() - z.imag();
    out.min_increment = std::min(out.min_increment, inc);
    if (!(inc >= -1e-12 * (1.0 + std::abs(w)))) ++out.violations;
  }
  return out;
}

std::vector<cd> dense_prefix(int count) {
  // dyadic points of [−2^k, 2^k] × (0, 2^k], refined level by level
  std::vector<cd> out;
  for (int level = 0; static_cast<int>(out.size()) < count; ++level) {
    const double h = std::ldexp(1.0, -level);
    const double span = std::ldexp(1.0, level);
    for (double y = h; y <= span && static_cast<int>(out.size()) < count; y += h)
      for (double x = -span; x <= span && static_cast<int>(out.size()) < count; x += h) {
        const cd z(x, y);
        if (std::none_of(out.begin(), out.end(), [&](const cd& p) { return std::abs(p - z) < kKillerDedupeTol; }))
          out.push_back(z);
      }
  }
  return out;
}

KillerFamily killer_family(int depth) {
  KillerFamily fam;
  fam.points = dense_prefix(depth);
  for (int k = 1; k <= depth; ++k)
    fam.members.push_back(build_killer(std::vector<cd>(fam.points.begin(), fam.points.begin() + k)));
  fam.note =
      "finite prefix of a dense sequence in the upper half plane; the k-th member has vanishing derivative at the "
      "first k points, so the limiting assembly is nowhere locally invertible";
  return fam;
}

}  // namespace ovfree
