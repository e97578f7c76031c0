#include "ovfree/measures.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ovfree {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kWeightSumTol = 1e-12;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check(bool ok, const std::string& msg) {
  if (!ok) throw Error(Errc::InvalidArgument, msg);
}

void validate_weights(const std::vector<double>& positions, const std::vector<double>& weights, bool strictly_sorted) {
  check(!positions.empty(), "measure needs at least one atom");
  check(positions.size() == weights.size(), "nodes and weights differ in length");
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    check(std::isfinite(positions[i]), "non-finite atom position");
    check(weights[i] > 0.0 && std::isfinite(weights[i]), "atom weights must be positive");
    total += weights[i];
    if (strictly_sorted && i > 0) check(positions[i] > positions[i - 1], "quadrature nodes must be strictly increasing");
  }
  check(std::abs(total - 1.0) <= kWeightSumTol, "weights must sum to 1");
}

// θ ↦ ∫ weight, the antiderivative used for closed-form masses.
double weight_antiderivative(const ScalarMeasure::Substitution& s, double theta) {
  using K = ScalarMeasure::Substitution::Kind;
  switch (s.kind) {
    case K::Tangent:
    case K::Sine: return theta / kPi;
    case K::SineSquaredCos: return (theta + std::sin(theta) * std::cos(theta)) / kPi;
  }
  return 0.0;
}

double theta_of(const ScalarMeasure::Substitution& s, double x) {
  using K = ScalarMeasure::Substitution::Kind;
  double th = 0.0;
  if (s.kind == K::Tangent) {
    th = std::atan((x - s.shift) / s.scale);
  } else {
    th = std::asin(std::clamp((x - s.shift) / s.scale, -1.0, 1.0));
  }
  return std::clamp(th, s.theta_lo, s.theta_hi);
}

double continuous_mass(const ScalarMeasure::Substitution& s, double lo, double hi) {
  if (hi < lo) return 0.0;
  return weight_antiderivative(s, theta_of(s, hi)) - weight_antiderivative(s, theta_of(s, lo));
}

ScalarMeasure::Substitution base_substitution(const ScalarMeasure& base) {
  using K = ScalarMeasure::Substitution::Kind;
  constexpr double h = kPi / 2;
  if (auto c = base.as<CauchyLaw>()) return {K::Tangent, c->location, c->scale, -h, h};
  if (auto s = base.as<SemicircleLaw>()) return {K::SineSquaredCos, 0.0, 2.0 * std::sqrt(s->variance), -h, h};
  if (auto a = base.as<ArcsineLaw>()) return {K::Sine, 0.0, a->radius, -h, h};
  throw Error(Errc::InvalidArgument, "truncation base must be a continuous law");
}

cplx cauchy_shift(const CauchyLaw& c, cplx z) {
  // g(z) = 1/(z − s ± iγ) with the sign chosen by the half plane of z
  return z - c.location + cplx(0.0, z.imag() > 0 ? c.scale : -c.scale);
}

void require_off_axis(cplx z, const char* who) {
  if (z.imag() == 0.0 || !std::isfinite(z.real()) || !std::isfinite(z.imag()))
    throw Error(Errc::RealAxisPoint, std::string(who) + ": point on the real axis");
}

ScalarMeasure collapse_atoms(std::vector<Atom> atoms) {
  std::sort(atoms.begin(), atoms.end(), [](const Atom& a, const Atom& b) { return a.position < b.position; });
  std::vector<Atom> merged;
  for (const Atom& a : atoms) {
    if (a.weight <= 0.0) continue;
    if (!merged.empty() && merged.back().position == a.position) merged.back().weight += a.weight;
    else merged.push_back(a);
  }
  if (merged.size() == 1) return ScalarMeasure::point_mass(merged.front().position);
  // renormalize rounding so the weight invariant survives repeated truncation
  const double total = std::accumulate(merged.begin(), merged.end(), 0.0, [](double s, const Atom& a) { return s + a.weight; });
  for (Atom& a : merged) a.weight /= total;
  return ScalarMeasure::atomic(std::move(merged));
}

}  // namespace

double ScalarMeasure::Substitution::t(double theta) const {
  if (kind == Kind::Tangent) return shift + scale * std::tan(theta);
  return shift + scale * std::sin(theta);
}

double ScalarMeasure::Substitution::weight(double theta) const {
  if (kind == Kind::SineSquaredCos) {
    const double c = std::cos(theta);
    return 2.0 / kPi * c * c;
  }
  return 1.0 / kPi;
}

ScalarMeasure::ScalarMeasure(Variant v) : v_(std::move(v)) {
  std::visit(overloaded{
                 [](const CauchyLaw& c) {
                   check(std::isfinite(c.location), "cauchy location must be finite");
                   check(c.scale > 0.0 && std::isfinite(c.scale), "cauchy scale must be positive");
                 },
                 [](const SemicircleLaw& s) { check(s.variance > 0.0 && std::isfinite(s.variance), "semicircle variance must be positive"); },
                 [](const BernoulliLaw& b) {
                   check(b.radius > 0.0 && std::isfinite(b.radius), "bernoulli radius must be positive");
                   check(std::isfinite(b.center), "bernoulli center must be finite");
                 },
                 [](const ArcsineLaw& a) { check(a.radius > 0.0 && std::isfinite(a.radius), "arcsine radius must be positive"); },
                 [](const PointMass& p) { check(std::isfinite(p.position), "point mass position must be finite"); },
                 [](const AtomicLaw& a) {
                   std::vector<double> pos, w;
                   for (const Atom& at : a.atoms) {
                     pos.push_back(at.position);
                     w.push_back(at.weight);
                   }
                   validate_weights(pos, w, false);
                 },
                 [](const QuadratureLaw& q) { validate_weights(q.nodes, q.weights, true); },
                 [](const TruncatedLaw& t) {
                   check(t.base != nullptr, "truncated law needs a base");
                   check(t.cutoff > 0.0, "truncation cutoff must be positive");
                   (void)base_substitution(*t.base);
                 },
             },
             v_);
}

bool ScalarMeasure::is_discrete() const noexcept {
  return is<BernoulliLaw>() || is<PointMass>() || is<AtomicLaw>() || is<QuadratureLaw>();
}

std::string ScalarMeasure::name() const {
  return std::visit(overloaded{
                        [](const CauchyLaw&) { return std::string("cauchy"); },
                        [](const SemicircleLaw&) { return std::string("semicircle"); },
                        [](const BernoulliLaw&) { return std::string("bernoulli"); },
                        [](const ArcsineLaw&) { return std::string("arcsine"); },
                        [](const PointMass&) { return std::string("point_mass"); },
                        [](const AtomicLaw&) { return std::string("atomic"); },
                        [](const QuadratureLaw&) { return std::string("quadrature"); },
                        [](const TruncatedLaw&) { return std::string("truncated"); },
                    },
                    v_);
}

std::vector<Atom> ScalarMeasure::atoms() const {
  return std::visit(overloaded{
                        [](const BernoulliLaw& b) {
                          return std::vector<Atom>{{b.center - b.radius, 0.5}, {b.center + b.radius, 0.5}};
                        },
                        [](const PointMass& p) { return std::vector<Atom>{{p.position, 1.0}}; },
                        [](const AtomicLaw& a) { return a.atoms; },
                        [](const QuadratureLaw& q) {
                          std::vector<Atom> out;
                          for (std::size_t i = 0; i < q.nodes.size(); ++i) out.push_back({q.nodes[i], q.weights[i]});
                          return out;
                        },
                        [](const TruncatedLaw& t) {
                          const auto s = base_substitution(*t.base);
                          const double kept = continuous_mass(s, -t.cutoff, t.cutoff);
                          const double defect = std::max(0.0, 1.0 - kept);
                          return defect > 0.0 ? std::vector<Atom>{{0.0, defect}} : std::vector<Atom>{};
                        },
                        [](const auto&) { return std::vector<Atom>{}; },
                    },
                    v_);
}

std::optional<ScalarMeasure::Substitution> ScalarMeasure::continuous_part() const {
  if (is_discrete()) return std::nullopt;
  if (auto t = as<TruncatedLaw>()) {
    auto s = base_substitution(*t->base);
    const double lo = theta_of(s, -t->cutoff);
    const double hi = theta_of(s, t->cutoff);
    s.theta_lo = lo;
    s.theta_hi = hi;
    return s;
  }
  return base_substitution(*this);
}

bool operator==(const ScalarMeasure& a, const ScalarMeasure& b) {
  if (a.v_.index() != b.v_.index()) return false;
  return std::visit(
      overloaded{
          [&](const CauchyLaw& x) {
            const auto& y = std::get<CauchyLaw>(b.v_);
            return x.location == y.location && x.scale == y.scale;
          },
          [&](const SemicircleLaw& x) { return x.variance == std::get<SemicircleLaw>(b.v_).variance; },
          [&](const BernoulliLaw& x) {
            const auto& y = std::get<BernoulliLaw>(b.v_);
            return x.radius == y.radius && x.center == y.center;
          },
          [&](const ArcsineLaw& x) { return x.radius == std::get<ArcsineLaw>(b.v_).radius; },
          [&](const PointMass& x) { return x.position == std::get<PointMass>(b.v_).position; },
          [&](const AtomicLaw& x) {
            const auto& y = std::get<AtomicLaw>(b.v_);
            return std::equal(x.atoms.begin(), x.atoms.end(), y.atoms.begin(), y.atoms.end(),
                              [](const Atom& p, const Atom& q) { return p.position == q.position && p.weight == q.weight; });
          },
          [&](const QuadratureLaw& x) {
            const auto& y = std::get<QuadratureLaw>(b.v_);
            return x.nodes == y.nodes && x.weights == y.weights;
          },
          [&](const TruncatedLaw& x) {
            const auto& y = std::get<TruncatedLaw>(b.v_);
            return x.cutoff == y.cutoff && *x.base == *y.base;
          },
      },
      a.v_);
}

cplx g_scalar(const ScalarMeasure& mu, cplx z) {
  require_off_axis(z, "g_scalar");
  if (auto c = mu.as<CauchyLaw>()) return 1.0 / cauchy_shift(*c, z);
  if (mu.is_discrete()) {
    cplx acc = 0.0;
    for (const Atom& a : mu.atoms()) acc += a.weight / (z - a.position);
    return acc;
  }
  return expect(mu, [z](double t) { return 1.0 / (z - t); });
}

cplx f_scalar(const ScalarMeasure& mu, cplx z) {
  require_off_axis(z, "f_scalar");
  if (z.imag() < 0.0) throw Error(Errc::InvalidArgument, "f_scalar: F-transform is taken on the upper half plane");
  return 1.0 / g_scalar(mu, z);
}

cplx g_derivative(const ScalarMeasure& mu, cplx z, int order) {
  require_off_axis(z, "g_derivative");
  if (order < 0) throw Error(Errc::InvalidArgument, "g_derivative: negative order");
  if (order == 0) return g_scalar(mu, z);
  double factorial = 1.0;
  for (int j = 2; j <= order; ++j) factorial *= j;
  const double sign = (order % 2 == 0) ? 1.0 : -1.0;
  if (auto c = mu.as<CauchyLaw>()) return sign * factorial / std::pow(cauchy_shift(*c, z), order + 1);
  auto kernel = [z, order](double t) { return std::pow(1.0 / (z - t), order + 1); };
  if (mu.is_discrete()) {
    cplx acc = 0.0;
    for (const Atom& a : mu.atoms()) acc += a.weight * kernel(a.position);
    return sign * factorial * acc;
  }
  return sign * factorial * expect(mu, kernel);
}

double interval_mass(const ScalarMeasure& mu, double lo, double hi) {
  if (hi < lo) return 0.0;
  double mass = 0.0;
  for (const Atom& a : mu.atoms())
    if (a.position >= lo && a.position <= hi) mass += a.weight;
  if (auto s = mu.continuous_part()) mass += continuous_mass(*s, lo, hi);
  return std::min(1.0, mass);
}

double cdf(const ScalarMeasure& mu, double x) {
  double mass = 0.0;
  for (const Atom& a : mu.atoms())
    if (a.position <= x) mass += a.weight;
  if (auto s = mu.continuous_part())
    mass += weight_antiderivative(*s, theta_of(*s, x)) - weight_antiderivative(*s, s->theta_lo);
  return std::clamp(mass, 0.0, 1.0);
}

TruncationResult truncate(const ScalarMeasure& mu, double k) {
  if (!(k > 0.0)) throw Error(Errc::InvalidArgument, "truncate: cutoff must be positive");
  if (mu.is_discrete()) {
    std::vector<Atom> kept;
    double retained = 0.0;
    for (const Atom& a : mu.atoms()) {
      if (std::abs(a.position) <= k) {
        kept.push_back(a);
        retained += a.weight;
      }
    }
    retained = std::min(1.0, retained);
    if (retained >= 1.0 - 1e-15 && kept.size() == mu.atoms().size()) return {mu, retained, k};
    kept.push_back({0.0, 1.0 - retained});
    return {collapse_atoms(std::move(kept)), retained, k};
  }
  if (auto t = mu.as<TruncatedLaw>()) {
    if (k >= t->cutoff) return {mu, 1.0, k};
    return {ScalarMeasure(TruncatedLaw{t->base, k}), interval_mass(mu, -k, k), k};
  }
  const auto s = base_substitution(mu);
  if (s.kind != ScalarMeasure::Substitution::Kind::Tangent && s.scale <= k) return {mu, 1.0, k};
  const double retained = interval_mass(mu, -k, k);
  return {ScalarMeasure(TruncatedLaw{std::make_shared<const ScalarMeasure>(mu), k}), retained, k};
}

std::optional<long> tightness_cutoff(std::span<const ScalarMeasure> family, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw Error(Errc::InvalidArgument, "tightness_cutoff: eps must lie in (0,1)");
  long answer = 1;
  for (const ScalarMeasure& mu : family) {
    auto ok = [&](long n) { return interval_mass(mu, -double(n), double(n)) > 1.0 - eps; };
    if (!ok(kTightnessSearchMax)) return std::nullopt;
    long lo = 0, hi = kTightnessSearchMax;  // ok(hi) holds, lo is a sentinel
    while (hi - lo > 1) {
      const long mid = lo + (hi - lo) / 2;
      if (mid >= 1 && ok(mid)) hi = mid;
      else lo = mid;
    }
    answer = std::max(answer, hi);
  }
  return answer;
}

double quantile(const ScalarMeasure& mu, double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(Errc::InvalidArgument, "quantile: p must lie in (0,1)");
  if (auto c = mu.as<CauchyLaw>()) return c->location + c->scale * std::tan(kPi * (p - 0.5));
  if (auto a = mu.as<ArcsineLaw>()) return a->radius * std::sin(kPi * (p - 0.5));
  if (mu.is_discrete()) {
    auto atoms = mu.atoms();
    std::stable_sort(atoms.begin(), atoms.end(), [](const Atom& x, const Atom& y) { return x.position < y.position; });
    double cum = 0.0;
    for (const Atom& a : atoms) {
      cum += a.weight;
      if (cum >= p - 1e-14) return a.position;
    }
    return atoms.back().position;
  }
  // bisection for inf{x : F(x) ≥ p}; F may jump (truncation defect at 0)
  const auto s = *mu.continuous_part();
  double lo = s.t(s.theta_lo), hi = s.t(s.theta_hi);
  if (auto t = mu.as<TruncatedLaw>()) {
    lo = -t->cutoff;
    hi = t->cutoff;
  }
  if (cdf(mu, lo) >= p) return lo;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (cdf(mu, mid) >= p) hi = mid;
    else lo = mid;
  }
  return hi;
}

std::vector<double> quantile_nodes(const ScalarMeasure& mu, int N) {
  if (N < 1) throw Error(Errc::InvalidArgument, "quantile_nodes: N must be positive");
  std::vector<double> out(N);
  for (int j = 0; j < N; ++j) out[j] = quantile(mu, (j + 0.5) / N);
  return out;
}

}  // namespace ovfree
