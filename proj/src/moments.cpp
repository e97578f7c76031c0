#include "ovfree/moments.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <string>
#include <unordered_map>

namespace ovfree {

std::string to_string(IndependenceMode mode) {
  switch (mode) {
    case IndependenceMode::Equal: return "equal";
    case IndependenceMode::Classical: return "classical";
    case IndependenceMode::Free: return "free";
    case IndependenceMode::Boolean: return "boolean";
  }
  return "free";
}

IndependenceMode independence_mode_from_string(const std::string& s) {
  if (s == "equal") return IndependenceMode::Equal;
  if (s == "classical") return IndependenceMode::Classical;
  if (s == "free") return IndependenceMode::Free;
  if (s == "boolean") return IndependenceMode::Boolean;
  throw Error(Errc::InvalidArgument, "unknown independence mode '" + s + "'");
}

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
// accuracy demanded of a partial-fraction sum relative to ∏ 1/|Im z_j|
constexpr double kCancellationTol = 1e-12;

bool zless(const cplx& a, const cplx& b) {
  return a.real() < b.real() || (a.real() == b.real() && a.imag() < b.imag());
}

using Series = std::vector<cplx>;

Series series_mul(const Series& a, const Series& b, std::size_t order) {
  Series out(order, 0.0);
  for (std::size_t i = 0; i < std::min(order, a.size()); ++i)
    for (std::size_t j = 0; i + j < order && j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

void require_upper(std::span<const cplx> zs, const char* who) {
  for (const cplx& z : zs)
    if (!(z.imag() > 0.0) || !std::isfinite(z.real()))
      throw Error(Errc::InvalidArgument, std::string(who) + ": every z must lie in the upper half plane");
}

double natural_scale(std::span<const cplx> zs) {
  double s = 1.0;
  for (const cplx& z : zs) s /= std::abs(z.imag());
  return s;
}

cplx direct_product(std::span<const cplx> zs, double t) {
  cplx p = 1.0;
  for (const cplx& z : zs) p /= (z - t);
  return p;
}

}  // namespace

cplx PartialFraction::evaluate(double t) const {
  cplx acc = 0.0;
  for (const Pole& p : poles) {
    const cplx s = 1.0 / (p.z - t);
    cplx sp = s;
    for (int l = 1; l <= p.multiplicity; ++l) {
      acc += p.coefficients[l - 1] * sp;
      sp *= s;
    }
  }
  return acc;
}

PartialFraction partial_fractions(std::span<const cplx> zs) {
  if (zs.empty()) throw Error(Errc::InvalidArgument, "partial_fractions: empty pole list");
  std::vector<std::pair<cplx, int>> groups;
  for (const cplx& z : zs) {
    bool merged = false;
    for (auto& g : groups) {
      if (std::abs(g.first - z) <= kPoleMergeTol * std::max(1.0, std::abs(z))) {
        ++g.second;
        merged = true;
        break;
      }
    }
    if (!merged) groups.emplace_back(z, 1);
  }
  PartialFraction pf;
  for (std::size_t p = 0; p < groups.size(); ++p) {
    const auto [zp, m] = groups[p];
    const std::size_t order = static_cast<std::size_t>(m);
    Series h(order, 0.0);
    h[0] = 1.0;
    for (std::size_t q = 0; q < groups.size(); ++q) {
      if (q == p) continue;
      const cplx d = groups[q].first - zp;
      // (d + s)^{-1} = Σ_k (−1)^k s^k / d^{k+1}
      Series inv(order);
      cplx term = 1.0 / d;
      for (std::size_t k = 0; k < order; ++k) {
        inv[k] = term;
        term *= -1.0 / d;
      }
      for (int rep = 0; rep < groups[q].second; ++rep) h = series_mul(h, inv, order);
    }
    PartialFraction::Pole pole{zp, m, std::vector<cplx>(order)};
    for (int l = 1; l <= m; ++l) pole.coefficients[l - 1] = h[order - l];
    pf.poles.push_back(std::move(pole));
  }
  return pf;
}

cplx single_var_moment(const ScalarMeasure& mu, std::span<const cplx> zs) {
  if (zs.empty()) return 1.0;
  for (const cplx& z : zs)
    if (z.imag() == 0.0) throw Error(Errc::RealAxisPoint, "single_var_moment: pole on the real axis");
  if (mu.is_discrete()) {
    cplx acc = 0.0;
    for (const Atom& a : mu.atoms()) acc += a.weight * direct_product(zs, a.position);
    return acc;
  }
  const PartialFraction pf = partial_fractions(zs);
  cplx sum = 0.0;
  double magnitude = 0.0;
  for (const auto& pole : pf.poles) {
    double factorial = 1.0;
    for (int l = 1; l <= pole.multiplicity; ++l) {
      if (l > 1) factorial *= (l - 1);
      const double sign = ((l - 1) % 2 == 0) ? 1.0 : -1.0;
      const cplx term = pole.coefficients[l - 1] * sign / factorial * g_derivative(mu, pole.z, l - 1);
      sum += term;
      magnitude += std::abs(term);
    }
  }
  if (kEps * magnitude <= kCancellationTol * natural_scale(zs)) return sum;
  std::vector<cplx> copy(zs.begin(), zs.end());
  return expect(mu, [&copy](double t) { return direct_product(copy, t); });
}

namespace {

using ZList = std::vector<cplx>;

struct ZListLess {
  bool operator()(const ZList& a, const ZList& b) const {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(), zless);
  }
};

using Poly = std::map<ZList, cplx, ZListLess>;

struct Element {
  int var;
  Poly poly;
};

ZList merge_lists(const ZList& a, const ZList& b) {
  ZList out;
  out.reserve(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out), zless);
  return out;
}

Poly poly_mul(const Poly& a, const Poly& b) {
  Poly out;
  for (const auto& [ka, ca] : a)
    for (const auto& [kb, cb] : b) out[merge_lists(ka, kb)] += ca * cb;
  return out;
}

void append_bits(std::string& key, double v) {
  char buf[sizeof(double)];
  std::memcpy(buf, &v, sizeof(double));
  key.append(buf, sizeof(double));
}

// Free product state on the algebra generated by resolvents of free
// variables: φ(A₁⋯A_p) for A_j in the algebra of X_{v_j}, via the expansion
// A_j = Ā_j + φ(A_j) and φ(Ā₁⋯Ā_p) = 0 for alternating centered products.
class FreeEngine {
 public:
  explicit FreeEngine(std::span<const ScalarMeasure> laws) : laws_(laws) {}

  cplx phi(std::vector<Element> seq) {
    cplx scalar = normalize(seq);
    if (scalar == cplx(0.0)) return 0.0;
    if (seq.empty()) return scalar;
    if (seq.size() == 1) return scalar * phi_single(seq[0]);
    const std::string key = serialize(seq);
    if (auto it = memo_.find(key); it != memo_.end()) return scalar * it->second;

    const std::size_t p = seq.size();
    std::vector<cplx> vals(p);
    std::vector<Element> centered(p);
    for (std::size_t j = 0; j < p; ++j) {
      vals[j] = phi_single(seq[j]);
      centered[j] = seq[j];
      centered[j].poly[ZList{}] -= vals[j];
    }
    cplx total = 0.0;
    const std::uint32_t full = (1u << p) - 1;
    for (std::uint32_t mask = 0; mask < full; ++mask) {
      cplx coef = 1.0;
      std::vector<Element> sub;
      for (std::size_t j = 0; j < p; ++j) {
        if (mask & (1u << j)) sub.push_back(centered[j]);
        else coef *= vals[j];
      }
      if (coef == cplx(0.0)) continue;
      total += coef * phi(std::move(sub));
    }
    memo_.emplace(key, total);
    return scalar * total;
  }

  cplx phi_single(const Element& e) {
    cplx acc = 0.0;
    for (const auto& [zl, c] : e.poly) {
      if (c == cplx(0.0)) continue;
      acc += c * moment(e.var, zl);
    }
    return acc;
  }

 private:
  cplx moment(int var, const ZList& zl) {
    if (zl.empty()) return 1.0;
    auto& memo = svm_memo_[var];
    if (auto it = memo.find(zl); it != memo.end()) return it->second;
    const cplx v = single_var_moment(laws_[var], zl);
    memo.emplace(zl, v);
    return v;
  }

  // merge adjacent same-variable factors and pull out scalar factors
  static cplx normalize(std::vector<Element>& seq) {
    cplx scalar = 1.0;
    bool changed = true;
    while (changed) {
      changed = false;
      std::vector<Element> out;
      for (auto& e : seq) {
        std::erase_if(e.poly, [](const auto& kv) { return kv.second == cplx(0.0); });
        if (e.poly.empty()) return 0.0;
        if (e.poly.size() == 1 && e.poly.begin()->first.empty()) {
          scalar *= e.poly.begin()->second;
          changed = true;
          continue;
        }
        if (!out.empty() && out.back().var == e.var) {
          out.back().poly = poly_mul(out.back().poly, e.poly);
          changed = true;
          continue;
        }
        out.push_back(std::move(e));
      }
      seq = std::move(out);
    }
    return scalar;
  }

  static std::string serialize(const std::vector<Element>& seq) {
    std::string key;
    for (const Element& e : seq) {
      key.push_back('|');
      key.append(std::to_string(e.var));
      for (const auto& [zl, c] : e.poly) {
        key.push_back('[');
        for (const cplx& z : zl) {
          append_bits(key, z.real());
          append_bits(key, z.imag());
        }
        key.push_back(']');
        append_bits(key, c.real());
        append_bits(key, c.imag());
      }
    }
    return key;
  }

  std::span<const ScalarMeasure> laws_;
  std::map<int, std::map<ZList, cplx, ZListLess>> svm_memo_;
  std::unordered_map<std::string, cplx> memo_;
};

void validate_word(const Word& letters, std::span<const ScalarMeasure> laws) {
  for (const Letter& l : letters) {
    if (l.var < 0 || l.var >= static_cast<int>(laws.size()))
      throw Error(Errc::InvalidArgument, "resolvent word: variable index out of range");
    if (!(l.z.imag() > 0.0)) throw Error(Errc::InvalidArgument, "resolvent word: every z must lie in the upper half plane");
  }
}

const ScalarMeasure& common_law(const Word& letters, std::span<const ScalarMeasure> laws) {
  const ScalarMeasure& first = laws[letters.front().var];
  for (const Letter& l : letters)
    if (!(laws[l.var] == first))
      throw Error(Errc::InvalidArgument, "equal mode: all variables in the word must share one law");
  return first;
}

bool all_cauchy(const Word& letters, std::span<const ScalarMeasure> laws) {
  return std::all_of(letters.begin(), letters.end(), [&](const Letter& l) { return laws[l.var].is_cauchy_family(); });
}

}  // namespace

cplx mixed_moment(const Word& letters, std::span<const ScalarMeasure> laws, IndependenceMode mode) {
  validate_word(letters, laws);
  if (letters.empty()) return 1.0;
  switch (mode) {
    case IndependenceMode::Equal: {
      std::vector<cplx> zs;
      for (const Letter& l : letters) zs.push_back(l.z);
      return single_var_moment(common_law(letters, laws), zs);
    }
    case IndependenceMode::Classical: {
      std::map<int, std::vector<cplx>> groups;
      for (const Letter& l : letters) groups[l.var].push_back(l.z);
      cplx acc = 1.0;
      for (const auto& [v, zs] : groups) acc *= single_var_moment(laws[v], zs);
      return acc;
    }
    case IndependenceMode::Boolean: {
      cplx acc = 1.0;
      std::size_t i = 0;
      while (i < letters.size()) {
        std::vector<cplx> run;
        const int v = letters[i].var;
        while (i < letters.size() && letters[i].var == v) run.push_back(letters[i++].z);
        acc *= single_var_moment(laws[v], run);
      }
      return acc;
    }
    case IndependenceMode::Free: {
      if (!all_cauchy(letters, laws))
        throw Error(Errc::FreeModeUnsupportedLaw, "free mode needs Cauchy-family laws (or explicit MC delegation)");
      std::vector<Element> seq;
      for (const Letter& l : letters) {
        Poly p;
        p[ZList{l.z}] = 1.0;
        seq.push_back({l.var, std::move(p)});
      }
      FreeEngine engine(laws);
      return engine.phi(std::move(seq));
    }
  }
  return 0.0;
}

MomentValue evaluate(const ResolventWord& word) {
  validate_word(word.letters, word.laws);
  if (word.mode == IndependenceMode::Free && !all_cauchy(word.letters, word.laws)) {
    if (!word.mc_delegation)
      throw Error(Errc::FreeModeUnsupportedLaw, "free mode needs Cauchy-family laws (or explicit MC delegation)");
    const auto est = mc_mixed_moment(word.letters, word.laws, word.mc.N, word.mc.trials, word.mc.seed);
    return {est.mean, est.standard_error, true};
  }
  return {mixed_moment(word.letters, word.laws, word.mode), 0.0, false};
}

double FbcsReport::max_deviation() const {
  return std::max({std::abs(equal - reference), std::abs(classical - reference), std::abs(boolean - reference),
                   std::abs(free - reference)});
}

FbcsReport fbcs_check(std::span<const cplx> zs, std::span<const int> vars) {
  if (zs.size() != vars.size()) throw Error(Errc::InvalidArgument, "fbcs_check: z and index lists differ in length");
  require_upper(zs, "fbcs_check");
  int num_vars = 0;
  Word word;
  for (std::size_t j = 0; j < zs.size(); ++j) {
    if (vars[j] < 0) throw Error(Errc::InvalidArgument, "fbcs_check: negative variable index");
    num_vars = std::max(num_vars, vars[j] + 1);
    word.push_back({zs[j], vars[j]});
  }
  const std::vector<ScalarMeasure> laws(static_cast<std::size_t>(std::max(num_vars, 1)), ScalarMeasure::cauchy(0.0, 1.0));
  FbcsReport r;
  r.equal = mixed_moment(word, laws, IndependenceMode::Equal);
  r.classical = mixed_moment(word, laws, IndependenceMode::Classical);
  r.boolean = mixed_moment(word, laws, IndependenceMode::Boolean);
  r.free = mixed_moment(word, laws, IndependenceMode::Free);
  r.reference = 1.0;
  for (const cplx& z : zs) r.reference /= (z + cplx(0.0, 1.0));
  return r;
}

int neumann_order_for(double q, double rho, double tol) {
  if (!(q >= 0.0 && q < 1.0)) throw Error(Errc::NotDominant, "neumann_order_for: q must lie in [0, 1)");
  int p = 0;
  while (p < 200 && rho * std::pow(q, p + 1) / (1.0 - q) > tol) ++p;
  return p;
}

namespace {

struct Split {
  ComplexVector d;
  ComplexMatrix off;
  double rho;
  double q;
};

Split dominance(const ComplexMatrix& B, std::span<const ScalarMeasure> laws) {
  require_square(B, "matrix_G_via_neumann");
  const Eigen::Index m = B.rows();
  if (laws.empty() || m % static_cast<Eigen::Index>(laws.size()) != 0)
    throw Error(Errc::DimensionMismatch, "matrix_G_via_neumann: dimension is not a multiple of the number of laws");
  Split s;
  s.d = B.diagonal();
  s.off = B;
  s.off.diagonal().setZero();
  double min_im = std::numeric_limits<double>::infinity();
  for (Eigen::Index r = 0; r < m; ++r) min_im = std::min(min_im, s.d(r).imag());
  if (!(min_im > 0.0)) throw Error(Errc::NotDominant, "diagonal of B must lie in the upper half plane");
  s.rho = 1.0 / min_im;
  const Eigen::MatrixXd abs_off = s.off.cwiseAbs();
  s.q = operator_norm(abs_off) * s.rho;
  if (!(s.q < 1.0)) throw Error(Errc::NotDominant, "Neumann ratio q = " + std::to_string(s.q) + " is not below 1");
  return s;
}

void check_mode_laws(std::span<const ScalarMeasure> laws, IndependenceMode mode) {
  if (mode == IndependenceMode::Free &&
      !std::all_of(laws.begin(), laws.end(), [](const ScalarMeasure& mu) { return mu.is_cauchy_family(); }))
    throw Error(Errc::FreeModeUnsupportedLaw, "free Neumann series needs Cauchy-family laws");
  if (mode == IndependenceMode::Equal)
    for (const auto& mu : laws)
      if (!(mu == laws[0])) throw Error(Errc::InvalidArgument, "equal mode: all variables must share one law");
}

}  // namespace

NeumannResult matrix_G_via_neumann(const ComplexMatrix& B, std::span<const ScalarMeasure> laws, IndependenceMode mode,
                                   int p_max) {
  if (p_max < 0) throw Error(Errc::InvalidArgument, "matrix_G_via_neumann: negative order");
  const Split s = dominance(B, laws);
  check_mode_laws(laws, mode);
  const int m = static_cast<int>(B.rows());
  const int n = static_cast<int>(laws.size());
  auto var = [n](int r) { return r % n; };
  // Boolean words factor over maximal same-variable runs; for Cauchy laws the
  // free value factors the same way, so both carry only the open run.
  const bool run_based = mode == IndependenceMode::Boolean || mode == IndependenceMode::Free;

  std::map<std::vector<int>, cplx> moment_memo;
  auto multiset_moment = [&](int v, const std::vector<int>& counts, bool restrict_var) {
    std::vector<int> key(counts);
    key.push_back(v);
    if (auto it = moment_memo.find(key); it != moment_memo.end()) return it->second;
    std::vector<cplx> zs;
    for (int r = 0; r < m; ++r) {
      if (restrict_var && var(r) != v) continue;
      for (int c = 0; c < counts[r]; ++c) zs.push_back(s.d(r));
    }
    const cplx val = single_var_moment(laws[v], zs);
    moment_memo.emplace(std::move(key), val);
    return val;
  };
  auto close = [&](int r, const std::vector<int>& counts) -> cplx {
    if (run_based || mode == IndependenceMode::Equal) return multiset_moment(var(r), counts, run_based);
    cplx acc = 1.0;
    for (int v = 0; v < n; ++v) acc *= multiset_moment(v, counts, true);
    return acc;
  };

  ComplexMatrix G = ComplexMatrix::Zero(m, m);
  for (int a = 0; a < m; ++a) {
    // key: [row, counts...]
    std::map<std::vector<int>, cplx> states;
    std::vector<int> init(static_cast<std::size_t>(m) + 1, 0);
    init[0] = a;
    init[1 + a] = 1;
    states[init] = 1.0;
    double sign = 1.0;
    for (int p = 0; p <= p_max; ++p) {
      for (const auto& [key, w] : states) {
        const std::vector<int> counts(key.begin() + 1, key.end());
        G(a, key[0]) += sign * w * close(key[0], counts);
      }
      if (p == p_max) break;
      std::map<std::vector<int>, cplx> next;
      for (const auto& [key, w] : states) {
        const int r = key[0];
        for (int r2 = 0; r2 < m; ++r2) {
          const cplx b = s.off(r, r2);
          if (r2 == r || b == cplx(0.0)) continue;
          std::vector<int> nk(key);
          nk[0] = r2;
          cplx nw = w * b;
          if (run_based && var(r2) != var(r)) {
            const std::vector<int> counts(key.begin() + 1, key.end());
            nw *= close(r, counts);
            std::fill(nk.begin() + 1, nk.end(), 0);
          }
          ++nk[1 + r2];
          next[nk] += nw;
        }
      }
      states = std::move(next);
      sign = -sign;
    }
  }
  const double tail = s.rho * std::pow(s.q, p_max + 1) / (1.0 - s.q);
  return {G, tail, s.q, p_max};
}

NeumannResult matrix_G_via_neumann_to_tol(const ComplexMatrix& B, std::span<const ScalarMeasure> laws,
                                          IndependenceMode mode, double tol) {
  const Split s = dominance(B, laws);
  return matrix_G_via_neumann(B, laws, mode, neumann_order_for(s.q, s.rho, tol));
}

ComplexMatrix matrix_G_via_path_enumeration(const ComplexMatrix& B, std::span<const ScalarMeasure> laws,
                                            IndependenceMode mode, int p_max) {
  if (p_max < 0 || p_max > 8) throw Error(Errc::InvalidArgument, "path enumeration is limited to p_max <= 8");
  const Split s = dominance(B, laws);
  check_mode_laws(laws, mode);
  const int m = static_cast<int>(B.rows());
  const int n = static_cast<int>(laws.size());
  ComplexMatrix G = ComplexMatrix::Zero(m, m);
  std::vector<int> path;
  auto recurse = [&](auto&& self, cplx weight, int p) -> void {
    Word word;
    for (int r : path) word.push_back({s.d(r), r % n});
    const double sign = (p % 2 == 0) ? 1.0 : -1.0;
    G(path.front(), path.back()) += sign * weight * mixed_moment(word, laws, mode);
    if (p == p_max) return;
    const int r = path.back();
    for (int r2 = 0; r2 < m; ++r2) {
      if (r2 == r || s.off(r, r2) == cplx(0.0)) continue;
      path.push_back(r2);
      self(self, weight * s.off(r, r2), p + 1);
      path.pop_back();
    }
  };
  for (int a = 0; a < m; ++a) {
    path = {a};
    recurse(recurse, 1.0, 0);
  }
  return G;
}

}  // namespace ovfree
