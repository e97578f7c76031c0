#include "ovfree/json_io.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "ovfree/matrix_model.hpp"

namespace ovfree {

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw SchemaError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw SchemaError(where + ": unknown key \"" + key + "\"");
  }
}

namespace {

double number(const Json& j, const std::string& where) {
  if (!j.is_number()) throw SchemaError(where + ": expected a number");
  return j.get<double>();
}

template <class T>
T get_or(const Json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw SchemaError(where + ": bad value for \"" + key + "\"");
  }
}

cplx complex_value(const Json& j, const std::string& where) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (j.is_string()) return parse_complex(j.get<std::string>());
  if (j.is_array() && j.size() == 2) return {number(j[0], where), number(j[1], where)};
  throw SchemaError(where + ": expected a complex number");
}

}  // namespace

cplx parse_complex(const std::string& text) {
  std::string s;
  for (char c : text)
    if (c != ' ') s += c;
  if (s.empty()) throw SchemaError("empty complex number");
  auto real_of = [&](const std::string& t) -> double {
    if (t.empty() || t == "+") return 1.0;
    if (t == "-") return -1.0;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(t, &used);
    } catch (const std::exception&) {
      throw SchemaError("malformed complex number \"" + text + "\"");
    }
    if (used != t.size()) throw SchemaError("malformed complex number \"" + text + "\"");
    return v;
  };
  if (s.back() != 'i') return {real_of(s), 0.0};
  s.pop_back();
  // split at the last sign that is not the sign of an exponent or the leading sign
  std::size_t split = std::string::npos;
  for (std::size_t k = s.size(); k-- > 1;)
    if ((s[k] == '+' || s[k] == '-') && s[k - 1] != 'e' && s[k - 1] != 'E') {
      split = k;
      break;
    }
  if (split == std::string::npos) return {0.0, real_of(s)};
  return {real_of(s.substr(0, split)), real_of(s.substr(split))};
}

std::string format_complex(cplx z) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g%+.17gi", z.real(), z.imag());
  return buf;
}

Json to_json(cplx z) { return Json::array({z.real(), z.imag()}); }

Json to_json(const ComplexMatrix& m) {
  Json re = Json::array(), im = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json rr = Json::array(), ri = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      rr.push_back(m(r, c).real());
      ri.push_back(m(r, c).imag());
    }
    re.push_back(rr);
    im.push_back(ri);
  }
  return Json{{"re", re}, {"im", im}};
}

ComplexMatrix matrix_from_json(const Json& j) {
  if (j.is_number() || j.is_string()) {
    ComplexMatrix m(1, 1);
    m(0, 0) = complex_value(j, "matrix");
    return m;
  }
  if (!j.is_object()) throw SchemaError("matrix: expected an object, a number or a complex string");
  if (j.contains("scalar")) {
    check_keys(j, {"scalar", "dim"}, "matrix");
    const int dim = get_or<int>(j, "dim", 1, "matrix");
    if (dim < 1) throw SchemaError("matrix: dim must be positive");
    return complex_value(j.at("scalar"), "matrix") * ComplexMatrix::Identity(dim, dim);
  }
  check_keys(j, {"re", "im"}, "matrix");
  if (!j.contains("re") || !j.at("re").is_array()) throw SchemaError("matrix: missing \"re\" rows");
  const Json& re = j.at("re");
  const Eigen::Index rows = static_cast<Eigen::Index>(re.size());
  if (rows == 0 || !re[0].is_array()) throw SchemaError("matrix: empty");
  const Eigen::Index cols = static_cast<Eigen::Index>(re[0].size());
  ComplexMatrix m(rows, cols);
  const Json* im = j.contains("im") ? &j.at("im") : nullptr;
  if (im && (!im->is_array() || static_cast<Eigen::Index>(im->size()) != rows)) throw SchemaError("matrix: \"im\" shape");
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (!re[r].is_array() || static_cast<Eigen::Index>(re[r].size()) != cols) throw SchemaError("matrix: ragged rows");
    if (im && (!(*im)[r].is_array() || static_cast<Eigen::Index>((*im)[r].size()) != cols))
      throw SchemaError("matrix: \"im\" shape");
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = cplx(number(re[r][c], "matrix"), im ? number((*im)[r][c], "matrix") : 0.0);
  }
  return m;
}

ScalarMeasure measure_from_json(const Json& j) {
  const std::string where = "law";
  if (j.is_string()) return measure_from_json(Json{{"variant", j.get<std::string>()}});
  if (j.is_object() && !j.contains("variant") && j.contains("atoms"))
    return measure_from_json(Json{{"variant", "atomic"}, {"atoms", j.at("atoms")}});
  if (!j.is_object() || !j.contains("variant") || !j.at("variant").is_string())
    throw SchemaError("law: expected {\"variant\": name, ...}");
  const std::string name = j.at("variant").get<std::string>();
  auto reals = [&](const char* key) {
    if (!j.contains(key) || !j.at(key).is_array()) throw SchemaError(std::string("law: missing array \"") + key + "\"");
    std::vector<double> v;
    for (const Json& x : j.at(key)) v.push_back(number(x, where));
    return v;
  };
  try {
    if (name == "cauchy") {
      check_keys(j, {"variant", "location", "scale"}, where);
      return ScalarMeasure::cauchy(get_or(j, "location", 0.0, where), get_or(j, "scale", 1.0, where));
    }
    if (name == "semicircle") {
      check_keys(j, {"variant", "variance"}, where);
      return ScalarMeasure::semicircle(get_or(j, "variance", 1.0, where));
    }
    if (name == "bernoulli") {
      check_keys(j, {"variant", "radius", "center"}, where);
      return ScalarMeasure::bernoulli(get_or(j, "radius", 1.0, where), get_or(j, "center", 0.0, where));
    }
    if (name == "arcsine") {
      check_keys(j, {"variant", "radius"}, where);
      return ScalarMeasure::arcsine(get_or(j, "radius", 1.0, where));
    }
    if (name == "point_mass") {
      check_keys(j, {"variant", "position"}, where);
      return ScalarMeasure::point_mass(get_or(j, "position", 0.0, where));
    }
    if (name == "atomic") {
      check_keys(j, {"variant", "atoms"}, where);
      if (!j.contains("atoms") || !j.at("atoms").is_array()) throw SchemaError("law: atomic needs \"atoms\"");
      std::vector<Atom> atoms;
      for (const Json& a : j.at("atoms")) {
        if (!a.is_array() || a.size() != 2) throw SchemaError("law: atoms are [position, weight] pairs");
        atoms.push_back({number(a[0], where), number(a[1], where)});
      }
      return ScalarMeasure::atomic(std::move(atoms));
    }
    if (name == "quadrature") {
      check_keys(j, {"variant", "nodes", "weights"}, where);
      return ScalarMeasure(QuadratureLaw{reals("nodes"), reals("weights")});
    }
  } catch (const Error& e) {
    throw SchemaError("law: " + std::string(e.what()));
  }
  throw SchemaError("law: unknown variant \"" + name + "\"");
}

namespace {

MonteCarloSettings mc_from_json(const Json& j, std::uint64_t default_seed) {
  check_keys(j, {"N", "trials", "seed"}, "mc");
  MonteCarloSettings mc;
  mc.N = get_or(j, "N", mc.N, "mc");
  mc.trials = get_or(j, "trials", mc.trials, "mc");
  mc.seed = get_or<std::uint64_t>(j, "seed", default_seed, "mc");
  return mc;
}

}  // namespace

OVDistribution distribution_from_json(const Json& j, std::uint64_t default_seed) {
  const std::string where = "distribution";
  if (!j.is_object() || !j.contains("backend") || !j.at("backend").is_string())
    throw SchemaError("distribution: expected {\"backend\": ..., ...}");
  const std::string backend = j.at("backend").get<std::string>();
  try {
    if (backend == "scalar") {
      check_keys(j, {"backend", "law", "base_dim"}, where);
      if (!j.contains("law")) throw SchemaError("distribution: scalar backend needs \"law\"");
      return OVDistribution::scalar(measure_from_json(j.at("law")), get_or(j, "base_dim", 1, where));
    }
    if (backend == "dirac") {
      check_keys(j, {"backend", "b0"}, where);
      if (!j.contains("b0")) throw SchemaError("distribution: dirac backend needs \"b0\"");
      return OVDistribution::dirac(matrix_from_json(j.at("b0")));
    }
    if (backend == "semicircular") {
      check_keys(j, {"backend", "coeffs"}, where);
      if (!j.contains("coeffs") || !j.at("coeffs").is_array()) throw SchemaError("distribution: semicircular needs \"coeffs\"");
      std::vector<ComplexMatrix> coeffs;
      for (const Json& c : j.at("coeffs")) coeffs.push_back(matrix_from_json(c));
      return OVDistribution::semicircular(std::move(coeffs));
    }
    if (backend == "diagonal") {
      check_keys(j, {"backend", "laws", "mode", "allow_mc", "mc"}, where);
      if (!j.contains("laws") || !j.at("laws").is_array()) throw SchemaError("distribution: diagonal needs \"laws\"");
      std::vector<ScalarMeasure> laws;
      for (const Json& l : j.at("laws")) laws.push_back(measure_from_json(l));
      const IndependenceMode mode = independence_mode_from_string(get_or<std::string>(j, "mode", "free", where));
      const MonteCarloSettings mc = mc_from_json(j.value("mc", Json::object()), default_seed);
      return OVDistribution::diagonal(std::move(laws), mode, get_or(j, "allow_mc", false, where), mc);
    }
    if (backend == "matrix_model") {
      check_keys(j, {"backend", "n", "N", "trials", "seed", "vars", "mixer", "constants"}, where);
      MatrixModelSpec spec;
      spec.n = get_or(j, "n", spec.n, where);
      spec.N = get_or(j, "N", spec.N, where);
      spec.trials = get_or(j, "trials", spec.trials, where);
      spec.seed = get_or<std::uint64_t>(j, "seed", default_seed, where);
      spec.mixer = get_or<std::string>(j, "mixer", spec.mixer, where);
      if (!j.contains("vars") || !j.at("vars").is_array()) throw SchemaError("distribution: matrix_model needs \"vars\"");
      for (const Json& v : j.at("vars")) {
        check_keys(v, {"law", "realization"}, "variable");
        if (!v.contains("law")) throw SchemaError("variable: missing \"law\"");
        spec.vars.push_back(
            {measure_from_json(v.at("law")), realization_from_string(get_or<std::string>(v, "realization", "haar", "variable"))});
      }
      if (j.contains("constants")) {
        if (!j.at("constants").is_object()) throw SchemaError("distribution: \"constants\" must be an object");
        for (const auto& [name, m] : j.at("constants").items()) spec.constants[name] = matrix_from_json(m);
      }
      return OVDistribution::matrix_model(std::move(spec));
    }
  } catch (const Error& e) {
    throw SchemaError("distribution: " + std::string(e.what()));
  }
  throw SchemaError("distribution: unknown backend \"" + backend + "\"");
}

std::uint64_t config_hash(const Json& config) {
  const std::string text = nlohmann::json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ovfree
