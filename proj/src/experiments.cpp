#include "ovfree/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <random>
#include <regex>
#include <sstream>

#include "ovfree/concurrency.hpp"
#include "ovfree/convolution.hpp"
#include "ovfree/killer.hpp"
#include "ovfree/matrix_model.hpp"
#include "ovfree/moments.hpp"
#include "ovfree/transforms.hpp"

#ifndef OVFREE_VERSION
#define OVFREE_VERSION "0.0.0"
#endif

namespace ovfree {

std::string tool_version() { return OVFREE_VERSION; }

ExperimentConfig parse_config(const Json& j) {
  check_keys(j, {"command", "seed", "params", "output"}, "config");
  ExperimentConfig cfg;
  cfg.source = j;
  if (!j.contains("command") || !j.at("command").is_string()) throw SchemaError("config: missing \"command\"");
  cfg.command = j.at("command").get<std::string>();
  if (std::none_of(std::begin(kCommands), std::end(kCommands), [&](const char* c) { return cfg.command == c; }))
    throw SchemaError("config: unknown command \"" + cfg.command + "\"");
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned()) throw SchemaError("config: \"seed\" must be a non-negative integer");
    cfg.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("params")) {
    if (!j.at("params").is_object()) throw SchemaError("config: \"params\" must be an object");
    cfg.params = j.at("params");
  }
  if (j.contains("output")) {
    if (!j.at("output").is_string()) throw SchemaError("config: \"output\" must be a string");
    cfg.output = j.at("output").get<std::string>();
  }
  return cfg;
}

namespace {

template <class T>
T param(const Json& p, const char* key, T fallback) {
  if (!p.contains(key)) return fallback;
  try {
    return p.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw SchemaError(std::string("params: bad value for \"") + key + "\"");
  }
}

const Json& required(const Json& p, const char* key) {
  if (!p.contains(key)) throw SchemaError(std::string("params: missing \"") + key + "\"");
  return p.at(key);
}

OVDistribution dist_param(const Json& p, const char* key, std::uint64_t seed) {
  return distribution_from_json(required(p, key), seed);
}

std::vector<ComplexMatrix> matrices(const Json& j, const char* key) {
  if (!j.is_array()) throw SchemaError(std::string("params: \"") + key + "\" must be an array");
  std::vector<ComplexMatrix> out;
  for (const Json& m : j) out.push_back(matrix_from_json(m));
  return out;
}

std::vector<double> default_cutoffs() {
  std::vector<double> k;
  for (int j = 1; j <= 32; ++j) k.push_back(j);
  return k;
}

void push_matrix_rows(Table& t, long long index, const ComplexMatrix& m, std::vector<Cell> extra = {}) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      std::vector<Cell> row{index, static_cast<long long>(r), static_cast<long long>(c), m(r, c).real(), m(r, c).imag()};
      row.insert(row.end(), extra.begin(), extra.end());
      t.rows.push_back(std::move(row));
    }
}

Json certificate_json(const CertifiedBall& b) {
  return Json{{"lambda", b.lambda}, {"R", b.R}, {"a", b.a},
              {"M", b.M},           {"r", b.r}, {"P", b.P},
              {"center", to_json(b.center)}, {"image_center", to_json(b.image_center)}};
}

BasePoint base_param(const Json& p, const OVDistribution& d, double default_lambda) {
  BasePoint base;
  base.n = param(p, "n", 1);
  base.base_dim = d.base_dim();
  base.lambda = param(p, "lambda", default_lambda);
  if (base.n < 1 || !(base.lambda > 0.0)) throw SchemaError("params: need n >= 1 and lambda > 0");
  return base;
}

ExperimentResult run_g_eval(const ExperimentConfig& cfg) {
  const Json& p = cfg.params;
  check_keys(p, {"dist", "points"}, "params");
  const OVDistribution d = dist_param(p, "dist", cfg.seed);
  const std::vector<ComplexMatrix> pts = matrices(required(p, "points"), "points");
  std::vector<GEstimate> vals(pts.size());
  for (std::size_t j = 0; j < pts.size(); ++j) vals[j] = eval_G_estimate(d, pts[j]);
  ExperimentResult res;
  Table t{{"point", "row", "col", "re", "im", "standard_error"}, {}};
  Json values = Json::array();
  for (std::size_t j = 0; j < pts.size(); ++j) {
    push_matrix_rows(t, static_cast<long long>(j), vals[j].value, {vals[j].standard_error});
    values.push_back(Json{{"G", to_json(vals[j].value)}, {"standard_error", vals[j].standard_error}});
  }
  res.summary["backend"] = d.kind();
  res.summary["values"] = values;
  res.table = std::move(t);
  return res;
}

ExperimentResult run_r_eval(const ExperimentConfig& cfg) {
  const Json& p = cfg.params;
  check_keys(p, {"dist", "lambda", "n", "R", "targets"}, "params");
  const OVDistribution d = dist_param(p, "dist", cfg.seed);
  const BasePoint base = base_param(p, d, 0.5);
  const double R = param(p, "R", base.lambda / 2);
  const int count = param(p, "targets", 20);
  CertifyOptions opt;
  opt.seed = cfg.seed;
  const CertifiedBall ball = bloch_certify(d, base, R, opt);
  std::vector<ComplexMatrix> w(count), r(count);
  for (int j = 0; j < count; ++j) {
    std::mt19937_64 rng = stream_engine(cfg.seed, static_cast<std::uint64_t>(j));
    w[j] = random_ball_point(ball.image_center, 0.9 * ball.P, rng);
  }
  parallel_for(static_cast<std::size_t>(count), [&](std::size_t j) { r[j] = r_transform(d, w[j], ball); });
  ExperimentResult res;
  Table t{{"target", "row", "col", "re", "im"}, {}};
  for (int j = 0; j < count; ++j) push_matrix_rows(t, j, r[j]);
  res.summary["certificate"] = certificate_json(ball);
  res.summary["targets"] = count;
  res.table = std::move(t);
  return res;
}

ExperimentResult run_certify(const ExperimentConfig& cfg) {
  const Json& p = cfg.params;
  check_keys(p, {"dist", "lambda", "n", "R", "safety_a", "safety_M", "roundtrip_targets", "injectivity_pairs"},
             "params");
  const OVDistribution d = dist_param(p, "dist", cfg.seed);
  const BasePoint base = base_param(p, d, 0.5);
  const double R = param(p, "R", base.lambda / 2);
  CertifyOptions opt;
  opt.safety_a = param(p, "safety_a", opt.safety_a);
  opt.safety_M = param(p, "safety_M", opt.safety_M);
  opt.seed = cfg.seed;
  const CertifiedBall ball = bloch_certify(d, base, R, opt);
  const int count = param(p, "roundtrip_targets", 100);
  std::vector<double> err(static_cast<std::size_t>(std::max(count, 0)));
  parallel_for(err.size(), [&](std::size_t j) {
    std::mt19937_64 rng = stream_engine(cfg.seed, j);
    const ComplexMatrix w = random_ball_point(ball.image_center, 0.9 * ball.P, rng);
    const ComplexMatrix b = invert_G(d, w, ball);
    err[j] = operator_norm(ComplexMatrix(eval_G(d, b) - w));
  });
  ExperimentResult res;
  res.summary["certificate"] = certificate_json(ball);
  res.summary["roundtrip_targets"] = count;
  res.summary["roundtrip_max_error"] = err.empty() ? 0.0 : *std::max_element(err.begin(), err.end());
  const int pairs = param(p, "injectivity_pairs", 0);
  if (pairs > 0) res.summary["injectivity_min_ratio"] = injectivity_spot_check(d, ball, pairs, cfg.seed);
  return res;
}

ExperimentResult run_convolve(const ExperimentConfig& cfg) {
  const Json& p = cfg.params;
  check_keys(p, {"x", "y", "sum", "lambda", "n", "R", "points", "b"}, "params");
  OVDistribution X = dist_param(p, "x", cfg.seed);
  OVDistribution Y = dist_param(p, "y", splitmix64(cfg.seed ^ 1));
  std::optional<OVDistribution> S;
  if (p.contains("sum")) S = distribution_from_json(p.at("sum"), splitmix64(cfg.seed ^ 2));
  const BasePoint base = base_param(p, X, 0.01);
  const double R = param(p, "R", base.lambda / 2);
  const int points = param(p, "points", 20);
  const ConvolutionTask task = make_convolution_task(X, Y, S, base, R, points, cfg.seed);
  ExperimentResult res;
  res.summary["joint_ball"] = Json{{"lambda", base.lambda}, {"R", R}, {"r", task.ball.r}, {"P", task.ball.P},
                                   {"target_radius", task.ball.target_radius}};
  res.summary["points"] = points;
  // at b_j = R_X(w_j) + R_Y(w_j) + w_j^{-1} the sum's transform should return w_j
  const std::vector<ComplexMatrix> rs = r_sum(task);
  std::vector<ComplexMatrix> bs(rs.size()), gs(rs.size());
  parallel_for(rs.size(), [&](std::size_t j) {
    bs[j] = rs[j] + inverse(task.eval_points[j]);
    gs[j] = eval_G_of_sum(task, bs[j]).G;
  });
  double roundtrip = 0.0;
  for (std::size_t j = 0; j < gs.size(); ++j)
    roundtrip = std::max(roundtrip, operator_norm(ComplexMatrix(gs[j] - task.eval_points[j])));
  res.summary["g_sum_roundtrip_max_error"] = roundtrip;
  std::optional<AdditivityReport> rep;
  if (S) {
    rep = verify_additivity(task);
    res.summary["additivity"] = Json{{"max_discrepancy", rep->max_discrepancy},
                                     {"max_stderr_budget", rep->max_budget},
                                     {"within_budget", rep->within_budget}};
  }
  Table t{{"point", "row", "col", "b_re", "b_im", "g_re", "g_im", "discrepancy", "stderr_budget"}, {}};
  for (std::size_t j = 0; j < gs.size(); ++j)
    for (Eigen::Index r = 0; r < gs[j].rows(); ++r)
      for (Eigen::Index c = 0; c < gs[j].cols(); ++c) {
        std::vector<Cell> row{static_cast<long long>(j), static_cast<long long>(r), static_cast<long long>(c),
                              bs[j](r, c).real(), bs[j](r, c).imag(), gs[j](r, c).real(), gs[j](r, c).imag()};
        if (rep) {
          row.push_back(rep->discrepancy[j]);
          row.push_back(rep->stderr_budget[j]);
        } else {
          row.push_back(std::string());
          row.push_back(std::string());
        }
        t.rows.push_back(std::move(row));
      }
  res.table = std::move(t);
  if (p.contains("b")) {
    Json sums = Json::array();
    for (const ComplexMatrix& b : matrices(p.at("b"), "b")) {
      const SumEvaluation ev = eval_G_of_sum(task, b);
      sums.push_back(Json{{"b", to_json(b)}, {"G", to_json(ev.G)}, {"residual", ev.residual}});
    }
    res.summary["g_sum"] = sums;
  }
  return res;
}

ExperimentResult run_truncate_sweep(const ExperimentConfig& cfg) {
  const Json& p = cfg.params;
  check_keys(p, {"dist", "b", "C", "r", "cutoffs"}, "params");
  const OVDistribution d = dist_param(p, "dist", cfg.seed);
  const int m = d.base_dim();
  const ComplexMatrix b = p.contains("b") ? matrix_from_json(p.at("b"))
                                          : ComplexMatrix(cplx(0.0, 2.0) * ComplexMatrix::Identity(m, m));
  const double C = param(p, "C", 1.05 * operator_norm(b));
  const double r = param(p, "r", 0.95 * half_plane_margin(b));
  const std::vector<double> cutoffs = param(p, "cutoffs", default_cutoffs());
  const std::vector<TruncationRow> rows = truncation_sweep(d, b, cutoffs, C, r);
  ExperimentResult res;
  Table t{{"cutoff", "retained_mass", "error", "bound", "within_bound"}, {}};
  bool all = true, monotone = true;
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const auto& row = rows[j];
    t.rows.push_back({row.cutoff, row.retained_mass, row.error, row.bound, static_cast<long long>(row.within_bound)});
    all = all && row.within_bound;
    if (j > 0 && rows[j].cutoff > rows[j - 1].cutoff && row.error > rows[j - 1].error + kConvergenceNoise) monotone = false;
  }
  res.summary["C"] = C;
  res.summary["r"] = r;
  res.summary["all_within_bound"] = all;
  res.summary["monotone"] = monotone;
  res.table = std::move(t);
  return res;
}

Word word_param(const Json& j) {
  Word w;
  if (j.is_string() && j.get<std::string>().find('(') != std::string::npos) {
    // "[(z,var),(z,var),...]"
    static const std::regex letter(R"(\(\s*([^,()]+?)\s*,\s*(-?\d+)\s*\))");
    const std::string text = j.get<std::string>();
    for (auto it = std::sregex_iterator(text.begin(), text.end(), letter); it != std::sregex_iterator(); ++it)
      w.push_back({parse_complex((*it)[1].str()), std::stoi((*it)[2].str()) - 1});
  } else if (j.is_string()) {
    // "z:var,z:var,..." with 1-based variables
    std::stringstream ss(j.get<std::string>());
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto colon = item.rfind(':');
      if (colon == std::string::npos) throw SchemaError("word: letters are written z:var");
      int var = 0;
      try {
        var = std::stoi(item.substr(colon + 1));
      } catch (const std::exception&) {
        throw SchemaError("word: bad variable index in \"" + item + "\"");
      }
      w.push_back({parse_complex(item.substr(0, colon)), var - 1});
    }
  } else if (j.is_array()) {
    for (const Json& l : j) {
      if (!l.is_array() || l.size() != 2 || !l[1].is_number_integer()) throw SchemaError("word: letters are [z, var]");
      const cplx z = l[0].is_string() ? parse_complex(l[0].get<std::string>()) : cplx(l[0].get<double>(), 0.0);
      w.push_back({z, l[1].get<int>() - 1});
    }
  } else {
    throw SchemaError("word: expected a string or an array");
  }
  if (w.empty()) throw SchemaError("word: empty");
  for (const Letter& l : w)
    if (l.var < 0) throw SchemaError("word: variables are numbered from 1");
  return w;
}

std::vector<ScalarMeasure> laws_param(const Json& p, std::size_t count) {
  std::vector<ScalarMeasure> laws;
  if (p.contains("laws")) {
    if (!p.at("laws").is_array()) throw SchemaError("params: \"laws\" must be an array");
    for (const Json& l : p.at("laws")) laws.push_back(measure_from_json(l));
  } else {
    laws.assign(count, ScalarMeasure::cauchy());
  }
  if (laws.size() == 1 && count > 1) laws.assign(count, laws.front());
  if (laws.size() < count) throw SchemaError("params: fewer laws than variables");
  return laws;
}

bool all_standard_cauchy(const std::vector<ScalarMeasure>& laws) {
  return std::all_of(laws.begin(), laws.end(), [](const ScalarMeasure& m) {
    const auto* c = m.as<CauchyLaw>();
    return c && c->location == 0.0 && c->scale == 1.0;
  });
}

ExperimentResult run_moments(const ExperimentConfig& cfg) {
  const Json& p = cfg.params;
  check_keys(p, {"word", "mode", "laws", "mc_delegation", "mc"}, "params");
  ResolventWord rw;
  rw.letters = word_param(required(p, "word"));
  int nv = 0;
  for (const Letter& l : rw.letters) nv = std::max(nv, l.var + 1);
  rw.laws = laws_param(p, static_cast<std::size_t>(nv));
  try {
    rw.mode = independence_mode_from_string(param<std::string>(p, "mode", "free"));
  } catch (const Error& e) {
    throw SchemaError(e.what());
  }
  rw.mc_delegation = param(p, "mc_delegation", false);
  if (p.contains("mc")) {
    const Json& mc = p.at("mc");
    check_keys(mc, {"N", "trials", "seed"}, "mc");
    rw.mc.N = param(mc, "N", rw.mc.N);
    rw.mc.trials = param(mc, "trials", rw.mc.trials);
    rw.mc.seed = param(mc, "seed", cfg.seed);
  } else {
    rw.mc.seed = cfg.seed;
  }
  const MomentValue v = evaluate(rw);
  ExperimentResult res;
  res.summary["mode"] = to_string(rw.mode);
  res.summary["value"] = to_json(v.value);
  if (all_standard_cauchy(rw.laws)) {
    cplx ref = 1.0;
    for (const Letter& l : rw.letters) ref /= l.z + cplx(0.0, 1.0);
    res.summary["reference"] = to_json(ref);
  }
  res.summary["standard_error"] = v.standard_error;
  res.summary["monte_carlo"] = v.monte_carlo;
  res.table = Table{{"mode", "re", "im", "standard_error", "monte_carlo"},
                    {{to_string(rw.mode), v.value.real(), v.value.imag(), v.standard_error,
                      static_cast<long long>(v.monte_carlo)}}};
  return res;
}

ExperimentResult run_fbcs(const ExperimentConfig& cfg) {
  const Json& p = cfg.params;
  check_keys(p, {"word", "random_words", "max_length", "max_vars"}, "params");
  std::vector<Word> words;
  const int random_words = param(p, "random_words", 0);
  if (random_words > 0) {
    const int max_len = param(p, "max_length", 6);
    const int max_vars = param(p, "max_vars", 3);
    if (max_len < 1 || max_vars < 1) throw SchemaError("params: max_length and max_vars must be positive");
    for (int k = 0; k < random_words; ++k) {
      std::mt19937_64 rng = stream_engine(cfg.seed, static_cast<std::uint64_t>(k));
      std::uniform_int_distribution<int> len(1, max_len), var(0, max_vars - 1);
      std::uniform_real_distribution<double> re(-2.0, 2.0), im(0.5, 2.0);
      Word w(static_cast<std::size_t>(len(rng)));
      for (Letter& l : w) {
        const double x = re(rng);
        const double y = im(rng);
        l = {cplx(x, y), var(rng)};
      }
      words.push_back(std::move(w));
    }
  } else {
    words.push_back(word_param(p.value("word", Json("1+i:1,2i:2,0.5+1.5i:1,-1+i:2"))));
  }
  std::vector<FbcsReport> reps(words.size());
  parallel_for(words.size(), [&](std::size_t k) {
    std::vector<cplx> zs;
    std::vector<int> vars;
    for (const Letter& l : words[k]) {
      zs.push_back(l.z);
      vars.push_back(l.var);
    }
    reps[k] = fbcs_check(zs, vars);
  });
  ExperimentResult res;
  Table t{{"word", "mode", "re", "im", "deviation"}, {}};
  double worst = 0.0;
  for (std::size_t k = 0; k < reps.size(); ++k) {
    const FbcsReport& r = reps[k];
    const std::pair<const char*, cplx> vals[] = {
        {"equal", r.equal}, {"classical", r.classical}, {"boolean", r.boolean}, {"free", r.free}, {"reference", r.reference}};
    for (const auto& [name, v] : vals)
      t.rows.push_back({static_cast<long long>(k), std::string(name), v.real(), v.imag(), std::abs(v - r.reference)});
    worst = std::max(worst, r.max_deviation());
  }
  res.summary["words"] = static_cast<long long>(words.size());
  res.summary["max_deviation"] = worst;
  res.table = std::move(t);
  return res;
}

ExperimentResult run_neumann(const ExperimentConfig& cfg) {
  const Json& p = cfg.params;
  check_keys(p, {"B", "laws", "mode", "tol", "p_max"}, "params");
  const ComplexMatrix B = matrix_from_json(required(p, "B"));
  const std::vector<ScalarMeasure> laws = laws_param(p, static_cast<std::size_t>(B.rows()));
  IndependenceMode mode;
  try {
    mode = independence_mode_from_string(param<std::string>(p, "mode", "free"));
  } catch (const Error& e) {
    throw SchemaError(e.what());
  }
  const NeumannResult nr = p.contains("p_max") ? matrix_G_via_neumann(B, laws, mode, param(p, "p_max", 10))
                                               : matrix_G_via_neumann_to_tol(B, laws, mode, param(p, "tol", 1e-12));
  ExperimentResult res;
  Table t{{"row", "col", "re", "im"}, {}};
  for (Eigen::Index r = 0; r < nr.G.rows(); ++r)
    for (Eigen::Index c = 0; c < nr.G.cols(); ++c)
      t.rows.push_back({static_cast<long long>(r), static_cast<long long>(c), nr.G(r, c).real(), nr.G(r, c).imag()});
  res.summary["mode"] = to_string(mode);
  res.summary["q"] = nr.q;
  res.summary["p_max"] = nr.p_max;
  res.summary["tail_bound"] = nr.tail_bound;
  if (all_standard_cauchy(laws) && (mode == IndependenceMode::Free || mode == IndependenceMode::Boolean)) {
    const ComplexMatrix exact = inverse(ComplexMatrix(B + cplx(0.0, 1.0) * ComplexMatrix::Identity(B.rows(), B.cols())));
    res.summary["closed_form_error"] = operator_norm(ComplexMatrix(nr.G - exact));
  }
  res.table = std::move(t);
  return res;
}

ExperimentResult run_killer(const ExperimentConfig& cfg) {
  const Json& p = cfg.params;
  check_keys(p, {"targets", "delta", "halfplane_samples"}, "params");
  const Json& tj = required(p, "targets");
  std::vector<cplx> targets;
  if (tj.is_string()) {
    std::stringstream ss(tj.get<std::string>());
    std::string item;
    while (std::getline(ss, item, ',')) targets.push_back(parse_complex(item));
  } else if (tj.is_array()) {
    for (const Json& z : tj) {
      if (!z.is_string()) throw SchemaError("params: targets are complex strings");
      targets.push_back(parse_complex(z.get<std::string>()));
    }
  } else {
    throw SchemaError("params: \"targets\" must be a string or an array");
  }
  for (const cplx& z : targets)
    if (!(z.imag() > 0.0)) throw SchemaError("params: killer targets must lie in the upper half plane");
  const double delta = param(p, "delta", 1e-3);
  const KillerF f = build_killer(targets);
  ExperimentResult res;
  Json stages = Json::array();
  for (const auto& st : f.stages) stages.push_back(Json{{"s", st.s}, {"r", st.r}});
  double max_d = 0.0;
  Json witnesses = Json::array();
  for (const cplx& z : f.targets) {
    max_d = std::max(max_d, std::abs(killer_derivative(f, z)));
    const WitnessReport w = non_invertibility_witness(f, z, std::min(delta, z.imag() / 10));
    witnesses.push_back(Json{{"target", to_json(z)},
                             {"delta", w.delta},
                             {"contact_constant", w.contact_constant},
                             {"scaling_ratio", w.scaling_ratio},
                             {"quadratic_contact", w.quadratic_contact},
                             {"x", to_json(w.x)},
                             {"y", to_json(w.y)},
                             {"image_distance", w.image_distance},
                             {"locally_invertible", w.locally_invertible}});
  }
  const HalfPlaneCheck hc = halfplane_check(f, param(p, "halfplane_samples", 10000), cfg.seed);
  res.summary["stages"] = stages;
  res.summary["max_abs_derivative_at_targets"] = max_d;
  res.summary["halfplane_check"] =
      Json{{"samples", hc.samples}, {"violations", hc.violations}, {"min_increment", hc.min_increment}};
  res.summary["witnesses"] = witnesses;
  return res;
}

/// Random B of dimension dim with ‖B^{-1}‖ ≤ max_inv_norm.
ComplexMatrix random_dominant(int dim, double max_inv_norm, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ComplexMatrix g(dim, dim);
  for (int c = 0; c < dim; ++c)
    for (int r = 0; r < dim; ++r) {
      const double re = normal(rng);
      const double im = normal(rng);
      g(r, c) = cplx(re, im);
    }
  Eigen::JacobiSVD<ComplexMatrix> svd(g, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::VectorXd s(dim);
  for (int k = 0; k < dim; ++k) s(k) = (1.0 / max_inv_norm) * (1.0 + 2.0 * unit(rng));
  return svd.matrixU() * s.cast<cplx>().asDiagonal() * svd.matrixV().adjoint();
}

ExperimentResult run_block_identity(const ExperimentConfig& cfg) {
  const Json& p = cfg.params;
  check_keys(p, {"dist", "B", "trials", "n", "max_inv_norm"}, "params");
  const OVDistribution d = p.contains("dist") ? distribution_from_json(p.at("dist"), cfg.seed)
                                              : OVDistribution::scalar(ScalarMeasure::cauchy());
  std::vector<ComplexMatrix> Bs;
  if (p.contains("B")) {
    Bs = matrices(p.at("B"), "B");
  } else {
    const int trials = param(p, "trials", 10);
    const int n = param(p, "n", 1);
    const double bound = param(p, "max_inv_norm", 0.8);
    if (n < 1 || !(bound > 0.0 && bound < 1.0)) throw SchemaError("params: need n >= 1 and 0 < max_inv_norm < 1");
    for (int k = 0; k < trials; ++k) {
      std::mt19937_64 rng = stream_engine(cfg.seed, static_cast<std::uint64_t>(k));
      Bs.push_back(random_dominant(2 * n * d.base_dim(), bound, rng));
    }
  }
  std::vector<double> disc(Bs.size());
  parallel_for(Bs.size(), [&](std::size_t k) { disc[k] = block_resolvent_identity_check(d, Bs[k]); });
  ExperimentResult res;
  Table t{{"trial", "inverse_norm", "discrepancy"}, {}};
  for (std::size_t k = 0; k < Bs.size(); ++k)
    t.rows.push_back({static_cast<long long>(k), operator_norm(inverse(Bs[k])), disc[k]});
  res.summary["trials"] = static_cast<long long>(Bs.size());
  res.summary["max_discrepancy"] = disc.empty() ? 0.0 : *std::max_element(disc.begin(), disc.end());
  res.table = std::move(t);
  return res;
}

ExperimentResult run_convergence(const ExperimentConfig& cfg) {
  const Json& p = cfg.params;
  check_keys(p, {"family", "law", "cutoffs", "m", "C", "r", "test_points", "tightness_eps"}, "params");
  const std::string family = param<std::string>(p, "family", "truncation");
  const int m = param(p, "m", 1);
  const double C = param(p, "C", 4.0);
  const double r = param(p, "r", 1.0);
  const std::vector<double> ks = param(p, "cutoffs", default_cutoffs());
  const std::vector<ComplexMatrix> pts = test_set(m, C, r, param(p, "test_points", 16), cfg.seed);
  std::vector<OVDistribution> members;
  GFunction limit;
  std::vector<double> envelope;
  if (family == "truncation") {
    const ScalarMeasure law = p.contains("law") ? measure_from_json(p.at("law")) : ScalarMeasure::cauchy();
    const OVDistribution full = OVDistribution::scalar(law, m);
    for (double k : ks) {
      const TruncationResult tr = truncate(law, k);
      members.push_back(OVDistribution::scalar(tr.truncated, m));
      envelope.push_back(std::sqrt(std::max(0.0, 1.0 - tr.retained_mass)) * (1.0 + C / r) / r);
    }
    limit = [full](const ComplexMatrix& b) { return eval_G(full, b); };
  } else if (family == "escaping") {
    if (p.contains("law")) throw SchemaError("params: the escaping family takes no \"law\"");
    for (double k : ks) members.push_back(OVDistribution::scalar(ScalarMeasure::atomic({{0.0, 0.5}, {k, 0.5}}), m));
    limit = [](const ComplexMatrix& b) { return ComplexMatrix(0.5 * inverse(b)); };
  } else {
    throw SchemaError("params: family must be \"truncation\" or \"escaping\"");
  }
  const ConvergenceReport rep = convergence_check(members, limit, pts, envelope, param(p, "tightness_eps", 0.1));
  ExperimentResult res;
  Table t{{"member", "parameter", "sup_error"}, {}};
  for (std::size_t k = 0; k < rep.sup_error.size(); ++k)
    t.rows.push_back({static_cast<long long>(k), ks[k], rep.sup_error[k]});
  res.summary["family"] = family;
  res.summary["monotone"] = rep.monotone;
  res.summary["within_envelope"] = rep.within_envelope;
  if (rep.tight) res.summary["tight"] = *rep.tight;
  if (rep.tightness_cutoff) res.summary["tightness_cutoff"] = *rep.tightness_cutoff;
  res.summary["limit_mass"] = rep.limit_mass;
  res.summary["mass_deficit"] = rep.mass_deficit;
  res.summary["limit_at_probe"] = to_json(rep.limit_at_probe);
  res.table = std::move(t);
  return res;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  using Runner = ExperimentResult (*)(const ExperimentConfig&);
  static const std::map<std::string, Runner> runners{
      {"g-eval", run_g_eval},       {"r-eval", run_r_eval},
      {"certify", run_certify},     {"convolve", run_convolve},
      {"truncate-sweep", run_truncate_sweep}, {"moments", run_moments},
      {"fbcs", run_fbcs},           {"neumann", run_neumann},
      {"killer", run_killer},       {"block-identity", run_block_identity},
      {"convergence", run_convergence}};
  const auto it = runners.find(cfg.command);
  if (it == runners.end()) throw SchemaError("config: unknown command \"" + cfg.command + "\"");
  return it->second(cfg);
}

namespace {

std::string csv_field(const Cell& c) {
  if (const double* d = std::get_if<double>(&c)) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", *d);
    return buf;
  }
  if (const long long* i = std::get_if<long long>(&c)) return std::to_string(*i);
  const std::string& s = std::get<std::string>(c);
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + "\"";
}

Json cell_json(const Cell& c) {
  if (const double* d = std::get_if<double>(&c)) return *d;
  if (const long long* i = std::get_if<long long>(&c)) return *i;
  return std::get<std::string>(c);
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

const std::string kCsvPrefix = "# ovfree ";

}  // namespace

void write_csv(std::ostream& os, const Table& table) {
  for (std::size_t k = 0; k < table.header.size(); ++k) os << (k ? "," : "") << csv_field(table.header[k]);
  os << "\r\n";
  for (const auto& row : table.rows) {
    for (std::size_t k = 0; k < row.size(); ++k) os << (k ? "," : "") << csv_field(row[k]);
    os << "\r\n";
  }
}

bool wants_csv(const ExperimentConfig& config, const ExperimentResult& result) {
  if (ends_with(config.output, ".csv")) {
    if (!result.table) throw SchemaError("output: command \"" + config.command + "\" has no tabular result; use .json");
    return true;
  }
  return config.output == "-" && result.table.has_value();
}

void write_artifact(std::ostream& os, const ExperimentConfig& config, const ExperimentResult& result, bool csv) {
  const std::string hash = hex64(config_hash(config.source));
  if (csv) {
    os << kCsvPrefix << tool_version() << " config_hash=" << hash << "\r\n";
    write_csv(os, *result.table);
    return;
  }
  Json out;
  out["meta"] = Json{{"tool", "ovfree"},
                     {"version", tool_version()},
                     {"config_hash", hash},
                     {"command", config.command},
                     {"seed", config.seed}};
  out["result"] = result.summary;
  if (result.table) {
    Json rows = Json::array();
    for (const auto& row : result.table->rows) {
      Json r = Json::array();
      for (const Cell& c : row) r.push_back(cell_json(c));
      rows.push_back(r);
    }
    out["table"] = Json{{"header", result.table->header}, {"rows", rows}};
  }
  os << out.dump(2) << "\n";
}

VerifyStatus verify_artifact(const ExperimentConfig& config, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return VerifyStatus::MissingHeader;
  const std::string expected = hex64(config_hash(config.source));
  std::string first;
  std::getline(in, first);
  if (first.rfind(kCsvPrefix, 0) == 0) {
    const auto pos = first.find("config_hash=");
    if (pos == std::string::npos) return VerifyStatus::MissingHeader;
    std::string found = first.substr(pos + 12);
    while (!found.empty() && (found.back() == '\r' || found.back() == '\n')) found.pop_back();
    return found == expected ? VerifyStatus::Match : VerifyStatus::Mismatch;
  }
  std::stringstream rest;
  rest << first << "\n" << in.rdbuf();
  const Json j = Json::parse(rest.str(), nullptr, false);
  if (j.is_discarded() || !j.contains("meta") || !j["meta"].contains("config_hash") || !j["meta"]["config_hash"].is_string())
    return VerifyStatus::MissingHeader;
  return j["meta"]["config_hash"].get<std::string>() == expected ? VerifyStatus::Match : VerifyStatus::Mismatch;
}

}  // namespace ovfree
