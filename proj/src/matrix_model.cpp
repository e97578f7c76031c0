#include "ovfree/matrix_model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <mutex>
#include <numeric>

#include "ovfree/concurrency.hpp"

namespace ovfree {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 stream_engine(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{splitmix64(seed), splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL))};
  return std::mt19937_64(seq);
}

namespace {

ComplexMatrix ginibre(int N, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ComplexMatrix z(N, N);
  const double s = std::sqrt(0.5);
  for (int j = 0; j < N; ++j)
    for (int i = 0; i < N; ++i) {
      const double re = normal(rng);
      const double im = normal(rng);
      z(i, j) = cplx(s * re, s * im);
    }
  return z;
}

}  // namespace

ComplexMatrix haar_unitary(int N, std::mt19937_64& rng) {
  ComplexMatrix z = ginibre(N, rng);
  Eigen::HouseholderQR<ComplexMatrix> qr(z);
  ComplexMatrix q = qr.householderQ() * ComplexMatrix::Identity(N, N);
  const ComplexMatrix& r = qr.matrixQR();
  for (int j = 0; j < N; ++j) {
    const cplx d = r(j, j);
    const double a = std::abs(d);
    q.col(j) *= (a > 0.0 ? d / a : cplx(1.0));
  }
  return q;
}

ComplexMatrix gue_matrix(int N, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ComplexMatrix h(N, N);
  const double scale = 1.0 / std::sqrt(double(N));
  const double off = std::sqrt(0.5) * scale;
  for (int j = 0; j < N; ++j) {
    h(j, j) = normal(rng) * scale;
    for (int i = j + 1; i < N; ++i) {
      const double re = normal(rng);
      const double im = normal(rng);
      h(i, j) = cplx(off * re, off * im);
      h(j, i) = std::conj(h(i, j));
    }
  }
  return h;
}

std::string to_string(Realization r) {
  switch (r) {
    case Realization::HaarRotated: return "haar";
    case Realization::GUE: return "gue";
    case Realization::Diagonal: return "diagonal";
    case Realization::Permuted: return "permuted";
  }
  return "haar";
}

Realization realization_from_string(const std::string& s) {
  if (s == "haar") return Realization::HaarRotated;
  if (s == "gue") return Realization::GUE;
  if (s == "diagonal") return Realization::Diagonal;
  if (s == "permuted") return Realization::Permuted;
  throw Error(Errc::InvalidArgument, "unknown realization '" + s + "'");
}

Mixer parse_mixer(const std::string& text, int num_vars, const std::map<std::string, ComplexMatrix>& constants) {
  Mixer mixer;
  std::size_t pos = 0;
  auto skip = [&] {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  };
  auto fail = [&](const std::string& why) {
    throw Error(Errc::InvalidArgument, "mixer '" + text + "': " + why + " at offset " + std::to_string(pos));
  };
  double sign = 1.0;
  skip();
  if (pos < text.size() && (text[pos] == '-' || text[pos] == '+')) {
    sign = text[pos] == '-' ? -1.0 : 1.0;
    ++pos;
  }
  for (;;) {
    MixerTerm term;
    term.coefficient = sign;
    for (;;) {
      skip();
      if (pos >= text.size()) fail("expected a factor");
      const char c = text[pos];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        std::size_t used = 0;
        double v = 0.0;
        try {
          v = std::stod(text.substr(pos), &used);
        } catch (const std::exception&) {
          fail("bad number");
        }
        term.coefficient *= v;
        pos += used;
      } else if (c == 'X' && pos + 1 < text.size() && std::isdigit(static_cast<unsigned char>(text[pos + 1]))) {
        ++pos;
        int idx = 0;
        while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) idx = idx * 10 + (text[pos++] - '0');
        if (idx < 1 || idx > num_vars) fail("variable X" + std::to_string(idx) + " out of range");
        term.factors.push_back({MixerFactor::Kind::Variable, idx - 1, {}});
      } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::size_t start = pos;
        while (pos < text.size() && (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_')) ++pos;
        std::string name = text.substr(start, pos - start);
        if (!constants.count(name)) fail("unknown constant '" + name + "'");
        term.factors.push_back({MixerFactor::Kind::Constant, 0, name});
      } else {
        fail("unexpected character");
      }
      skip();
      if (pos < text.size() && text[pos] == '*') {
        ++pos;
        continue;
      }
      break;
    }
    mixer.terms.push_back(std::move(term));
    skip();
    if (pos >= text.size()) break;
    if (text[pos] == '+' || text[pos] == '-') {
      sign = text[pos] == '-' ? -1.0 : 1.0;
      ++pos;
      continue;
    }
    fail("expected '+', '-' or '*'");
  }
  return mixer;
}

void validate(const MatrixModelSpec& spec) {
  if (spec.n < 1) throw Error(Errc::InvalidArgument, "matrix model: n must be positive");
  if (spec.N < 2) throw Error(Errc::InvalidArgument, "matrix model: N must be at least 2");
  if (spec.trials < 2) throw Error(Errc::InvalidArgument, "matrix model: at least 2 trials");
  if (spec.vars.empty()) throw Error(Errc::InvalidArgument, "matrix model: no variables");
  for (const auto& [name, c] : spec.constants)
    if (c.rows() != spec.n || c.cols() != spec.n)
      throw Error(Errc::DimensionMismatch, "matrix model: constant '" + name + "' is not n x n");
  for (const auto& v : spec.vars)
    if (v.realization == Realization::GUE && !v.law.is<SemicircleLaw>())
      throw Error(Errc::InvalidArgument, "matrix model: GUE realization needs a semicircle law");
  (void)parse_mixer(spec.mixer, static_cast<int>(spec.vars.size()), spec.constants);
}

ComplexMatrix sample_scalar_variable(const ModelVariable& var, int N, std::mt19937_64& rng) {
  if (var.realization == Realization::GUE) {
    const auto* s = var.law.as<SemicircleLaw>();
    if (!s) throw Error(Errc::InvalidArgument, "GUE realization needs a semicircle law");
    return std::sqrt(s->variance) * gue_matrix(N, rng);
  }
  std::vector<double> nodes = quantile_nodes(var.law, N);
  if (var.realization == Realization::Permuted) std::shuffle(nodes.begin(), nodes.end(), rng);
  Eigen::VectorXd d = Eigen::Map<Eigen::VectorXd>(nodes.data(), N);
  if (var.realization == Realization::Diagonal || var.realization == Realization::Permuted)
    return d.cast<cplx>().asDiagonal();
  const ComplexMatrix u = haar_unitary(N, rng);
  ComplexMatrix x = u * d.cast<cplx>().asDiagonal() * u.adjoint();
  return (x + x.adjoint()) * 0.5;
}

ComplexMatrix sample_matrix_model(const MatrixModelSpec& spec, int N, std::uint64_t seed) {
  if (N < 2) throw Error(Errc::InvalidArgument, "sample_matrix_model: N must be at least 2");
  const Mixer mixer = parse_mixer(spec.mixer, static_cast<int>(spec.vars.size()), spec.constants);
  std::mt19937_64 rng = stream_engine(seed, 0);
  std::vector<ComplexMatrix> scalars;
  scalars.reserve(spec.vars.size());
  for (const auto& v : spec.vars) scalars.push_back(sample_scalar_variable(v, N, rng));

  const int n = spec.n;
  const int dim = n * N;
  const ComplexMatrix eye_n = ComplexMatrix::Identity(n, n);
  const ComplexMatrix eye_N = ComplexMatrix::Identity(N, N);
  ComplexMatrix out = ComplexMatrix::Zero(dim, dim);
  for (const MixerTerm& term : mixer.terms) {
    if (term.factors.size() == 1 && term.factors[0].kind == MixerFactor::Kind::Variable) {
      const ComplexMatrix& x = scalars[term.factors[0].variable];
      for (int i = 0; i < n; ++i) out.block(i * N, i * N, N, N) += term.coefficient * x;
      continue;
    }
    ComplexMatrix prod = term.coefficient * ComplexMatrix::Identity(dim, dim);
    for (const MixerFactor& f : term.factors) {
      const ComplexMatrix factor = f.kind == MixerFactor::Kind::Variable ? kron(eye_n, scalars[f.variable])
                                                                         : kron(spec.constants.at(f.constant), eye_N);
      prod = prod * factor;
    }
    out += prod;
  }
  if (!is_hermitian(out, 1e-10)) throw Error(Errc::NonHermitian, "matrix model: mixer output is not Hermitian");
  return (out + out.adjoint()) * 0.5;
}

MCEstimate summarize_trials(std::span<const ComplexMatrix> per_trial) {
  const int t = static_cast<int>(per_trial.size());
  if (t < 2) throw Error(Errc::InvalidArgument, "summarize_trials: need at least 2 trials");
  ComplexMatrix mean = ComplexMatrix::Zero(per_trial[0].rows(), per_trial[0].cols());
  for (const auto& m : per_trial) mean += m;
  mean /= double(t);
  Eigen::ArrayXXd var_re = Eigen::ArrayXXd::Zero(mean.rows(), mean.cols());
  Eigen::ArrayXXd var_im = var_re;
  for (const auto& m : per_trial) {
    const ComplexMatrix d = m - mean;
    var_re += d.real().array().square();
    var_im += d.imag().array().square();
  }
  var_re /= double(t - 1);
  var_im /= double(t - 1);
  const double se = std::sqrt(std::max(var_re.maxCoeff(), var_im.maxCoeff()) / double(t));
  return {mean, se, t};
}

struct MatrixModelSampler::Cache {
  std::once_flag once;
  // n == 1: spectra of the trial samples; otherwise the samples themselves
  std::vector<Eigen::VectorXd> spectra;
  std::vector<ComplexMatrix> samples;
};

MatrixModelSampler::MatrixModelSampler(MatrixModelSpec spec) : spec_(std::move(spec)), cache_(std::make_shared<Cache>()) {
  validate(spec_);
}

void MatrixModelSampler::ensure_cache() const {
  std::call_once(cache_->once, [this] {
    const std::size_t t = static_cast<std::size_t>(spec_.trials);
    if (spec_.n == 1) cache_->spectra.resize(t);
    else cache_->samples.resize(t);
    parallel_for(t, [&](std::size_t trial) {
      ComplexMatrix s = sample_matrix_model(spec_, spec_.N, splitmix64(spec_.seed) ^ splitmix64(trial + 1));
      if (spec_.n == 1) {
        Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(s, Eigen::EigenvaluesOnly);
        cache_->spectra[trial] = es.eigenvalues();
      } else {
        cache_->samples[trial] = std::move(s);
      }
    });
  });
}

namespace {

void require_block_multiple(const ComplexMatrix& b, int n) {
  if (b.rows() != b.cols() || b.rows() % n != 0)
    throw Error(Errc::DimensionMismatch, "point dimension is not a multiple of the base dimension");
}

ComplexMatrix small_inverse(const ComplexMatrix& x) {
  if (x.rows() == 1) {
    ComplexMatrix out(1, 1);
    out(0, 0) = 1.0 / x(0, 0);
    return out;
  }
  ComplexMatrix y = Eigen::PartialPivLU<ComplexMatrix>(x).inverse();
  if (!y.allFinite()) throw Error(Errc::OutsideResolvent, "sample resolvent is singular");
  return y;
}

}  // namespace

std::vector<ComplexMatrix> MatrixModelSampler::trial_resolvent_traces(const ComplexMatrix& b) const {
  require_block_multiple(b, spec_.n);
  ensure_cache();
  const std::size_t t = static_cast<std::size_t>(spec_.trials);
  std::vector<ComplexMatrix> per_trial(t);
  const Eigen::Index m = b.rows();
  parallel_for(t, [&](std::size_t trial) {
    if (spec_.n == 1) {
      const Eigen::VectorXd& lam = cache_->spectra[trial];
      ComplexMatrix acc = ComplexMatrix::Zero(m, m);
      const ComplexMatrix eye = ComplexMatrix::Identity(m, m);
      for (Eigen::Index l = 0; l < lam.size(); ++l) acc += small_inverse(b - lam(l) * eye);
      per_trial[trial] = acc / double(lam.size());
    } else {
      const Eigen::Index k = m / spec_.n;
      const ComplexMatrix big = kron(b, ComplexMatrix::Identity(spec_.N, spec_.N)) - amplify(cache_->samples[trial], k);
      per_trial[trial] = partial_trace(inverse(big), m, spec_.N);
    }
  });
  return per_trial;
}

MCEstimate MatrixModelSampler::estimate_G(const ComplexMatrix& b) const {
  const auto per_trial = trial_resolvent_traces(b);
  return summarize_trials(per_trial);
}

MCEstimate MatrixModelSampler::estimate_dG(const ComplexMatrix& b, const ComplexMatrix& h) const {
  require_block_multiple(b, spec_.n);
  if (h.rows() != b.rows() || h.cols() != b.cols()) throw Error(Errc::DimensionMismatch, "estimate_dG: direction shape");
  ensure_cache();
  const std::size_t t = static_cast<std::size_t>(spec_.trials);
  std::vector<ComplexMatrix> per_trial(t);
  const Eigen::Index m = b.rows();
  parallel_for(t, [&](std::size_t trial) {
    if (spec_.n == 1) {
      const Eigen::VectorXd& lam = cache_->spectra[trial];
      ComplexMatrix acc = ComplexMatrix::Zero(m, m);
      const ComplexMatrix eye = ComplexMatrix::Identity(m, m);
      for (Eigen::Index l = 0; l < lam.size(); ++l) {
        const ComplexMatrix r = small_inverse(b - lam(l) * eye);
        acc -= r * h * r;
      }
      per_trial[trial] = acc / double(lam.size());
    } else {
      const Eigen::Index k = m / spec_.n;
      const ComplexMatrix eye_N = ComplexMatrix::Identity(spec_.N, spec_.N);
      const ComplexMatrix r = inverse(kron(b, eye_N) - amplify(cache_->samples[trial], k));
      per_trial[trial] = -partial_trace(r * kron(h, eye_N) * r, m, spec_.N);
    }
  });
  return summarize_trials(per_trial);
}

ComplexMatrix MatrixModelSampler::jacobian(const ComplexMatrix& b) const {
  require_block_multiple(b, spec_.n);
  ensure_cache();
  const Eigen::Index m = b.rows();
  const Eigen::Index m2 = m * m;
  if (spec_.n == 1) {
    const std::size_t t = static_cast<std::size_t>(spec_.trials);
    std::vector<ComplexMatrix> per_trial(t);
    parallel_for(t, [&](std::size_t trial) {
      const Eigen::VectorXd& lam = cache_->spectra[trial];
      ComplexMatrix acc = ComplexMatrix::Zero(m2, m2);
      const ComplexMatrix eye = ComplexMatrix::Identity(m, m);
      for (Eigen::Index l = 0; l < lam.size(); ++l) {
        const ComplexMatrix r = small_inverse(b - lam(l) * eye);
        acc -= kron(ComplexMatrix(r.transpose()), r);
      }
      per_trial[trial] = acc / double(lam.size());
    });
    ComplexMatrix mean = ComplexMatrix::Zero(m2, m2);
    for (const auto& j : per_trial) mean += j;
    return mean / double(t);
  }
  ComplexMatrix jac(m2, m2);
  for (Eigen::Index col = 0; col < m2; ++col)
    jac.col(col) = vec(estimate_dG(b, matrix_unit(m, col % m, col / m)).mean);
  return jac;
}

MCEstimate mc_estimate_G(const MatrixModelSpec& spec, const ComplexMatrix& b) {
  if (half_plane_margin(b) <= 0.0) throw Error(Errc::OutsideResolvent, "mc_estimate_G: point not in the upper half plane");
  return MatrixModelSampler(spec).estimate_G(b);
}

MCScalarEstimate mc_mixed_moment(const Word& letters, std::span<const ScalarMeasure> laws, int N, int trials,
                                 std::uint64_t seed, Realization realization) {
  if (letters.empty()) return {1.0, 0.0, trials};
  if (trials < 2 || N < 2) throw Error(Errc::InvalidArgument, "mc_mixed_moment: need N >= 2 and trials >= 2");
  for (const Letter& l : letters)
    if (l.var < 0 || l.var >= static_cast<int>(laws.size())) throw Error(Errc::InvalidArgument, "mc_mixed_moment: variable out of range");
  std::vector<ComplexMatrix> per_trial(static_cast<std::size_t>(trials));
  parallel_for(per_trial.size(), [&](std::size_t trial) {
    std::mt19937_64 rng = stream_engine(seed, trial);
    // eigenbasis factors: X_i = U_i diag(λ_i) U_i*
    std::vector<ComplexMatrix> basis(laws.size());
    std::vector<Eigen::VectorXd> spectrum(laws.size());
    for (std::size_t i = 0; i < laws.size(); ++i) {
      std::vector<double> nodes = quantile_nodes(laws[i], N);
      if (realization == Realization::Permuted) std::shuffle(nodes.begin(), nodes.end(), rng);
      spectrum[i] = Eigen::Map<Eigen::VectorXd>(nodes.data(), N);
      if (realization == Realization::HaarRotated) basis[i] = haar_unitary(N, rng);
    }
    ComplexMatrix acc = ComplexMatrix::Identity(N, N);
    for (const Letter& l : letters) {
      const Eigen::VectorXd& lam = spectrum[l.var];
      ComplexVector d(N);
      for (int a = 0; a < N; ++a) d(a) = 1.0 / (l.z - lam(a));
      if (realization == Realization::HaarRotated) {
        const ComplexMatrix& u = basis[l.var];
        acc = ((acc * u) * d.asDiagonal()) * u.adjoint();
      } else {
        acc = acc * d.asDiagonal();
      }
    }
    ComplexMatrix out(1, 1);
    out(0, 0) = acc.trace() / double(N);
    per_trial[trial] = out;
  });
  const MCEstimate est = summarize_trials(per_trial);
  return {est.mean(0, 0), est.standard_error, trials};
}

}  // namespace ovfree
