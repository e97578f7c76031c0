#pragma once

// Globally adaptive Gauss–Kronrod (7/15) quadrature over a finite interval.
// The integrand may return any vector-space type (complex scalars, Eigen
// matrices); the error norm is supplied by `quad_norm` overloads below.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <queue>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>

namespace ovfree {

inline double quad_norm(double v) { return std::abs(v); }
inline double quad_norm(const std::complex<double>& v) { return std::abs(v); }
template <class Derived>
double quad_norm(const Eigen::MatrixBase<Derived>& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

struct QuadratureOptions {
  double abs_tol = 1e-14;
  double rel_tol = 1e-13;
  int max_intervals = 4000;
};

template <class T>
struct QuadratureResult {
  T value;
  double error;
  int intervals;
};

namespace detail {

// Kronrod nodes on [0,1] (symmetric), 15-point rule with embedded 7-point Gauss.
inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <class F>
auto gk15(F& f, double a, double b) {
  using T = std::decay_t<decltype(f(a))>;
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  T center = f(c);
  T kronrod = center * kKronrodWeights[7];
  T gauss = center * kGaussWeights[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = h * kKronrodNodes[j];
    T pair = f(c - dx) + f(c + dx);
    kronrod = kronrod + pair * kKronrodWeights[j];
    if (j % 2 == 1) gauss = gauss + pair * kGaussWeights[j / 2];
  }
  kronrod = kronrod * h;
  gauss = gauss * h;
  const double err = quad_norm(T(kronrod - gauss));
  return std::pair<T, double>{kronrod, err};
}

}  // namespace detail

template <class F>
auto integrate(F&& f, double a, double b, const QuadratureOptions& opt = {}) {
  using T = std::decay_t<decltype(f(a))>;
  struct Piece {
    double a, b;
    T value;
    double error;
  };
  auto cmp = [](const Piece& x, const Piece& y) { return x.error < y.error; };
  std::priority_queue<Piece, std::vector<Piece>, decltype(cmp)> heap(cmp);

  auto [v0, e0] = detail::gk15(f, a, b);
  T total = v0;
  double total_err = e0;
  heap.push({a, b, v0, e0});
  int intervals = 1;
  while (intervals < opt.max_intervals) {
    const double target = std::max(opt.abs_tol, opt.rel_tol * quad_norm(total));
    if (total_err <= target) break;
    Piece worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) {
      heap.push(worst);
      break;
    }
    auto [lv, le] = detail::gk15(f, worst.a, mid);
    auto [rv, re] = detail::gk15(f, mid, worst.b);
    total = total - worst.value + lv + rv;
    total_err += le + re - worst.error;
    heap.push({worst.a, mid, lv, le});
    heap.push({mid, worst.b, rv, re});
    ++intervals;
  }
  // recompute the sum from the pieces to shed accumulated update rounding
  T sum = heap.top().value;
  double err = heap.top().error;
  heap.pop();
  while (!heap.empty()) {
    sum = sum + heap.top().value;
    err += heap.top().error;
    heap.pop();
  }
  return QuadratureResult<T>{sum, err, intervals};
}

}  // namespace ovfree
