#pragma once

// Independent scalar re-implementations used as test oracles. They share no
// code with the library beyond plain data types.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <utility>
#include <vector>

#include "dmrl/gridenv.hpp"

namespace oracle {

using Vec = std::vector<double>;

struct Band {
  double lo, hi, vmin;
};

// Recovery bands measured from fault clearance, each open on the left and
// closed on the right.
inline const Band kBands[] = {
    {0.0, 0.33, 0.7}, {0.33, 0.5, 0.8}, {0.5, 1.5, 0.9}, {1.5, std::numeric_limits<double>::infinity(), 0.95}};

inline const Band* band_at(double since_clear) {
  for (const auto& b : kBands)
    if (since_clear > b.lo + 1e-9 && since_clear <= b.hi + 1e-9) return &b;
  return nullptr;
}

inline double reward(const Vec& v, double t, double t_pf, const Vec& shed, int invalid, const dmrl::grid::RewardWeights& w) {
  if (t > t_pf + 4.0 + 1e-9) {
    for (std::size_t i = 0; i < v.size(); ++i)
      if (v[i] < 0.95) return -10000.0;
  }
  double sum_dv = 0.0;
  if (const Band* b = band_at(t - t_pf)) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double d = v[i] - b->vmin;
      if (d < 0.0) sum_dv += d;
    }
  }
  double sum_dp = 0.0;
  for (std::size_t j = 0; j < shed.size(); ++j) sum_dp += shed[j];
  return w.c1 * sum_dv - w.c2 * sum_dp - w.c3 * invalid;
}

inline bool envelope_violated(const Vec& t, const std::vector<Vec>& v, double t_pf) {
  for (std::size_t k = 0; k < t.size(); ++k) {
    const Band* b = band_at(t[k] - t_pf);
    if (!b) continue;
    for (double x : v[k])
      if (x < b->vmin) return true;
  }
  return false;
}

struct Trace {
  Vec t;
  std::vector<Vec> voltage;
};

/// Mostly nominal voltages with sparse dips straddling the band thresholds.
template <class Rng>
Trace random_trace(Rng& rng, std::size_t n_bus) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_real_distribution<double> dip(0.62, 0.99);
  Trace tr;
  for (int k = 0; k <= 100; ++k) {
    tr.t.push_back(k * 0.1);
    Vec v(n_bus, 1.0);
    for (auto& x : v)
      if (u(rng) < 0.004) x = dip(rng);
    tr.voltage.push_back(v);
  }
  return tr;
}

/// Solve A x = b by Gaussian elimination with partial pivoting.
inline Vec solve(std::vector<Vec> A, Vec b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(A[r][c]) > std::abs(A[p][c])) p = r;
    std::swap(A[c], A[p]);
    std::swap(b[c], b[p]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = A[r][c] / A[c][c];
      for (std::size_t k = c; k < n; ++k) A[r][k] -= f * A[c][k];
      b[r] -= f * b[c];
    }
  }
  Vec x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= A[i][k] * x[k];
    x[i] = s / A[i][i];
  }
  return x;
}

/// Textbook GP posterior on raw y: standardize, condition, de-standardize.
inline std::pair<double, double> gp_posterior(const std::vector<Vec>& X, const Vec& y, const Vec& x, double ell,
                                              double sf2, double sn2) {
  auto k = [&](const Vec& a, const Vec& b) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
    return sf2 * std::exp(-d2 / (2.0 * ell * ell));
  };
  const std::size_t n = X.size();
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : y) var += (v - mean) * (v - mean);
  double sd = std::sqrt(var / static_cast<double>(n));
  if (sd < 1e-12) sd = 1.0;
  Vec ys(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = (y[i] - mean) / sd;
  std::vector<Vec> K(n, Vec(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) K[i][j] = k(X[i], X[j]) + (i == j ? sn2 : 0.0);
  Vec ks(n);
  for (std::size_t i = 0; i < n; ++i) ks[i] = k(X[i], x);
  const Vec alpha = solve(K, ys);
  const Vec v = solve(K, ks);
  double mu = 0.0;
  double red = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mu += ks[i] * alpha[i];
    red += ks[i] * v[i];
  }
  return {mu * sd + mean, std::sqrt(std::max(sf2 - red, 0.0)) * sd};
}

}  // namespace oracle
