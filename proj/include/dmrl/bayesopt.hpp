#pragma once

// Gaussian-process Bayesian optimization with an upper-confidence-bound
// acquisition over a box-shaped latent space.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dmrl/core.hpp"
#include "dmrl/gridenv.hpp"
#include "dmrl/parallel.hpp"
#include "dmrl/pars.hpp"
#include "dmrl/policy.hpp"

namespace dmrl::bo {

struct BoConfig {
  int n_iterations = 32;   // N_BO
  int n_init = 4;
  double kappa = 2.0;
  double c_bound = 2.0;
  std::size_t n_candidates = 1000;
  double length_scale = 0.0;   // 0 selects 0.2 * box width
  double signal_var = 1.0;
  double noise_var = 1e-4;

  void validate() const {
    if (n_init < 1) throw ConfigError("bo: n_init must be >= 1");
    if (n_iterations < n_init) throw ConfigError("bo: n_iterations must be >= n_init");
    if (!(kappa >= 0.0)) throw ConfigError("bo: kappa must be >= 0");
    if (!(c_bound > 0.0)) throw ConfigError("bo: c_bound must be > 0");
    if (n_candidates < 1) throw ConfigError("bo: n_candidates must be >= 1");
    if (!(length_scale >= 0.0)) throw ConfigError("bo: length_scale must be >= 0");
    if (!(signal_var > 0.0)) throw ConfigError("bo: signal_var must be > 0");
    if (!(noise_var > 0.0)) throw ConfigError("bo: noise_var must be > 0");
  }

  double effective_length_scale() const { return length_scale > 0.0 ? length_scale : 0.2 * (2.0 * c_bound); }
};

/// Observed (latent, return) pairs. Returns are stored standardized; the
/// standardization constants are refreshed on every insertion.
struct GPDataset {
  std::vector<Vector> X;
  Vector y;
  double y_mean = 0.0;
  double y_std = 1.0;
  double length_scale = 0.8;
  double signal_var = 1.0;
  double noise_var = 1e-4;

  static GPDataset for_config(const BoConfig& cfg) {
    GPDataset d;
    d.length_scale = cfg.effective_length_scale();
    d.signal_var = cfg.signal_var;
    d.noise_var = cfg.noise_var;
    return d;
  }

  std::size_t size() const { return X.size(); }

  Vector raw_y() const {
    Vector out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] * y_std + y_mean;
    return out;
  }

  void add(const Vector& x, double y_raw) {
    if (!X.empty() && x.size() != X.front().size()) throw ArgumentError("GPDataset: latent dimension mismatch");
    Vector raw = raw_y();
    raw.push_back(y_raw);
    X.push_back(x);
    restandardize(raw);
  }

  /// Drop observed returns while keeping kernel settings.
  void clear_observations() {
    X.clear();
    y.clear();
    y_mean = 0.0;
    y_std = 1.0;
  }

  double kernel(std::span<const double> a, std::span<const double> b) const {
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
    return signal_var * std::exp(-0.5 * d2 / (length_scale * length_scale));
  }

 private:
  void restandardize(const Vector& raw) {
    const double n = static_cast<double>(raw.size());
    double m = 0.0;
    for (double v : raw) m += v;
    m /= n;
    double var = 0.0;
    for (double v : raw) var += (v - m) * (v - m);
    double s = std::sqrt(var / n);
    if (s < 1e-12) s = 1.0;
    y_mean = m;
    y_std = s;
    y.resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) y[i] = (raw[i] - m) / s;
  }
};

struct Posterior {
  double mean = 0.0;
  double std = 0.0;
};

/// GP regression conditioned on a dataset; factorizes once, predicts many.
class GaussianProcess {
 public:
  explicit GaussianProcess(const GPDataset& data) : data_(data) {
    const auto n = static_cast<Eigen::Index>(data.size());
    if (n == 0) return;
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j <= i; ++j) K(i, j) = K(j, i) = data.kernel(data.X[i], data.X[j]);
    K.diagonal().array() += data.noise_var;

    static constexpr double kJitter[] = {0.0, 1e-10, 1e-8, 1e-6, 1e-4};
    bool ok = false;
    for (double j : kJitter) {
      Eigen::MatrixXd Kj = K;
      Kj.diagonal().array() += j * data.signal_var;
      llt_.compute(Kj);
      if (llt_.info() == Eigen::Success) {
        ok = true;
        break;
      }
    }
    if (!ok) throw NumericError("gp: kernel matrix not positive definite after jitter escalation");
    Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(data.y.data(), n);
    alpha_ = llt_.solve(y);
  }

  /// Posterior mean and standard deviation in raw (de-standardized) units.
  Posterior predict(std::span<const double> x) const {
    const auto n = static_cast<Eigen::Index>(data_.size());
    const double prior_var = data_.signal_var;
    if (n == 0) return {data_.y_mean, std::sqrt(prior_var) * data_.y_std};
    Eigen::VectorXd k(n);
    for (Eigen::Index i = 0; i < n; ++i) k[i] = data_.kernel(data_.X[i], x);
    const double mu = k.dot(alpha_);
    Eigen::VectorXd v = llt_.matrixL().solve(k);
    const double var = std::max(prior_var - v.squaredNorm(), 0.0);
    return {mu * data_.y_std + data_.y_mean, std::sqrt(var) * data_.y_std};
  }

 private:
  const GPDataset& data_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
};

inline Posterior gp_posterior(const GPDataset& data, std::span<const double> x) {
  return GaussianProcess(data).predict(x);
}

inline double ucb(double mean, double std, double kappa) { return mean + kappa * std; }

inline double radical_inverse(std::size_t i, std::size_t base) {
  double f = 1.0;
  double r = 0.0;
  while (i > 0) {
    f /= static_cast<double>(base);
    r += f * static_cast<double>(i % base);
    i /= base;
  }
  return r;
}

/// Point k of the fixed initial design: the anchor first (the zero vector
/// unless warm-starting), then Halton points mapped onto the box.
inline Vector initial_design_point(std::size_t k, std::size_t dim, double c_bound, const Vector& anchor) {
  if (k == 0) return anchor;
  static constexpr std::size_t kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
  if (dim > std::size(kPrimes)) throw ArgumentError("initial design supports at most 12 latent dimensions");
  Vector x(dim);
  for (std::size_t d = 0; d < dim; ++d) x[d] = -c_bound + 2.0 * c_bound * radical_inverse(k, kPrimes[d]);
  return x;
}

/// Next latent to evaluate. While the dataset is smaller than n_init the
/// fixed design is followed; afterwards the UCB maximizer over n_candidates
/// uniform box samples is returned (lowest index wins ties).
inline Vector suggest(const GPDataset& data, const BoConfig& cfg, std::size_t dim, std::uint64_t seed,
                      const Vector* anchor = nullptr) {
  cfg.validate();
  const Vector zero(dim, 0.0);
  const Vector& a = anchor ? *anchor : zero;
  if (a.size() != dim) throw ArgumentError("suggest: anchor dimension mismatch");
  if (data.size() < static_cast<std::size_t>(cfg.n_init)) return initial_design_point(data.size(), dim, cfg.c_bound, a);

  GaussianProcess gp(data);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-cfg.c_bound, cfg.c_bound);
  Vector cand(dim);
  Vector best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < cfg.n_candidates; ++k) {
    for (auto& v : cand) v = unif(rng);
    const auto p = gp.predict(cand);
    const double s = ucb(p.mean, p.std, cfg.kappa);
    if (s > best_score) {
      best_score = s;
      best = cand;
    }
  }
  return best;
}

struct TraceRow {
  int round = 0;
  Vector c;
  double y = 0.0;
  double incumbent = 0.0;
};

struct BoResult {
  Vector c_best;
  double j_best = -std::numeric_limits<double>::infinity();
  GPDataset dataset;
  std::vector<TraceRow> trace;
  int faults = 0;
};

/// Sequential suggest -> evaluate -> update over a black-box objective.
/// A round whose evaluation throws SimulationFault is recorded with the worst
/// value observed so far.
template <class Objective>
BoResult maximize(Objective&& objective, std::size_t dim, const BoConfig& cfg, std::uint64_t seed,
                  const Vector* anchor = nullptr) {
  cfg.validate();
  if (dim < 1) throw ArgumentError("bo: latent dimension must be >= 1");
  BoResult res;
  res.dataset = GPDataset::for_config(cfg);
  double worst = std::numeric_limits<double>::infinity();
  for (int t = 0; t < cfg.n_iterations; ++t) {
    Vector c = suggest(res.dataset, cfg, dim, derive_seed(seed, t), anchor);
    double y = 0.0;
    try {
      y = objective(static_cast<const Vector&>(c));
    } catch (const SimulationFault& f) {
      if (!std::isfinite(worst)) throw;
      std::clog << "bo: round " << t << ": " << f.what() << "; scoring as worst observed\n";
      y = worst;
      ++res.faults;
    }
    worst = std::min(worst, y);
    res.dataset.add(c, y);
    if (y > res.j_best) {
      res.j_best = y;
      res.c_best = c;
    }
    res.trace.push_back({t, c, y, res.j_best});
  }
  return res;
}

/// Strategy optimization for one environment: maximize the mean return over
/// `env_scenarios` with weights and normalizer frozen.
inline BoResult optimize_latent(const policy::PolicyBundle& bundle, const std::vector<grid::Scenario>& env_scenarios,
                                const pars::Problem& problem, const BoConfig& cfg, std::uint64_t seed,
                                std::size_t workers = 1, const Vector* anchor = nullptr) {
  if (env_scenarios.empty()) throw ArgumentError("optimize_latent: no scenarios");
  for (const auto& s : env_scenarios)
    if (s.env.id != env_scenarios.front().env.id)
      throw ArgumentError("optimize_latent: scenarios span more than one environment");
  const std::size_t dim = bundle.spec.latent_dim;
  int round = 0;
  auto objective = [&](const Vector& c) {
    Vector returns(env_scenarios.size());
    const std::uint64_t rseed = derive_seed(seed, 0x5eed, round++);
    parallel_for(env_scenarios.size(), workers, [&](std::size_t k) {
      returns[k] = pars::rollout_return(bundle, c, env_scenarios[k], problem, derive_seed(rseed, k), false).ret;
    });
    double sum = 0.0;
    for (double r : returns) sum += r;
    return sum / static_cast<double>(returns.size());
  };
  return maximize(objective, dim, cfg, seed, anchor);
}

}  // namespace dmrl::bo
