#pragma once

// Parallel augmented random search: symmetric weight perturbations evaluated
// on a shared batch of scenarios, top-b direction selection, and a step
// normalized by the spread of the retained returns.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dmrl/core.hpp"
#include "dmrl/gridenv.hpp"
#include "dmrl/parallel.hpp"
#include "dmrl/policy.hpp"

namespace dmrl::pars {

struct ParsConfig {
  std::size_t n_directions = 32;
  std::size_t top_b = 16;
  double step_size = 0.02;   // alpha
  double noise_std = 0.03;   // nu
  double decay = 0.996;      // epsilon
  int iterations = 100;      // H
  std::size_t scenarios_per_direction = 8;

  void validate() const {
    if (n_directions < 1) throw ConfigError("pars: n_directions must be >= 1");
    if (top_b < 1 || top_b > n_directions) throw ConfigError("pars: top_b must lie in [1, n_directions]");
    if (!(step_size > 0.0)) throw ConfigError("pars: step_size must be > 0");
    if (!(noise_std > 0.0)) throw ConfigError("pars: noise_std must be > 0");
    if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("pars: decay must lie in (0, 1]");
    if (iterations < 0) throw ConfigError("pars: iterations must be >= 0");
    if (scenarios_per_direction < 1) throw ConfigError("pars: scenarios_per_direction must be >= 1");
  }

  /// Full-scale hyperparameters used for the 300-bus system.
  static ParsConfig full_scale() { return {128, 64, 1.0, 2.0, 0.996, 100, 72}; }
};

struct DirectionEval {
  std::size_t index = 0;
  Vector delta;
  double r_plus = 0.0;
  double r_minus = 0.0;
};

/// Decayed step size and noise carried across calls, plus the global
/// iteration counter that addresses every random stream.
struct Schedule {
  double alpha = 0.0;
  double nu = 0.0;
  long iteration = 0;

  static Schedule from(const ParsConfig& cfg) { return {cfg.step_size, cfg.noise_std, 0}; }
};

struct IterationRecord {
  long iteration = 0;
  double mean_return = 0.0;
  double alpha = 0.0;
  double nu = 0.0;
};

inline Vector sample_direction(std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector d(dim);
  for (auto& x : d) x = normal(rng);
  return d;
}

/// n i.i.d. standard normal vectors; direction i depends only on (seed, i).
inline std::vector<Vector> sample_directions(std::size_t n, std::size_t dim, std::uint64_t seed) {
  if (n < 1 || dim < 1) throw ArgumentError("sample_directions: n and dim must be >= 1");
  std::vector<Vector> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_direction(dim, derive_seed(seed, i)));
  return out;
}

/// theta' = theta + alpha / (b * sigma_b) * sum over the top-b directions of
/// (r+ - r-) * delta, ranking by max(r+, r-) and taking sigma_b as the
/// population standard deviation of the 2b retained returns.
inline Vector update_weights(const Vector& theta, const std::vector<DirectionEval>& evals, const ParsConfig& cfg) {
  if (evals.size() != cfg.n_directions)
    throw ArgumentError("update_weights: expected " + std::to_string(cfg.n_directions) + " evaluations, got " +
                        std::to_string(evals.size()));
  for (const auto& e : evals) {
    if (!std::isfinite(e.r_plus) || !std::isfinite(e.r_minus))
      throw NumericError("update_weights: non-finite return for direction " + std::to_string(e.index));
    if (e.delta.size() != theta.size()) throw ArgumentError("update_weights: direction length mismatch");
  }

  std::vector<std::size_t> order(evals.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::max(evals[a].r_plus, evals[a].r_minus) > std::max(evals[b].r_plus, evals[b].r_minus);
  });
  const std::size_t b = cfg.top_b;

  double mean = 0.0;
  for (std::size_t k = 0; k < b; ++k) mean += evals[order[k]].r_plus + evals[order[k]].r_minus;
  mean /= static_cast<double>(2 * b);
  double var = 0.0;
  for (std::size_t k = 0; k < b; ++k) {
    const auto& e = evals[order[k]];
    var += (e.r_plus - mean) * (e.r_plus - mean) + (e.r_minus - mean) * (e.r_minus - mean);
  }
  var /= static_cast<double>(2 * b);
  double sigma = std::sqrt(var);
  if (sigma < 1e-8) sigma = 1.0;

  Vector step(theta.size(), 0.0);
  for (std::size_t k = 0; k < b; ++k) {
    const auto& e = evals[order[k]];
    const double diff = e.r_plus - e.r_minus;
    if (diff == 0.0) continue;
    for (std::size_t j = 0; j < step.size(); ++j) step[j] += diff * e.delta[j];
  }
  const double scale = cfg.step_size / (static_cast<double>(b) * sigma);
  Vector out = theta;
  for (std::size_t j = 0; j < out.size(); ++j) out[j] += scale * step[j];
  return out;
}

/// Outcome of one rollout: its return and, optionally, the observation
/// statistics it gathered.
struct RolloutOutcome {
  double ret = 0.0;
  std::optional<policy::RunningNormalizer> batch;
};

/// Indices of the scenarios used in one iteration: a seeded shuffle of the
/// pool, truncated to `m`. A pool smaller than `m` is used whole.
inline std::vector<std::size_t> sample_scenarios(std::size_t pool, std::size_t m, std::uint64_t seed) {
  std::vector<std::size_t> idx(pool);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = pool; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(idx[i - 1], idx[pick(rng)]);
  }
  idx.resize(std::min(pool, m));
  return idx;
}

/// One PARS iteration over a generic rollout
///   rollout(theta, task_index, rollout_seed) -> RolloutOutcome
/// where task_index ranges over [0, n_tasks). Returns the outcomes of all
/// 2 * N * M rollouts in (direction, sign, scenario) order so callers can
/// reduce side results deterministically. Advances `sched`.
template <class Rollout>
std::vector<RolloutOutcome> iterate(Vector& theta, const ParsConfig& cfg, Schedule& sched, std::size_t n_tasks,
                                    std::uint64_t seed, std::size_t workers, Rollout&& rollout,
                                    IterationRecord* record = nullptr) {
  cfg.validate();
  if (n_tasks == 0) throw ArgumentError("pars: empty scenario pool");
  const std::uint64_t iter_seed = derive_seed(seed, sched.iteration);
  const auto tasks = sample_scenarios(n_tasks, cfg.scenarios_per_direction, derive_seed(iter_seed, 1));
  const std::size_t n = cfg.n_directions;
  const std::size_t m = tasks.size();
  const auto deltas = sample_directions(n, theta.size(), derive_seed(iter_seed, 2));

  std::vector<RolloutOutcome> outcomes(2 * n * m);
  parallel_for(outcomes.size(), workers, [&](std::size_t k) {
    const std::size_t i = k / (2 * m);
    const std::size_t sign = (k / m) % 2;
    const std::size_t s = k % m;
    Vector perturbed = theta;
    const double eps = sign == 0 ? sched.nu : -sched.nu;
    for (std::size_t j = 0; j < perturbed.size(); ++j) perturbed[j] += eps * deltas[i][j];
    outcomes[k] = rollout(std::span<const double>(perturbed), tasks[s], derive_seed(iter_seed, 3, i, sign, s));
  });

  std::vector<DirectionEval> evals(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double rp = 0.0;
    double rm = 0.0;
    for (std::size_t s = 0; s < m; ++s) {
      rp += outcomes[(2 * i) * m + s].ret;
      rm += outcomes[(2 * i + 1) * m + s].ret;
    }
    total += rp + rm;
    evals[i] = {i, deltas[i], rp / static_cast<double>(m), rm / static_cast<double>(m)};
  }

  ParsConfig live = cfg;
  live.step_size = sched.alpha;
  theta = update_weights(theta, evals, live);

  if (record) *record = {sched.iteration, total / static_cast<double>(2 * n * m), sched.alpha, sched.nu};
  sched.alpha *= cfg.decay;
  sched.nu *= cfg.decay;
  ++sched.iteration;
  return outcomes;
}

// ---------------------------------------------------------------------------
// Policy rollouts on the grid surrogate

/// Surrogate model plus reward weights: everything a rollout needs besides
/// the policy.
struct Problem {
  grid::GridModel model;
  grid::RewardWeights weights;
};

struct RolloutResult {
  double ret = 0.0;
  std::optional<policy::RunningNormalizer> norm_batch;
};

/// Undiscounted episode return of pi_theta(., c) on one scenario. When
/// `collect_norm` is set the observations seen are accumulated into a fresh
/// batch; the bundle's normalizer itself is never modified.
inline RolloutResult rollout_return(const policy::PolicySpec& spec, std::span<const double> theta,
                                    const policy::RunningNormalizer& norm, std::span<const double> latent,
                                    const grid::Scenario& scenario, const Problem& problem, std::uint64_t seed,
                                    bool collect_norm) {
  if (spec.obs_dim != problem.model.topology.obs_dim() || spec.action_dim != problem.model.topology.n_load())
    throw ArgumentError("rollout: policy dimensions do not match the environment");
  policy::PolicyView view(spec, theta);
  auto hidden = policy::zero_hidden(spec);
  RolloutResult out;
  if (collect_norm) out.norm_batch.emplace(spec.obs_dim);
  auto res = grid::run_episode(problem.model, scenario, problem.weights, seed,
                               [&](const grid::GridState&, const grid::Observation& obs) {
                                 if (out.norm_batch) out.norm_batch->update(obs);
                                 return view.act(norm, obs, latent, hidden);
                               });
  out.ret = res.total_return;
  return out;
}

inline RolloutResult rollout_return(const policy::PolicyBundle& bundle, std::span<const double> latent,
                                    const grid::Scenario& scenario, const Problem& problem, std::uint64_t seed,
                                    bool collect_norm) {
  return rollout_return(bundle.spec, bundle.theta, bundle.normalizer, latent, scenario, problem, seed, collect_norm);
}

using LatentMap = std::map<std::string, Vector>;

/// H iterations of PARS on the policy weights. Each rollout uses the latent
/// of its scenario's environment; the observation normalizer absorbs the
/// merged statistics of every rollout after each iteration.
inline std::vector<IterationRecord> train_inner(policy::PolicyBundle& bundle, const LatentMap& latents,
                                                const std::vector<grid::Scenario>& scenarios, const Problem& problem,
                                                const ParsConfig& cfg, std::uint64_t seed, Schedule& sched,
                                                std::size_t workers = 1) {
  cfg.validate();
  std::vector<IterationRecord> history;
  if (cfg.iterations == 0) return history;
  if (scenarios.empty()) throw ArgumentError("train_inner: no scenarios");
  std::vector<const Vector*> latent_of(scenarios.size());
  for (std::size_t k = 0; k < scenarios.size(); ++k) {
    auto it = latents.find(scenarios[k].env.id);
    if (it == latents.end()) throw ArgumentError("train_inner: no latent for environment '" + scenarios[k].env.id + "'");
    if (it->second.size() != bundle.spec.latent_dim) throw ArgumentError("train_inner: latent dimension mismatch");
    latent_of[k] = &it->second;
  }

  for (int h = 0; h < cfg.iterations; ++h) {
    IterationRecord rec;
    const policy::RunningNormalizer frozen = bundle.normalizer;
    auto outcomes = iterate(bundle.theta, cfg, sched, scenarios.size(), seed, workers,
                            [&](std::span<const double> theta, std::size_t task, std::uint64_t rseed) {
                              auto r = rollout_return(bundle.spec, theta, frozen, *latent_of[task], scenarios[task],
                                                      problem, rseed, true);
                              return RolloutOutcome{r.ret, std::move(r.norm_batch)};
                            },
                            &rec);
    for (const auto& o : outcomes)
      if (o.batch) bundle.normalizer.merge(*o.batch);
    history.push_back(rec);
  }
  return history;
}

}  // namespace dmrl::pars
