#pragma once

// Latent-space meta-reinforcement learning: alternate per-environment
// strategy search over the latent (weights frozen) with shared-policy PARS
// training (latents frozen); adapt to a new environment by latent search only.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dmrl/bayesopt.hpp"
#include "dmrl/core.hpp"
#include "dmrl/gridenv.hpp"
#include "dmrl/parallel.hpp"
#include "dmrl/pars.hpp"
#include "dmrl/policy.hpp"

namespace dmrl::meta {

struct LatentEntry {
  Vector c;
  double last_j = std::numeric_limits<double>::quiet_NaN();
  int bo_runs = 0;

  friend bool operator==(const LatentEntry& a, const LatentEntry& b) {
    const bool j_eq = (std::isnan(a.last_j) && std::isnan(b.last_j)) || a.last_j == b.last_j;
    return a.c == b.c && j_eq && a.bo_runs == b.bo_runs;
  }
};

/// One entry per training environment, keyed by environment id.
using LatentTable = std::map<std::string, LatentEntry>;

inline LatentTable make_latent_table(const std::vector<grid::EnvironmentParams>& envs, std::size_t latent_dim) {
  LatentTable t;
  for (const auto& e : envs) t[e.id] = {Vector(latent_dim, 0.0), std::numeric_limits<double>::quiet_NaN(), 0};
  return t;
}

inline pars::LatentMap latent_map(const LatentTable& t) {
  pars::LatentMap m;
  for (const auto& [id, e] : t) m[id] = e.c;
  return m;
}

struct MetaConfig {
  int n_outer = 5;
  int n_inner = 10;
  std::size_t k_envs = 2;
  std::size_t q_contingencies = 4;
  std::size_t m_scenarios = 16;
  pars::ParsConfig pars{};
  bo::BoConfig bo{};

  void validate(std::size_t n_train_envs) const {
    if (n_outer < 1) throw ConfigError("meta: n_outer must be >= 1");
    if (n_inner < 0) throw ConfigError("meta: n_inner must be >= 0");
    if (k_envs < 1) throw ConfigError("meta: k_envs must be >= 1");
    if (q_contingencies < 1) throw ConfigError("meta: q_contingencies must be >= 1");
    if (m_scenarios < 1) throw ConfigError("meta: m_scenarios must be >= 1");
    if (k_envs > n_train_envs)
      throw ConfigError("meta: k_envs (" + std::to_string(k_envs) + ") exceeds the number of training environments (" +
                        std::to_string(n_train_envs) + ")");
    pars.validate();
    bo.validate();
  }

  static MetaConfig full_scale() {
    MetaConfig m;
    m.n_outer = 25;
    m.n_inner = 20;
    m.m_scenarios = 72;
    m.pars = pars::ParsConfig::full_scale();
    m.bo.n_iterations = 32;
    return m;
  }
};

struct HistoryRow {
  int outer = 0;
  pars::IterationRecord rec;
};

struct BoTrace {
  int outer = 0;
  std::string env_id;
  std::vector<bo::TraceRow> rows;
};

/// Complete training state; saving it after an outer iteration and resuming
/// reproduces the uninterrupted run exactly.
struct Checkpoint {
  static constexpr int kSchemaVersion = 1;

  int version = kSchemaVersion;
  policy::PolicyBundle bundle;
  LatentTable table;
  pars::Schedule schedule;
  int next_outer = 0;
  std::size_t env_cursor = 0;
  std::uint64_t seed = 0;
  std::vector<HistoryRow> history;
};

struct Counters {
  std::size_t bo_runs = 0;
  std::size_t pars_iterations = 0;
};

struct MetaOptions {
  std::size_t workers = 1;
  /// Return after this many outer iterations in total (simulated interruption).
  std::optional<int> stop_after_outer;
  /// Invoked with the state at the end of every outer iteration.
  std::function<void(const Checkpoint&)> on_checkpoint;
  std::vector<BoTrace>* bo_traces = nullptr;
  Counters* counters = nullptr;
};

/// Environment index drawn at global position g: round-robin through a fresh
/// seeded permutation for every pass over the environment list.
inline std::size_t env_at(std::size_t g, std::size_t n_envs, std::uint64_t seed) {
  std::vector<std::size_t> perm(n_envs);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, 0xe5u, g / n_envs));
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm[g % n_envs];
}

/// K distinct environments for one outer iteration, advancing `cursor`.
inline std::vector<std::size_t> sample_envs(std::size_t k, std::size_t n_envs, std::uint64_t seed, std::size_t& cursor) {
  std::vector<std::size_t> out;
  while (out.size() < k) {
    const std::size_t e = env_at(cursor++, n_envs, seed);
    if (std::find(out.begin(), out.end(), e) == out.end()) out.push_back(e);
  }
  return out;
}

inline Checkpoint initial_state(const policy::PolicySpec& spec, const std::vector<grid::EnvironmentParams>& train_envs,
                                const MetaConfig& cfg, std::uint64_t seed) {
  Checkpoint cp;
  cp.bundle = policy::PolicyBundle::create(spec, derive_seed(seed, 0x1417u));
  cp.table = make_latent_table(train_envs, spec.latent_dim);
  cp.schedule = pars::Schedule::from(cfg.pars);
  cp.seed = seed;
  return cp;
}

/// Run (or continue) meta-training from `state` until n_outer outer
/// iterations are complete or `opts.stop_after_outer` is reached.
inline void meta_train(Checkpoint& state, const std::vector<grid::EnvironmentParams>& train_envs,
                       const std::vector<grid::Contingency>& contingencies, const pars::Problem& problem,
                       const MetaConfig& cfg, const MetaOptions& opts = {}) {
  if (train_envs.empty()) throw ArgumentError("meta_train: no training environments");
  if (contingencies.empty()) throw ArgumentError("meta_train: empty contingency grid");
  cfg.validate(train_envs.size());
  for (const auto& e : train_envs)
    if (!state.table.count(e.id)) throw ArgumentError("meta_train: latent table has no entry for '" + e.id + "'");

  const std::uint64_t seed = state.seed;
  const int stop = std::min(cfg.n_outer, opts.stop_after_outer.value_or(cfg.n_outer));
  for (; state.next_outer < stop; ++state.next_outer) {
    const int k = state.next_outer;
    const auto picked = sample_envs(cfg.k_envs, train_envs.size(), seed, state.env_cursor);

    // Strategy search per sampled environment with theta frozen.
    for (std::size_t j = 0; j < picked.size(); ++j) {
      const auto& env = train_envs[picked[j]];
      const auto cont_idx = pars::sample_scenarios(contingencies.size(), cfg.q_contingencies,
                                                   derive_seed(seed, 0xc0u, k, picked[j]));
      std::vector<grid::Scenario> sc;
      for (auto ci : cont_idx) sc.push_back({env, contingencies[ci]});
      auto& entry = state.table.at(env.id);
      const Vector anchor = entry.c;
      auto res = bo::optimize_latent(state.bundle, sc, problem, cfg.bo, derive_seed(seed, 0xb0u, k, picked[j]),
                                     opts.workers, &anchor);
      entry.c = res.c_best;
      entry.last_j = res.j_best;
      ++entry.bo_runs;
      if (opts.counters) ++opts.counters->bo_runs;
      if (opts.bo_traces) opts.bo_traces->push_back({k, env.id, std::move(res.trace)});
    }

    // Shared-policy training with the latents fixed.
    std::vector<grid::EnvironmentParams> envs;
    for (auto i : picked) envs.push_back(train_envs[i]);
    const auto pool = grid::cartesian(envs, contingencies);
    pars::ParsConfig pc = cfg.pars;
    pc.iterations = cfg.n_inner;
    pc.scenarios_per_direction = cfg.m_scenarios;
    auto hist = pars::train_inner(state.bundle, latent_map(state.table), pool, problem, pc, derive_seed(seed, 0xa5u),
                                  state.schedule, opts.workers);
    for (const auto& r : hist) state.history.push_back({k, r});
    if (opts.counters) opts.counters->pars_iterations += hist.size();

    if (opts.on_checkpoint) {
      Checkpoint snapshot = state;
      ++snapshot.next_outer;
      opts.on_checkpoint(snapshot);
    }
  }
}

struct AdaptResult {
  Vector c;
  double j = 0.0;
  bo::BoResult bo;
};

/// Latent-only strategy search for a target environment. Weights and
/// normalizer are frozen; a violation is a logic error. `anchor` replaces the
/// zero latent as the first design point.
inline AdaptResult adapt(const policy::PolicyBundle& bundle, const grid::EnvironmentParams& target,
                         const std::vector<grid::Contingency>& contingencies, const pars::Problem& problem,
                         const bo::BoConfig& cfg, std::uint64_t seed, std::size_t workers = 1,
                         const Vector* anchor = nullptr) {
  if (contingencies.empty()) throw ArgumentError("adapt: no target contingencies");
  const Vector theta_before = bundle.theta;
  const auto norm_before = bundle.normalizer;
  std::vector<grid::Scenario> sc;
  for (const auto& c : contingencies) sc.push_back({target, c});
  auto res = bo::optimize_latent(bundle, sc, problem, cfg, seed, workers, anchor);
  if (bundle.theta != theta_before || bundle.normalizer.mean != norm_before.mean ||
      bundle.normalizer.m2 != norm_before.m2 || bundle.normalizer.count != norm_before.count)
    throw std::logic_error("adapt: policy weights changed during adaptation");
  return {res.c_best, res.j_best, std::move(res)};
}

struct ScenarioMetrics {
  std::string scenario_id;
  std::string env_id;
  double ret = 0.0;
  bool envelope_pass = false;
  double total_shed = 0.0;
};

struct Metrics {
  std::vector<ScenarioMetrics> rows;
  bool defined = false;   // aggregates are meaningless for an empty list
  double mean_return = 0.0;
  double pass_rate = 0.0;
  double mean_shed = 0.0;
};

inline Metrics summarize(std::vector<ScenarioMetrics> rows) {
  Metrics m;
  m.rows = std::move(rows);
  if (m.rows.empty()) return m;
  m.defined = true;
  for (const auto& r : m.rows) {
    m.mean_return += r.ret;
    m.pass_rate += r.envelope_pass ? 1.0 : 0.0;
    m.mean_shed += r.total_shed;
  }
  const double n = static_cast<double>(m.rows.size());
  m.mean_return /= n;
  m.pass_rate /= n;
  m.mean_shed /= n;
  return m;
}

/// Scenario k is always rolled with derive_seed(seed, k), so two calls on the
/// same list differ only in the latent.
inline Metrics evaluate(const policy::PolicyBundle& bundle, std::span<const double> c,
                        const std::vector<grid::Scenario>& scenarios, const pars::Problem& problem, std::uint64_t seed,
                        std::size_t workers = 1, std::vector<grid::EpisodeTrace>* traces = nullptr) {
  if (c.size() != bundle.spec.latent_dim) throw ArgumentError("evaluate: latent dimension mismatch");
  std::vector<ScenarioMetrics> rows(scenarios.size());
  if (traces) traces->assign(scenarios.size(), {});
  parallel_for(scenarios.size(), workers, [&](std::size_t k) {
    policy::PolicyView view(bundle.spec, bundle.theta);
    auto hidden = policy::zero_hidden(bundle.spec);
    auto res = grid::run_episode(
        problem.model, scenarios[k], problem.weights, derive_seed(seed, k),
        [&](const grid::GridState&, const grid::Observation& obs) {
          return view.act(bundle.normalizer, obs, c, hidden);
        },
        traces ? &(*traces)[k] : nullptr);
    rows[k] = {scenarios[k].id(), scenarios[k].env.id, res.total_return, res.envelope_pass, res.total_shed};
  });
  return summarize(std::move(rows));
}

}  // namespace dmrl::meta
