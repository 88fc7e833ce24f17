#pragma once

// Receding-horizon brute-force controller planning on the true surrogate.

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "dmrl/core.hpp"
#include "dmrl/gridenv.hpp"

namespace dmrl::baseline {

using grid::Action;

struct MpcConfig {
  int horizon = 8;
  Vector action_grid{0.0, 0.1, 0.2};
  bool uniform_across_buses = true;
  double max_sequences = 1e6;

  void validate() const {
    if (horizon < 1) throw ConfigError("mpc: horizon must be >= 1");
    if (action_grid.empty()) throw ConfigError("mpc: action_grid must not be empty");
    for (double g : action_grid)
      if (!(g >= 0.0 && g <= grid::kMaxShed)) throw ConfigError("mpc: action_grid values must lie in [0, 0.2]");
    if (!(max_sequences >= 1.0)) throw ConfigError("mpc: max_sequences must be >= 1");
  }
};

/// Instrumentation for one planning call.
struct MpcStats {
  std::size_t sequences = 0;
  std::size_t simulated_steps = 0;
};

/// Number of action sequences one planning call enumerates.
inline double mpc_sequence_count(const MpcConfig& cfg, std::size_t n_load) {
  const double g = static_cast<double>(cfg.action_grid.size());
  return cfg.uniform_across_buses ? std::pow(g, cfg.horizon) : std::pow(g, static_cast<double>(n_load));
}

namespace detail {

struct Plan {
  double reward = -std::numeric_limits<double>::infinity();
  double shed = std::numeric_limits<double>::infinity();
  bool found = false;
  Action first;

  void offer(double r, double s, const Action& a) {
    if (!found || r > reward || (r == reward && s < shed)) {
      reward = r;
      shed = s;
      first = a;
      found = true;
    }
  }
};

inline double step_shed(const grid::GridState& s) {
  double total = 0.0;
  for (double p : s.shed_pu) total += p;
  return total;
}

}  // namespace detail

/// Pick the first action of the best sequence over the horizon (truncated at
/// the episode end). Sequences are scored by cumulative reward; exact ties go
/// to the smaller total shed, then to enumeration order.
inline Action mpc_control(const grid::GridState& state, const grid::GridModel& model, const grid::Scenario& scenario,
                          const grid::RewardWeights& weights, const MpcConfig& cfg, MpcStats* stats = nullptr) {
  cfg.validate();
  const std::size_t n_load = model.topology.n_load();
  const double count = mpc_sequence_count(cfg, n_load);
  if (count > cfg.max_sequences)
    throw ConfigError("mpc: " + std::to_string(static_cast<long long>(count)) +
                      " action sequences exceed the budget of " +
                      std::to_string(static_cast<long long>(cfg.max_sequences)));

  const int remaining = model.surrogate.steps_per_episode() - state.step;
  if (remaining <= 0) throw ArgumentError("mpc_control: episode already finished");
  const int horizon = std::min(cfg.horizon, remaining);
  MpcStats local;
  detail::Plan best;

  if (cfg.uniform_across_buses) {
    std::vector<grid::GridState> buf(static_cast<std::size_t>(horizon) + 1);
    buf[0] = state;
    std::vector<Action> actions;
    for (double g : cfg.action_grid) actions.emplace_back(n_load, g);
    std::size_t first_idx = 0;

    auto dfs = [&](auto&& self, int depth, double acc_r, double acc_s) -> void {
      for (std::size_t k = 0; k < actions.size(); ++k) {
        if (depth == 0) first_idx = k;
        auto r = grid::step_into(buf[depth], actions[k], model, scenario, weights, buf[depth + 1]);
        ++local.simulated_steps;
        const double rr = acc_r + r.reward;
        const double ss = acc_s + detail::step_shed(buf[depth + 1]);
        if (r.done || depth + 1 == horizon) {
          ++local.sequences;
          best.offer(rr, ss, actions[first_idx]);
        } else {
          self(self, depth + 1, rr, ss);
        }
      }
    };
    dfs(dfs, 0, 0.0, 0.0);
  } else {
    const std::size_t g = cfg.action_grid.size();
    const auto combos = static_cast<std::size_t>(count);
    Action zero(n_load, 0.0);
    Action first(n_load, 0.0);
    grid::GridState cur;
    grid::GridState nxt;
    for (std::size_t code = 0; code < combos; ++code) {
      std::size_t c = code;
      for (std::size_t j = 0; j < n_load; ++j) {
        first[j] = cfg.action_grid[c % g];
        c /= g;
      }
      double acc_r = 0.0;
      double acc_s = 0.0;
      cur = state;
      for (int d = 0; d < horizon; ++d) {
        auto r = grid::step_into(cur, d == 0 ? first : zero, model, scenario, weights, nxt);
        ++local.simulated_steps;
        acc_r += r.reward;
        acc_s += detail::step_shed(nxt);
        std::swap(cur, nxt);
        if (r.done) break;
      }
      ++local.sequences;
      best.offer(acc_r, acc_s, first);
    }
  }

  if (stats) {
    stats->sequences += local.sequences;
    stats->simulated_steps += local.simulated_steps;
  }
  return best.first;
}

}  // namespace dmrl::baseline
