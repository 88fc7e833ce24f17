#pragma once

// Desk-scale surrogate of fault-induced delayed voltage recovery (FIDVR).
//
// A small meshed network of buses is coupled through a hop-distance
// sensitivity matrix. Load buses carry a share of induction (A/C) motor load
// that stalls when its terminal voltage stays under v_stall for t_stall
// seconds; a stalled motor draws (1 + lambda) times its running demand and
// never restarts within an episode. The only way to lift the depressed
// voltage is to shed load, up to 20% of the remaining load per control step.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dmrl/core.hpp"

namespace dmrl::grid {

inline constexpr double kMaxShed = 0.2;
inline constexpr double kMinVoltage = 0.0;
inline constexpr double kMaxVoltage = 1.2;
inline constexpr double kInvalidLoadFloor = 0.05;
inline constexpr double kTimeEps = 1e-9;

struct EnvironmentParams {
  std::string id;
  double pf_scale = 1.0;
  double motor_fraction = 0.44;
  double t_stall = 0.032;
  double v_stall = 0.45;

  void validate() const {
    if (!(pf_scale > 0.0)) throw ConfigError("environment '" + id + "': pf_scale must be > 0");
    if (!(motor_fraction >= 0.0 && motor_fraction <= 1.0))
      throw ConfigError("environment '" + id + "': motor_fraction must lie in [0, 1]");
    if (!(t_stall > 0.0)) throw ConfigError("environment '" + id + "': t_stall must be > 0");
    if (!(v_stall > 0.0 && v_stall < 1.0))
      throw ConfigError("environment '" + id + "': v_stall must lie in (0, 1)");
  }
};

struct Contingency {
  std::size_t fault_bus = 0;
  double fault_start = 1.0;
  double fault_duration = 0.05;

  double clearing_time() const { return fault_start + fault_duration; }
};

struct Scenario {
  EnvironmentParams env;
  Contingency cont;

  std::string id() const {
    std::ostringstream os;
    os << env.id << "/bus" << cont.fault_bus << "/dur" << cont.fault_duration;
    return os.str();
  }
};

struct GridTopology {
  std::size_t n_bus = 0;
  std::vector<std::size_t> load_buses;
  std::vector<double> nominal_load;            // per load bus, per-unit
  std::vector<std::vector<double>> coupling;   // n_bus x n_bus
  std::vector<std::vector<int>> hops;          // n_bus x n_bus

  std::size_t n_load() const { return load_buses.size(); }
  std::size_t obs_dim() const { return n_bus + load_buses.size(); }
};

/// Build a topology from an undirected edge list. Coupling between buses i and
/// j is coupling_decay^hop(i, j), so W is symmetric with a unit diagonal and
/// strictly decreasing in hop distance.
inline GridTopology make_topology(std::size_t n_bus,
                                  const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                                  std::vector<std::size_t> load_buses,
                                  std::vector<double> nominal_load,
                                  double coupling_decay) {
  if (n_bus == 0) throw ConfigError("topology: n_bus must be >= 1");
  if (load_buses.empty()) throw ConfigError("topology: at least one load bus required");
  if (load_buses.size() != nominal_load.size())
    throw ConfigError("topology: nominal_load must have one entry per load bus");
  if (!(coupling_decay > 0.0 && coupling_decay < 1.0))
    throw ConfigError("topology: coupling_decay must lie in (0, 1)");
  std::set<std::size_t> seen;
  for (auto b : load_buses) {
    if (b >= n_bus) throw ConfigError("topology: load bus " + std::to_string(b) + " out of range");
    if (!seen.insert(b).second) throw ConfigError("topology: duplicate load bus " + std::to_string(b));
  }
  for (double p : nominal_load)
    if (!(p > 0.0)) throw ConfigError("topology: nominal_load entries must be > 0");

  std::vector<std::vector<std::size_t>> adj(n_bus);
  for (auto [a, b] : edges) {
    if (a >= n_bus || b >= n_bus || a == b) throw ConfigError("topology: invalid edge");
    adj[a].push_back(b);
    adj[b].push_back(a);
  }

  GridTopology topo;
  topo.n_bus = n_bus;
  topo.load_buses = std::move(load_buses);
  topo.nominal_load = std::move(nominal_load);
  topo.hops.assign(n_bus, std::vector<int>(n_bus, -1));
  topo.coupling.assign(n_bus, std::vector<double>(n_bus, 0.0));
  for (std::size_t src = 0; src < n_bus; ++src) {
    auto& dist = topo.hops[src];
    std::deque<std::size_t> queue{src};
    dist[src] = 0;
    while (!queue.empty()) {
      auto u = queue.front();
      queue.pop_front();
      for (auto v : adj[u]) {
        if (dist[v] < 0) {
          dist[v] = dist[u] + 1;
          queue.push_back(v);
        }
      }
    }
    for (std::size_t dst = 0; dst < n_bus; ++dst) {
      if (dist[dst] < 0) throw ConfigError("topology: graph is not connected");
      topo.coupling[src][dst] = std::pow(coupling_decay, dist[dst]);
    }
  }
  return topo;
}

/// 10-bus path with two chords, six load buses.
inline GridTopology default_topology() {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i + 1 < 10; ++i) edges.emplace_back(i, i + 1);
  edges.emplace_back(1, 5);
  edges.emplace_back(4, 8);
  return make_topology(10, edges, {1, 3, 4, 6, 7, 9}, {1.0, 0.8, 1.2, 0.9, 1.1, 1.0}, 0.5);
}

/// Surrogate constants. Voltages relax toward their algebraic target with time
/// constant t_v, integrated with `substeps` explicit Euler substeps per control
/// interval dt.
struct SurrogateParams {
  double beta = 0.08;          // voltage sensitivity to demand change
  double lambda = 2.5;         // stalled-motor demand multiplier
  double rho = 0.5;            // fault depth decay per hop
  double fault_depth = 1.2;    // A, voltage depression at the faulted bus
  double t_v = 0.0125;         // voltage lag, seconds
  double dt = 0.1;             // control interval, seconds
  int substeps = 10;
  double episode_length = 10.0;

  void validate() const {
    if (!(beta >= 0.0)) throw ConfigError("surrogate: beta must be >= 0");
    if (!(lambda >= 0.0)) throw ConfigError("surrogate: lambda must be >= 0");
    if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("surrogate: rho must lie in (0, 1)");
    if (!(fault_depth >= 0.0)) throw ConfigError("surrogate: fault_depth must be >= 0");
    if (!(dt > 0.0)) throw ConfigError("surrogate: dt must be > 0");
    if (substeps < 1) throw ConfigError("surrogate: substeps must be >= 1");
    if (!(t_v > 0.0) || t_v < dt / substeps - 1e-15)
      throw ConfigError("surrogate: t_v must be >= dt / substeps for a stable lag");
    if (!(episode_length >= dt)) throw ConfigError("surrogate: episode_length must be >= dt");
  }

  int steps_per_episode() const { return static_cast<int>(std::llround(episode_length / dt)); }
};

struct GridModel {
  GridTopology topology = default_topology();
  SurrogateParams surrogate{};
};

struct RewardWeights {
  double c1 = 3000.0;
  double c2 = 60.0;
  double c3 = 1.0;
  double penalty = -10000.0;

  void validate() const {
    if (!(c1 >= 0.0 && c2 >= 0.0 && c3 >= 0.0)) throw ConfigError("reward: weights must be >= 0");
    if (penalty != -10000.0) throw ConfigError("reward: penalty is fixed at -10000");
  }
};

struct GridState {
  int step = 0;
  double t = 0.0;
  Vector voltage;              // per bus
  Vector load_frac;            // per load bus
  Vector stalled;              // per load bus
  Vector under_vstall_timer;   // per load bus, seconds
  Vector shed_pu;              // per load bus, load shed during the last step
  int invalid_count = 0;       // invalid shed requests during the last step
};

/// Flat observation: per-bus voltages followed by per-load-bus remaining fractions.
using Observation = Vector;
/// Per-load-bus shed fractions in [0, kMaxShed].
using Action = Vector;

inline Observation observe(const GridState& s) {
  Observation obs;
  obs.reserve(s.voltage.size() + s.load_frac.size());
  obs.insert(obs.end(), s.voltage.begin(), s.voltage.end());
  obs.insert(obs.end(), s.load_frac.begin(), s.load_frac.end());
  return obs;
}

inline void validate_scenario(const GridTopology& topo, const Scenario& sc) {
  if (sc.cont.fault_bus >= topo.n_bus)
    throw ArgumentError("fault bus " + std::to_string(sc.cont.fault_bus) + " out of range for " +
                        std::to_string(topo.n_bus) + "-bus topology");
  if (!(sc.cont.fault_duration > 0.0)) throw ArgumentError("fault_duration must be > 0");
  if (!(sc.cont.fault_start >= 0.0)) throw ArgumentError("fault_start must be >= 0");
  sc.env.validate();
}

/// Minimum recovery voltage required `since_clear` seconds after fault
/// clearance, or nullopt when no band applies (before or at clearance).
/// Bands are closed on the right.
inline std::optional<double> recovery_threshold(double since_clear) {
  if (since_clear <= kTimeEps) return std::nullopt;
  if (since_clear <= 0.33 + kTimeEps) return 0.7;
  if (since_clear <= 0.5 + kTimeEps) return 0.8;
  if (since_clear <= 1.5 + kTimeEps) return 0.9;
  return 0.95;
}

/// True when the terminal penalty fires: a bus under 0.95 p.u. more than 4 s
/// after fault clearance.
inline bool penalty_fires(const Vector& voltage, double t, double t_pf) {
  if (!(t - t_pf > 4.0 + kTimeEps)) return false;
  return std::any_of(voltage.begin(), voltage.end(), [](double v) { return v < 0.95; });
}

inline double step_reward(const Vector& voltage, double t, double t_pf, const Vector& shed_pu,
                          int invalid_count, const RewardWeights& w) {
  if (penalty_fires(voltage, t, t_pf)) return w.penalty;
  double dv = 0.0;
  if (auto thr = recovery_threshold(t - t_pf)) {
    for (double v : voltage) dv += std::min(v - *thr, 0.0);
  }
  double dp = 0.0;
  for (double p : shed_pu) dp += p;
  return w.c1 * dv - w.c2 * dp - w.c3 * static_cast<double>(invalid_count);
}

inline GridState reset(const GridModel& model, const Scenario& scenario, std::uint64_t /*seed*/) {
  validate_scenario(model.topology, scenario);
  const auto& topo = model.topology;
  GridState s;
  s.voltage.assign(topo.n_bus, 1.0);
  s.load_frac.assign(topo.n_load(), 1.0);
  s.stalled.assign(topo.n_load(), 0.0);
  s.under_vstall_timer.assign(topo.n_load(), 0.0);
  s.shed_pu.assign(topo.n_load(), 0.0);
  return s;
}

struct StepResult {
  double reward = 0.0;
  bool done = false;
};

/// Advance `state` by one control interval into `next` (capacity reused).
inline StepResult step_into(const GridState& state, const Action& action, const GridModel& model,
                            const Scenario& scenario, const RewardWeights& weights, GridState& next) {
  const auto& topo = model.topology;
  const auto& sp = model.surrogate;
  const auto& env = scenario.env;
  const std::size_t n_load = topo.n_load();
  if (action.size() != n_load)
    throw ArgumentError("action has " + std::to_string(action.size()) + " components, expected " +
                        std::to_string(n_load));
  for (double a : action)
    if (!(a >= 0.0 && a <= kMaxShed)) throw ArgumentError("action component outside [0, 0.2]");
  if (state.step >= sp.steps_per_episode()) throw ArgumentError("step past episode end");

  next = state;
  next.invalid_count = 0;

  for (std::size_t j = 0; j < n_load; ++j) {
    next.shed_pu[j] = 0.0;
    const double a = action[j];
    if (a <= 0.0) continue;
    if (next.load_frac[j] < kInvalidLoadFloor) {
      ++next.invalid_count;
      continue;
    }
    const double before = next.load_frac[j];
    next.load_frac[j] = before * (1.0 - a);
    next.shed_pu[j] = env.pf_scale * topo.nominal_load[j] * (before - next.load_frac[j]);
  }

  const double h = sp.dt / sp.substeps;
  const double gain = h / sp.t_v;
  const double fault_end = scenario.cont.clearing_time();
  const std::size_t fb = scenario.cont.fault_bus;
  // per-load-bus demand deficit D0 - D
  thread_local Vector deficit;
  deficit.resize(n_load);

  for (int s = 0; s < sp.substeps; ++s) {
    const double ts = (static_cast<double>(state.step) * sp.substeps + s) * h;
    const bool faulted = ts + kTimeEps >= scenario.cont.fault_start && ts + kTimeEps < fault_end;
    for (std::size_t j = 0; j < n_load; ++j) {
      const double d0 = env.pf_scale * topo.nominal_load[j];
      const double d = d0 * next.load_frac[j] * (1.0 + sp.lambda * env.motor_fraction * next.stalled[j]);
      deficit[j] = d0 - d;
    }
    for (std::size_t i = 0; i < topo.n_bus; ++i) {
      double acc = 0.0;
      const auto& wrow = topo.coupling[i];
      for (std::size_t j = 0; j < n_load; ++j) acc += wrow[topo.load_buses[j]] * deficit[j];
      double target = 1.0 + sp.beta * acc;
      if (faulted) target -= sp.fault_depth * std::pow(sp.rho, topo.hops[i][fb]);
      double v = next.voltage[i] + gain * (target - next.voltage[i]);
      next.voltage[i] = std::clamp(v, kMinVoltage, kMaxVoltage);
    }
    for (std::size_t j = 0; j < n_load; ++j) {
      if (next.voltage[topo.load_buses[j]] < env.v_stall) {
        next.under_vstall_timer[j] += h;
        if (next.under_vstall_timer[j] + kTimeEps >= env.t_stall) next.stalled[j] = 1.0;
      } else {
        next.under_vstall_timer[j] = 0.0;
      }
    }
  }

  next.step = state.step + 1;
  next.t = next.step * sp.dt;

  for (double v : next.voltage)
    if (!std::isfinite(v)) throw SimulationFault(scenario.id(), "non-finite voltage");

  StepResult r;
  const double t_pf = scenario.cont.clearing_time();
  r.reward = step_reward(next.voltage, next.t, t_pf, next.shed_pu, next.invalid_count, weights);
  if (!std::isfinite(r.reward)) throw SimulationFault(scenario.id(), "non-finite reward");
  r.done = next.step >= sp.steps_per_episode() || penalty_fires(next.voltage, next.t, t_pf);
  return r;
}

struct Transition {
  GridState state;
  Observation obs;
  double reward = 0.0;
  bool done = false;
};

inline Transition step(const GridState& state, const Action& action, const GridModel& model,
                       const Scenario& scenario, const RewardWeights& weights) {
  Transition out;
  auto r = step_into(state, action, model, scenario, weights, out.state);
  out.obs = observe(out.state);
  out.reward = r.reward;
  out.done = r.done;
  return out;
}

/// Per-step voltage samples, one row per control step.
struct VoltageTrace {
  std::vector<double> t;
  std::vector<Vector> voltage;
};

/// True iff any bus breaches the time-staged recovery bands after clearance.
inline bool envelope_violated(const VoltageTrace& trace, double t_pf) {
  if (trace.t.empty()) throw ArgumentError("envelope_violated: empty trace");
  if (trace.t.size() != trace.voltage.size())
    throw ArgumentError("envelope_violated: time and voltage rows differ in length");
  for (std::size_t k = 0; k < trace.t.size(); ++k) {
    auto thr = recovery_threshold(trace.t[k] - t_pf);
    if (!thr) continue;
    for (double v : trace.voltage[k])
      if (v < *thr) return true;
  }
  return false;
}

/// Everything recorded over one episode; feeds envelope checks and trace CSVs.
struct EpisodeTrace {
  std::vector<double> t;
  std::vector<Vector> voltage;
  std::vector<Vector> load_frac;
  std::vector<Action> action;
  std::vector<double> reward;
};

struct EpisodeResult {
  double total_return = 0.0;
  double total_shed = 0.0;     // per-unit
  int steps = 0;
  bool penalized = false;
  bool envelope_pass = true;
};

/// Roll one episode with `controller(state, obs) -> Action`.
template <class Controller>
EpisodeResult run_episode(const GridModel& model, const Scenario& scenario, const RewardWeights& weights,
                          std::uint64_t seed, Controller&& controller, EpisodeTrace* trace = nullptr) {
  GridState state = reset(model, scenario, seed);
  GridState next = state;
  Observation obs = observe(state);
  VoltageTrace vt;
  vt.t.push_back(state.t);
  vt.voltage.push_back(state.voltage);
  if (trace) {
    trace->t.push_back(state.t);
    trace->voltage.push_back(state.voltage);
    trace->load_frac.push_back(state.load_frac);
    trace->action.push_back(Action(model.topology.n_load(), 0.0));
    trace->reward.push_back(0.0);
  }

  EpisodeResult res;
  const double t_pf = scenario.cont.clearing_time();
  for (;;) {
    Action a = controller(static_cast<const GridState&>(state), static_cast<const Observation&>(obs));
    auto r = step_into(state, a, model, scenario, weights, next);
    std::swap(state, next);
    obs = observe(state);
    res.total_return += r.reward;
    for (double p : state.shed_pu) res.total_shed += p;
    ++res.steps;
    vt.t.push_back(state.t);
    vt.voltage.push_back(state.voltage);
    if (trace) {
      trace->t.push_back(state.t);
      trace->voltage.push_back(state.voltage);
      trace->load_frac.push_back(state.load_frac);
      trace->action.push_back(std::move(a));
      trace->reward.push_back(r.reward);
    }
    if (r.done) {
      res.penalized = penalty_fires(state.voltage, state.t, t_pf);
      break;
    }
  }
  res.envelope_pass = !res.penalized && !envelope_violated(vt, t_pf);
  return res;
}

// ---------------------------------------------------------------------------
// Scenario sets

struct ContingencyGrid {
  std::vector<std::size_t> buses;
  std::vector<double> durations;
  double fault_start = 1.0;

  std::vector<Contingency> enumerate() const {
    std::vector<Contingency> out;
    for (double d : durations)
      for (auto b : buses) out.push_back({b, fault_start, d});
    return out;
  }
};

struct ScenarioSetConfig {
  std::vector<EnvironmentParams> train_envs;
  std::vector<EnvironmentParams> test_envs;
  ContingencyGrid train_contingencies;
  ContingencyGrid test_contingencies;
};

struct ScenarioSets {
  std::vector<Scenario> train;
  std::vector<Scenario> test;
};

inline std::vector<Scenario> cartesian(const std::vector<EnvironmentParams>& envs,
                                       const std::vector<Contingency>& conts) {
  std::vector<Scenario> out;
  out.reserve(envs.size() * conts.size());
  for (const auto& e : envs)
    for (const auto& c : conts) out.push_back({e, c});
  return out;
}

inline ScenarioSets build_scenario_sets(const ScenarioSetConfig& cfg, const GridTopology& topo) {
  auto check_grid = [&](const ContingencyGrid& g, const char* name) {
    if (g.buses.empty() || g.durations.empty())
      throw ConfigError(std::string(name) + ": contingency grid must list at least one bus and one duration");
    for (auto b : g.buses)
      if (b >= topo.n_bus) throw ConfigError(std::string(name) + ": fault bus " + std::to_string(b) + " out of range");
    for (double d : g.durations)
      if (!(d > 0.0)) throw ConfigError(std::string(name) + ": fault durations must be > 0");
    if (!(g.fault_start >= 0.0)) throw ConfigError(std::string(name) + ": fault_start must be >= 0");
  };
  check_grid(cfg.train_contingencies, "train_contingencies");
  check_grid(cfg.test_contingencies, "test_contingencies");
  if (cfg.train_envs.empty()) throw ConfigError("train_envs: at least one environment required");
  if (cfg.test_envs.empty()) throw ConfigError("test_envs: at least one environment required");

  std::set<std::string> ids;
  for (const auto* list : {&cfg.train_envs, &cfg.test_envs})
    for (const auto& e : *list) {
      e.validate();
      if (!ids.insert(e.id).second) throw ConfigError("environment id '" + e.id + "' is not unique");
    }

  auto train_c = cfg.train_contingencies.enumerate();
  auto test_c = cfg.test_contingencies.enumerate();
  for (const auto& a : train_c)
    for (const auto& b : test_c)
      if (a.fault_bus == b.fault_bus && std::abs(a.fault_duration - b.fault_duration) < kTimeEps)
        throw ConfigError("train and test contingency grids overlap at bus " + std::to_string(a.fault_bus) +
                          ", duration " + std::to_string(a.fault_duration));

  return {cartesian(cfg.train_envs, train_c), cartesian(cfg.test_envs, test_c)};
}

}  // namespace dmrl::grid
