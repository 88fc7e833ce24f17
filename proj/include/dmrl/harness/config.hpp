#pragma once

// Run configuration: JSON with explicit sections, strict key checking and
// field-path diagnostics. Every section is optional; omitted fields take the
// library defaults, and the resolved result serializes back in full.

#include <nlohmann/json.hpp>

#include <cctype>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "dmrl/bayesopt.hpp"
#include "dmrl/core.hpp"
#include "dmrl/dmrl.hpp"
#include "dmrl/gridenv.hpp"
#include "dmrl/mpc.hpp"
#include "dmrl/pars.hpp"
#include "dmrl/policy.hpp"

namespace dmrl::harness {

using json = nlohmann::json;

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seed parsing assumes a 64-bit size_t");

struct TopologyConfig {
  std::size_t n_bus = 10;
  std::vector<std::pair<std::size_t, std::size_t>> edges{{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 6},
                                                         {6, 7}, {7, 8}, {8, 9}, {1, 5}, {4, 8}};
  std::vector<std::size_t> load_buses{1, 3, 4, 6, 7, 9};
  std::vector<double> nominal_load{1.0, 0.8, 1.2, 0.9, 1.1, 1.0};
  double coupling_decay = 0.5;

  grid::GridTopology build() const { return grid::make_topology(n_bus, edges, load_buses, nominal_load, coupling_decay); }
};

struct PolicyConfig {
  std::size_t latent_dim = 2;
  std::vector<std::size_t> hidden_sizes{64, 64};
  policy::Cell cell = policy::Cell::recurrent;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  std::string output_dir = "runs/desk";
  TopologyConfig topology;
  grid::SurrogateParams surrogate;
  grid::RewardWeights reward;
  PolicyConfig policy;
  std::vector<grid::EnvironmentParams> train_envs;
  std::vector<grid::EnvironmentParams> test_envs;
  grid::ContingencyGrid train_contingencies;
  grid::ContingencyGrid test_contingencies;
  meta::MetaConfig meta;
  baseline::MpcConfig mpc;

  grid::GridModel model() const { return {topology.build(), surrogate}; }
  pars::Problem problem() const { return {model(), reward}; }

  policy::PolicySpec policy_spec() const {
    const auto topo = topology.build();
    return {topo.obs_dim(), policy.latent_dim, topo.n_load(), policy.hidden_sizes, policy.cell};
  }

  grid::ScenarioSets scenario_sets() const {
    grid::ScenarioSetConfig s{train_envs, test_envs, train_contingencies, test_contingencies};
    return grid::build_scenario_sets(s, topology.build());
  }

  const grid::EnvironmentParams& test_env(const std::string& id) const {
    for (const auto& e : test_envs)
      if (e.id == id) return e;
    throw ConfigError("no test environment with id '" + id + "'");
  }
};

namespace detail {

/// Reads one JSON object, remembering which keys were consumed so leftovers
/// can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    read(j_.at(key), path_ + "." + key, out);
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string path(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError(path_ + "." + k + ": unknown key");
  }

 private:
  static void read(const json& v, const std::string& p, double& out) {
    if (!v.is_number()) throw ConfigError(p + ": expected a number");
    out = v.get<double>();
  }
  static void read(const json& v, const std::string& p, int& out) {
    if (!v.is_number_integer()) throw ConfigError(p + ": expected an integer");
    out = v.get<int>();
  }
  static void read(const json& v, const std::string& p, std::size_t& out) {
    if (!(v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0)))
      throw ConfigError(p + ": expected a non-negative integer");
    out = v.get<std::size_t>();
  }
  static void read(const json& v, const std::string& p, bool& out) {
    if (!v.is_boolean()) throw ConfigError(p + ": expected a boolean");
    out = v.get<bool>();
  }
  static void read(const json& v, const std::string& p, std::string& out) {
    if (!v.is_string()) throw ConfigError(p + ": expected a string");
    out = v.get<std::string>();
  }
  template <class T>
  static void read(const json& v, const std::string& p, std::vector<T>& out) {
    if (!v.is_array()) throw ConfigError(p + ": expected an array");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      T x{};
      read(v[i], p + "[" + std::to_string(i) + "]", x);
      out.push_back(x);
    }
  }
  static void read(const json& v, const std::string& p, std::vector<std::pair<std::size_t, std::size_t>>& out) {
    if (!v.is_array()) throw ConfigError(p + ": expected an array of [a, b] pairs");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string q = p + "[" + std::to_string(i) + "]";
      if (!v[i].is_array() || v[i].size() != 2) throw ConfigError(q + ": expected [a, b]");
      std::size_t a = 0;
      std::size_t b = 0;
      read(v[i][0], q + "[0]", a);
      read(v[i][1], q + "[1]", b);
      out.emplace_back(a, b);
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline std::vector<grid::EnvironmentParams> read_envs(const json& v, const std::string& p) {
  if (!v.is_array()) throw ConfigError(p + ": expected an array of environments");
  std::vector<grid::EnvironmentParams> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string q = p + "[" + std::to_string(i) + "]";
    Section s(v[i], q);
    grid::EnvironmentParams e;
    s.get("id", e.id);
    s.get("pf_scale", e.pf_scale);
    s.get("motor_fraction", e.motor_fraction);
    s.get("t_stall", e.t_stall);
    s.get("v_stall", e.v_stall);
    s.finish();
    if (e.id.empty()) throw ConfigError(q + ".id: required");
    for (char ch : e.id)
      if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-'))
        throw ConfigError(q + ".id: only letters, digits, '_' and '-' are allowed");
    try {
      e.validate();
    } catch (const ConfigError& err) {
      throw ConfigError(q + ": " + err.what());
    }
    out.push_back(std::move(e));
  }
  return out;
}

inline grid::ContingencyGrid read_grid(const json& v, const std::string& p) {
  Section s(v, p);
  grid::ContingencyGrid g;
  s.get("buses", g.buses);
  s.get("durations", g.durations);
  s.get("fault_start", g.fault_start);
  s.finish();
  return g;
}

template <class Fn>
void with_path(const std::string& p, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    throw ConfigError(p + ": " + e.what());
  }
}

}  // namespace detail

/// Parse and validate. Throws ConfigError naming the offending field path.
inline RunConfig parse_config(const json& root) {
  using detail::Section;
  RunConfig cfg;
  Section top(root, "$");
  top.get("seed", cfg.seed);
  top.get("workers", cfg.workers);
  top.get("output_dir", cfg.output_dir);

  if (auto* v = top.child("topology")) {
    Section s(*v, top.path("topology"));
    auto& t = cfg.topology;
    s.get("n_bus", t.n_bus);
    s.get("edges", t.edges);
    s.get("load_buses", t.load_buses);
    s.get("nominal_load", t.nominal_load);
    s.get("coupling_decay", t.coupling_decay);
    s.finish();
  }
  if (auto* v = top.child("surrogate")) {
    Section s(*v, top.path("surrogate"));
    auto& g = cfg.surrogate;
    s.get("beta", g.beta);
    s.get("lambda", g.lambda);
    s.get("rho", g.rho);
    s.get("fault_depth", g.fault_depth);
    s.get("t_v", g.t_v);
    s.get("dt", g.dt);
    s.get("substeps", g.substeps);
    s.get("episode_length", g.episode_length);
    s.finish();
  }
  if (auto* v = top.child("reward")) {
    Section s(*v, top.path("reward"));
    s.get("c1", cfg.reward.c1);
    s.get("c2", cfg.reward.c2);
    s.get("c3", cfg.reward.c3);
    s.get("penalty", cfg.reward.penalty);
    s.finish();
  }
  if (auto* v = top.child("policy")) {
    Section s(*v, top.path("policy"));
    std::string cell = policy::to_string(cfg.policy.cell);
    s.get("latent_dim", cfg.policy.latent_dim);
    s.get("hidden_sizes", cfg.policy.hidden_sizes);
    s.get("cell", cell);
    s.finish();
    detail::with_path(top.path("policy") + ".cell", [&] { cfg.policy.cell = policy::cell_from_string(cell); });
  }
  if (auto* v = top.child("train_envs")) cfg.train_envs = detail::read_envs(*v, top.path("train_envs"));
  if (auto* v = top.child("test_envs")) cfg.test_envs = detail::read_envs(*v, top.path("test_envs"));
  if (auto* v = top.child("train_contingencies"))
    cfg.train_contingencies = detail::read_grid(*v, top.path("train_contingencies"));
  if (auto* v = top.child("test_contingencies"))
    cfg.test_contingencies = detail::read_grid(*v, top.path("test_contingencies"));
  if (auto* v = top.child("meta")) {
    Section s(*v, top.path("meta"));
    auto& m = cfg.meta;
    s.get("n_outer", m.n_outer);
    s.get("n_inner", m.n_inner);
    s.get("k_envs", m.k_envs);
    s.get("q_contingencies", m.q_contingencies);
    s.get("m_scenarios", m.m_scenarios);
    s.finish();
  }
  if (auto* v = top.child("pars")) {
    Section s(*v, top.path("pars"));
    auto& p = cfg.meta.pars;
    s.get("n_directions", p.n_directions);
    s.get("top_b", p.top_b);
    s.get("step_size", p.step_size);
    s.get("noise_std", p.noise_std);
    s.get("decay", p.decay);
    s.finish();
  }
  if (auto* v = top.child("bo")) {
    Section s(*v, top.path("bo"));
    auto& b = cfg.meta.bo;
    s.get("n_iterations", b.n_iterations);
    s.get("n_init", b.n_init);
    s.get("kappa", b.kappa);
    s.get("c_bound", b.c_bound);
    s.get("n_candidates", b.n_candidates);
    s.get("length_scale", b.length_scale);
    s.get("signal_var", b.signal_var);
    s.get("noise_var", b.noise_var);
    s.finish();
  }
  if (auto* v = top.child("mpc")) {
    Section s(*v, top.path("mpc"));
    s.get("horizon", cfg.mpc.horizon);
    s.get("action_grid", cfg.mpc.action_grid);
    s.get("uniform_across_buses", cfg.mpc.uniform_across_buses);
    s.get("max_sequences", cfg.mpc.max_sequences);
    s.finish();
  }
  top.finish();

  if (cfg.workers < 1) throw ConfigError("$.workers: must be >= 1");
  detail::with_path("$.topology", [&] { cfg.topology.build(); });
  detail::with_path("$.surrogate", [&] { cfg.surrogate.validate(); });
  detail::with_path("$.reward", [&] { cfg.reward.validate(); });
  detail::with_path("$.policy", [&] { cfg.policy_spec().validate(); });
  detail::with_path("$.mpc", [&] { cfg.mpc.validate(); });
  detail::with_path("$.meta", [&] { cfg.meta.validate(cfg.train_envs.size()); });
  cfg.scenario_sets();
  return cfg;
}

inline json env_json(const grid::EnvironmentParams& e) {
  return {{"id", e.id}, {"pf_scale", e.pf_scale}, {"motor_fraction", e.motor_fraction},
          {"t_stall", e.t_stall}, {"v_stall", e.v_stall}};
}

inline json grid_json(const grid::ContingencyGrid& g) {
  return {{"buses", g.buses}, {"durations", g.durations}, {"fault_start", g.fault_start}};
}

/// Full configuration with every default made explicit.
inline json to_json(const RunConfig& c) {
  json edges = json::array();
  for (auto [a, b] : c.topology.edges) edges.push_back({a, b});
  json train = json::array();
  for (const auto& e : c.train_envs) train.push_back(env_json(e));
  json test = json::array();
  for (const auto& e : c.test_envs) test.push_back(env_json(e));
  const auto& s = c.surrogate;
  const auto& m = c.meta;
  const auto& p = c.meta.pars;
  const auto& b = c.meta.bo;
  return {
      {"seed", c.seed},
      {"workers", c.workers},
      {"output_dir", c.output_dir},
      {"topology",
       {{"n_bus", c.topology.n_bus},
        {"edges", edges},
        {"load_buses", c.topology.load_buses},
        {"nominal_load", c.topology.nominal_load},
        {"coupling_decay", c.topology.coupling_decay}}},
      {"surrogate",
       {{"beta", s.beta},
        {"lambda", s.lambda},
        {"rho", s.rho},
        {"fault_depth", s.fault_depth},
        {"t_v", s.t_v},
        {"dt", s.dt},
        {"substeps", s.substeps},
        {"episode_length", s.episode_length}}},
      {"reward", {{"c1", c.reward.c1}, {"c2", c.reward.c2}, {"c3", c.reward.c3}, {"penalty", c.reward.penalty}}},
      {"policy",
       {{"latent_dim", c.policy.latent_dim},
        {"hidden_sizes", c.policy.hidden_sizes},
        {"cell", policy::to_string(c.policy.cell)}}},
      {"train_envs", train},
      {"test_envs", test},
      {"train_contingencies", grid_json(c.train_contingencies)},
      {"test_contingencies", grid_json(c.test_contingencies)},
      {"meta",
       {{"n_outer", m.n_outer},
        {"n_inner", m.n_inner},
        {"k_envs", m.k_envs},
        {"q_contingencies", m.q_contingencies},
        {"m_scenarios", m.m_scenarios}}},
      {"pars",
       {{"n_directions", p.n_directions},
        {"top_b", p.top_b},
        {"step_size", p.step_size},
        {"noise_std", p.noise_std},
        {"decay", p.decay}}},
      {"bo",
       {{"n_iterations", b.n_iterations},
        {"n_init", b.n_init},
        {"kappa", b.kappa},
        {"c_bound", b.c_bound},
        {"n_candidates", b.n_candidates},
        {"length_scale", b.length_scale},
        {"signal_var", b.signal_var},
        {"noise_var", b.noise_var}}},
      {"mpc",
       {{"horizon", c.mpc.horizon},
        {"action_grid", c.mpc.action_grid},
        {"uniform_across_buses", c.mpc.uniform_across_buses},
        {"max_sequences", c.mpc.max_sequences}}},
  };
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": malformed JSON: " + e.what());
  }
  return parse_config(root);
}

}  // namespace dmrl::harness
