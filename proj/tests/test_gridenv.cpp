#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "dmrl/gridenv.hpp"
#include "dmrl/mpc.hpp"
#include "oracles.hpp"

using namespace dmrl;
using namespace dmrl::grid;

namespace {

EnvironmentParams hard_env() { return {"trn150", 1.5, 0.44, 0.032, 0.45}; }

Scenario scenario(std::size_t bus = 3, double dur = 0.08) { return {hard_env(), {bus, 1.0, dur}}; }

}  // namespace

TEST(Reset, StartsAtEquilibrium) {
  GridModel m;
  auto s = reset(m, scenario(), 0);
  for (double v : s.voltage) EXPECT_EQ(v, 1.0);
  for (double l : s.load_frac) EXPECT_EQ(l, 1.0);
  for (double q : s.stalled) EXPECT_EQ(q, 0.0);
  EXPECT_EQ(s.t, 0.0);
}

TEST(Reset, Deterministic) {
  GridModel m;
  auto a = reset(m, scenario(), 5);
  auto b = reset(m, scenario(), 5);
  EXPECT_EQ(a.voltage, b.voltage);
  EXPECT_EQ(a.load_frac, b.load_frac);
}

TEST(Reset, RejectsOutOfRangeFaultBus) {
  GridModel m;
  EXPECT_THROW(reset(m, scenario(m.topology.n_bus), 0), ArgumentError);
}

TEST(Topology, CouplingInvariants) {
  auto t = default_topology();
  for (std::size_t i = 0; i < t.n_bus; ++i) {
    EXPECT_EQ(t.coupling[i][i], 1.0);
    for (std::size_t j = 0; j < t.n_bus; ++j) {
      EXPECT_EQ(t.coupling[i][j], t.coupling[j][i]);
      EXPECT_GE(t.coupling[i][j], 0.0);
      for (std::size_t k = 0; k < t.n_bus; ++k)
        if (t.hops[i][j] < t.hops[i][k]) EXPECT_GT(t.coupling[i][j], t.coupling[i][k]);
    }
  }
  EXPECT_EQ(t.obs_dim(), 16u);
}

TEST(Step, PreFaultZeroActionKeepsVoltageAndZeroReward) {
  GridModel m;
  auto sc = scenario();
  auto s = reset(m, sc, 0);
  Action zero(m.topology.n_load(), 0.0);
  for (int k = 0; k < 9; ++k) {  // fault starts at t = 1.0
    auto tr = step(s, zero, m, sc, RewardWeights{});
    for (double v : tr.state.voltage) EXPECT_EQ(v, 1.0);
    EXPECT_EQ(tr.reward, 0.0);
    EXPECT_FALSE(tr.done);
    s = tr.state;
  }
}

TEST(Reward, LateUndervoltageFiresPenalty) {
  RewardWeights w;
  const double t_pf = 1.08;
  Vector v(10, 1.0);
  v[4] = 0.90;
  Vector shed(6, 0.0);
  EXPECT_EQ(step_reward(v, t_pf + 4.1, t_pf, shed, 0, w), -10000.0);
  EXPECT_TRUE(penalty_fires(v, t_pf + 4.1, t_pf));
}

TEST(Reward, FirstBandHandEvaluation) {
  RewardWeights w;
  w.c1 = 1.0;
  const double t_pf = 1.05;
  Vector v(10, 1.0);
  v[2] = 0.60;
  Vector shed(6, 0.0);
  EXPECT_NEAR(step_reward(v, t_pf + 0.2, t_pf, shed, 0, w), -0.1, 1e-12);
}

TEST(Reward, MatchesScalarOracleOnRandomTuples) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> V(0.5, 1.1), T(0.0, 10.0), P(0.0, 0.3), W(0.0, 100.0);
  std::uniform_int_distribution<int> I(0, 6);
  for (int n = 0; n < 1000; ++n) {
    RewardWeights w{W(rng), W(rng), W(rng)};
    Vector v(10);
    for (auto& x : v) x = V(rng);
    Vector shed(6);
    for (auto& x : shed) x = P(rng);
    const double t = T(rng);
    const double t_pf = 1.0 + P(rng);
    const int inv = I(rng);
    EXPECT_NEAR(step_reward(v, t, t_pf, shed, inv, w), oracle::reward(v, t, t_pf, shed, inv, w), 1e-12);
  }
}

TEST(Step, RewardIsEvaluatedOnPostStepState) {
  GridModel m;
  auto sc = scenario();
  RewardWeights w;
  auto s = reset(m, sc, 0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> A(0.0, 0.2);
  for (int k = 0; k < 40; ++k) {
    Action a(6);
    for (auto& x : a) x = A(rng);
    auto tr = step(s, a, m, sc, w);
    EXPECT_NEAR(tr.reward,
                oracle::reward(tr.state.voltage, tr.state.t, sc.cont.clearing_time(), tr.state.shed_pu,
                               tr.state.invalid_count, w),
                1e-12);
    s = tr.state;
    if (tr.done) break;
  }
}

TEST(Step, InvalidShedOnDepletedBusIsCounted) {
  GridModel m;
  auto sc = scenario();
  auto s = reset(m, sc, 0);
  s.load_frac[0] = 0.04;
  Action a(6, 0.0);
  a[0] = 0.1;
  auto tr = step(s, a, m, sc, RewardWeights{});
  EXPECT_EQ(tr.state.invalid_count, 1);
  EXPECT_EQ(tr.state.load_frac[0], 0.04);
  EXPECT_EQ(tr.state.shed_pu[0], 0.0);
}

TEST(Step, RejectsActionOutsideRange) {
  GridModel m;
  auto sc = scenario();
  auto s = reset(m, sc, 0);
  Action a(6, 0.0);
  a[1] = 0.25;
  EXPECT_THROW(step(s, a, m, sc, RewardWeights{}), ArgumentError);
  EXPECT_THROW(step(s, Action(5, 0.0), m, sc, RewardWeights{}), ArgumentError);
}

TEST(Step, NanPropagationRaisesSimulationFault) {
  GridModel m;
  auto sc = scenario();
  auto s = reset(m, sc, 0);
  s.voltage[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    step(s, Action(6, 0.0), m, sc, RewardWeights{});
    FAIL() << "expected SimulationFault";
  } catch (const SimulationFault& f) {
    EXPECT_EQ(f.scenario, sc.id());
  }
}

TEST(Invariants, EquilibriumWithoutFault) {
  GridModel m;
  m.surrogate.fault_depth = 0.0;
  auto sc = scenario();
  auto r = run_episode(m, sc, RewardWeights{}, 0, [](const GridState&, const Observation&) { return Action(6, 0.0); });
  EXPECT_EQ(r.steps, 100);
  EXPECT_NEAR(r.total_return, 0.0, 1e-12);
  EpisodeTrace tr;
  run_episode(m, sc, RewardWeights{}, 0, [](const GridState&, const Observation&) { return Action(6, 0.0); }, &tr);
  for (const auto& row : tr.voltage)
    for (double v : row) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(Invariants, SheddingMonotonicity) {
  GridModel m;
  auto sc = scenario();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> A(0.0, 0.2);
  auto s = reset(m, sc, 0);
  for (int k = 0; k < 60; ++k) {
    Action lo(6), hi(6);
    for (std::size_t j = 0; j < 6; ++j) {
      lo[j] = A(rng) * 0.5;
      hi[j] = std::min(0.2, lo[j] + A(rng) * 0.5);
    }
    auto a = step(s, lo, m, sc, RewardWeights{});
    auto b = step(s, hi, m, sc, RewardWeights{});
    for (std::size_t i = 0; i < m.topology.n_bus; ++i) EXPECT_GE(b.state.voltage[i], a.state.voltage[i] - 1e-15);
    s = a.state;
    if (a.done) break;
  }
}

TEST(Invariants, StateStaysInDeclaredRanges) {
  GridModel m;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> A(0.0, 0.2);
  for (std::size_t bus = 0; bus < 10; ++bus) {
    auto sc = scenario(bus, 0.08);
    auto s = reset(m, sc, 0);
    for (;;) {
      Action a(6);
      for (auto& x : a) x = A(rng) * (rng() % 2);
      auto tr = step(s, a, m, sc, RewardWeights{});
      s = tr.state;
      for (double v : s.voltage) EXPECT_TRUE(v >= 0.0 && v <= 1.2);
      for (double l : s.load_frac) EXPECT_TRUE(l >= 0.0 && l <= 1.0);
      for (double q : s.stalled) EXPECT_TRUE(q >= 0.0 && q <= 1.0);
      for (double t : s.under_vstall_timer) EXPECT_GE(t, 0.0);
      if (tr.done) break;
    }
  }
}

TEST(Envelope, TaggedExamples) {
  const double t_pf = 1.08;
  VoltageTrace flat;
  for (int k = 0; k <= 100; ++k) {
    flat.t.push_back(k * 0.1);
    flat.voltage.push_back(Vector(10, 1.0));
  }
  EXPECT_FALSE(envelope_violated(flat, t_pf));

  VoltageTrace early{{t_pf + 0.2}, {Vector(10, 1.0)}};
  early.voltage[0][3] = 0.65;
  EXPECT_TRUE(envelope_violated(early, t_pf));

  VoltageTrace late{{t_pf + 5.0}, {Vector(10, 1.0)}};
  late.voltage[0][7] = 0.94;
  EXPECT_TRUE(envelope_violated(late, t_pf));

  EXPECT_THROW(envelope_violated(VoltageTrace{}, t_pf), ArgumentError);
}

TEST(Envelope, BandsAreClosedOnTheRight) {
  const double t_pf = 1.0;
  VoltageTrace at{{t_pf + 0.33}, {Vector(1, 0.75)}};
  EXPECT_FALSE(envelope_violated(at, t_pf));  // still the 0.7 band
  VoltageTrace after{{t_pf + 0.34}, {Vector(1, 0.75)}};
  EXPECT_TRUE(envelope_violated(after, t_pf));
  VoltageTrace at_clear{{t_pf}, {Vector(1, 0.1)}};
  EXPECT_FALSE(envelope_violated(at_clear, t_pf));
}

TEST(Envelope, AgreesWithBandOracleOnRandomTraces) {
  std::mt19937_64 rng(23);
  int violated = 0;
  for (int n = 0; n < 200; ++n) {
    const double t_pf = 1.0 + 0.01 * (rng() % 11);
    const auto tr = oracle::random_trace(rng, 4);
    const bool got = envelope_violated(VoltageTrace{tr.t, tr.voltage}, t_pf);
    EXPECT_EQ(got, oracle::envelope_violated(tr.t, tr.voltage, t_pf));
    violated += got;
  }
  EXPECT_GT(violated, 20);
  EXPECT_LT(violated, 180);
}

TEST(ScenarioSets, Cardinality) {
  ScenarioSetConfig cfg;
  cfg.train_envs = {{"a", 1.0}, {"b", 1.2}, {"c", 1.4}};
  cfg.test_envs = {{"w", 1.1}, {"x", 1.2}, {"y", 1.3}, {"z", 1.4}};
  cfg.train_contingencies = {{1, 4, 7}, {0.05, 0.08}};
  cfg.test_contingencies = {{0, 2, 4, 6, 8}, {0.1}};
  auto sets = build_scenario_sets(cfg, default_topology());
  EXPECT_EQ(sets.train.size(), 18u);
  EXPECT_EQ(sets.test.size(), 20u);
  for (const auto& a : sets.train)
    for (const auto& b : sets.test)
      EXPECT_FALSE(a.cont.fault_bus == b.cont.fault_bus && a.cont.fault_duration == b.cont.fault_duration);
}

TEST(ScenarioSets, Errors) {
  ScenarioSetConfig cfg;
  cfg.train_envs = {{"a", 1.0}};
  cfg.test_envs = {{"b", 1.1}};
  cfg.train_contingencies = {{1}, {0.05}};
  cfg.test_contingencies = {{}, {0.1}};
  EXPECT_THROW(build_scenario_sets(cfg, default_topology()), ConfigError);
  cfg.test_contingencies = {{1}, {0.05}};
  EXPECT_THROW(build_scenario_sets(cfg, default_topology()), ConfigError);
  cfg.test_contingencies = {{1}, {0.1}};
  cfg.test_envs = {{"a", 1.1}};
  EXPECT_THROW(build_scenario_sets(cfg, default_topology()), ConfigError);
}

TEST(Calibration, ZeroActionFailsOnHardestTrainEnvironment) {
  GridModel m;
  auto r = run_episode(m, scenario(), RewardWeights{}, 0,
                       [](const GridState&, const Observation&) { return Action(6, 0.0); });
  EXPECT_FALSE(r.envelope_pass);
  EXPECT_LE(r.total_return, -10000.0);
}
