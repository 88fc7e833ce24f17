#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dmrl/bayesopt.hpp"
#include "oracles.hpp"

using namespace dmrl;
using namespace dmrl::bo;

namespace {

GPDataset dataset(double noise = 1e-4) {
  BoConfig c;
  c.noise_var = noise;
  return GPDataset::for_config(c);
}

double neg_sq(const Vector& c, double x0 = 0.0, double x1 = 0.0) {
  return -((c[0] - x0) * (c[0] - x0) + (c[1] - x1) * (c[1] - x1));
}

}  // namespace

TEST(GP, EmptyDatasetReturnsPrior) {
  auto d = dataset();
  auto p = gp_posterior(d, Vector{0.3, -0.2});
  EXPECT_EQ(p.mean, 0.0);
  EXPECT_DOUBLE_EQ(p.std, 1.0);
}

TEST(GP, InterpolatesWithTinyNoise) {
  auto d = dataset(1e-10);
  d.add({0.0, 0.0}, 3.0);
  d.add({1.0, 0.5}, -1.0);
  d.add({-1.2, 0.9}, 0.5);
  Vector raw{3.0, -1.0, 0.5};
  for (std::size_t i = 0; i < 3; ++i) {
    auto p = gp_posterior(d, d.X[i]);
    EXPECT_NEAR(p.mean, raw[i], 1e-6);
    EXPECT_LT(p.std, 1e-3);
  }
}

TEST(GP, SymmetricObservationsGiveSymmetricMean) {
  auto d = dataset();
  d.add({0.5, 0.0}, 1.0);
  d.add({-0.5, 0.0}, 1.0);
  d.add({0.0, 0.0}, 2.0);
  auto a = gp_posterior(d, Vector{0.3, 0.7});
  auto b = gp_posterior(d, Vector{-0.3, 0.7});
  EXPECT_NEAR(a.mean, b.mean, 1e-12);
  EXPECT_NEAR(a.std, b.std, 1e-12);
}

TEST(GP, MatchesTextbookOracle) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  auto d = dataset();
  std::vector<oracle::Vec> X;
  oracle::Vec y;
  for (int i = 0; i < 12; ++i) {
    Vector x{U(rng), U(rng)};
    const double v = 50.0 * std::sin(x[0]) - 20.0 * x[1] * x[1] + 1000.0;
    d.add(x, v);
    X.push_back(x);
    y.push_back(v);
  }
  for (int k = 0; k < 20; ++k) {
    Vector x{U(rng), U(rng)};
    auto p = gp_posterior(d, x);
    auto [m, s] = oracle::gp_posterior(X, y, x, d.length_scale, d.signal_var, d.noise_var);
    EXPECT_NEAR(p.mean, m, 1e-6 * std::max(1.0, std::abs(m)));
    EXPECT_NEAR(p.std, s, 1e-6 * std::max(1.0, s));
  }
}

TEST(GP, StandardizationRoundTrip) {
  auto d = dataset();
  Vector raw{-12000.0, -340.5, 7.25, 0.0, 1e-3};
  for (std::size_t i = 0; i < raw.size(); ++i) d.add({double(i), 0.0}, raw[i]);
  auto back = d.raw_y();
  for (std::size_t i = 0; i < raw.size(); ++i) EXPECT_NEAR(back[i], raw[i], 1e-12 * std::max(1.0, std::abs(raw[i])));
}

TEST(GP, NewObservationNeverRaisesStdAtThatPoint) {
  // Conditioning on more data shrinks the standardized posterior variance.
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  auto d = dataset();
  for (int i = 0; i < 6; ++i) d.add({U(rng), U(rng)}, 0.0 + i);
  for (int k = 0; k < 10; ++k) {
    Vector x{U(rng), U(rng)};
    const double before = gp_posterior(d, x).std / d.y_std;
    auto e = d;
    e.add({U(rng), U(rng)}, 2.5);
    const double after = gp_posterior(e, x).std / e.y_std;
    EXPECT_LE(after, before + 1e-12);
  }
}

TEST(Ucb, Examples) {
  EXPECT_EQ(ucb(1.0, 0.5, 2.0), 2.0);
  EXPECT_EQ(ucb(-3.0, 0.0, 2.0), -3.0);
  EXPECT_EQ(ucb(0.2, 4.0, 0.0), 0.2);
}

TEST(Suggest, EmptyDatasetGivesZero) {
  BoConfig c;
  EXPECT_EQ(suggest(dataset(), c, 3, 1), Vector(3, 0.0));
  Vector anchor{0.5, -1.0, 0.25};
  EXPECT_EQ(suggest(dataset(), c, 3, 1, &anchor), anchor);
}

TEST(Suggest, InitialDesignStaysInBox) {
  for (std::size_t k = 1; k < 50; ++k) {
    auto x = initial_design_point(k, 4, 2.0, Vector(4, 0.0));
    for (double v : x) {
      EXPECT_GE(v, -2.0);
      EXPECT_LE(v, 2.0);
    }
  }
}

TEST(Suggest, PureExploitationNearOptimum) {
  BoConfig c;
  c.kappa = 0.0;
  auto d = GPDataset::for_config(c);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  for (int i = 0; i < 25; ++i) {
    Vector x{U(rng), U(rng)};
    d.add(x, neg_sq(x));
  }
  d.add({0.05, -0.05}, neg_sq({0.05, -0.05}));
  auto s = suggest(d, c, 2, 9);
  EXPECT_LT(std::hypot(s[0], s[1]), 0.3);
}

TEST(Suggest, DeterministicAndFeasible) {
  BoConfig c;
  auto d = dataset();
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  for (int i = 0; i < 8; ++i) {
    Vector x{U(rng), U(rng)};
    d.add(x, neg_sq(x, 1.0, 1.0));
  }
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto a = suggest(d, c, 2, seed);
    EXPECT_EQ(a, suggest(d, c, 2, seed));
    for (double v : a) {
      EXPECT_GE(v, -c.c_bound);
      EXPECT_LE(v, c.c_bound);
    }
  }
}

TEST(Maximize, FindsSyntheticOptimum) {
  BoConfig c;
  auto r = maximize([](const Vector& x) { return neg_sq(x, 0.7, -0.4); }, 2, c, 11);
  EXPECT_LT(std::hypot(r.c_best[0] - 0.7, r.c_best[1] + 0.4), 0.1);
  EXPECT_EQ(r.trace.size(), 32u);
}

TEST(Maximize, ConstantObjectiveTerminates) {
  BoConfig c;
  c.n_iterations = 12;
  auto r = maximize([](const Vector&) { return -5.0; }, 2, c, 2);
  EXPECT_EQ(r.trace.size(), 12u);
  EXPECT_EQ(r.j_best, -5.0);
  for (const auto& row : r.trace)
    for (double v : row.c) {
      EXPECT_TRUE(std::isfinite(v));
      EXPECT_LE(std::abs(v), c.c_bound);
    }
}

TEST(Maximize, SingleRoundReturnsZero) {
  BoConfig c;
  c.n_iterations = 1;
  c.n_init = 1;
  auto r = maximize([](const Vector& x) { return neg_sq(x, 1.0, 1.0); }, 2, c, 3);
  EXPECT_EQ(r.c_best, Vector(2, 0.0));
}

TEST(Maximize, IncumbentNonDecreasing) {
  BoConfig c;
  c.n_iterations = 20;
  auto r = maximize([](const Vector& x) { return std::sin(3 * x[0]) * std::cos(2 * x[1]); }, 2, c, 4);
  for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_GE(r.trace[i].incumbent, r.trace[i - 1].incumbent);
}

TEST(Maximize, FaultScoresWorstObserved) {
  BoConfig c;
  c.n_iterations = 6;
  int calls = 0;
  auto r = maximize(
      [&](const Vector& x) {
        if (++calls == 3) throw SimulationFault("s", "boom");
        return neg_sq(x);
      },
      2, c, 5);
  EXPECT_EQ(r.faults, 1);
  double worst = std::min(r.trace[0].y, r.trace[1].y);
  EXPECT_EQ(r.trace[2].y, worst);
  EXPECT_THROW(maximize([](const Vector&) -> double { throw SimulationFault("s", "first"); }, 2, c, 5), SimulationFault);
}

TEST(Config, Validation) {
  BoConfig c;
  c.n_iterations = 2;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.c_bound = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}
