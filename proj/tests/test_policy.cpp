#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "dmrl/policy.hpp"

using namespace dmrl;
using namespace dmrl::policy;

namespace {

PolicySpec desk_spec(Cell cell = Cell::recurrent) { return {16, 2, 6, {64, 64}, cell}; }

Vector random_vec(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> N(0.0, scale);
  Vector v(n);
  for (auto& x : v) x = N(rng);
  return v;
}

}  // namespace

TEST(InitWeights, SameSeedIsBitwiseIdentical) {
  auto a = init_weights(desk_spec(), 9);
  auto b = init_weights(desk_spec(), 9);
  EXPECT_EQ(a.theta, b.theta);
  EXPECT_NE(a.theta, init_weights(desk_spec(), 10).theta);
  for (double x : a.theta) EXPECT_TRUE(x >= -0.05 && x <= 0.05);
}

TEST(InitWeights, LengthMatchesArchitecture) {
  // GRU layer: W (3h x in), U (3h x h), b (3h); head: W (a x h), b (a).
  const std::size_t in = 16 + 2;
  const std::size_t expected = (3 * 64 * in + 3 * 64 * 64 + 3 * 64) + (3 * 64 * 64 + 3 * 64 * 64 + 3 * 64) + (6 * 64 + 6);
  EXPECT_EQ(parameter_count(desk_spec()), expected);
  EXPECT_EQ(init_weights(desk_spec(), 1).theta.size(), expected);
  std::size_t sum = 0;
  for (const auto& s : manifest(desk_spec())) sum += s.size();
  EXPECT_EQ(sum, expected);
}

TEST(Spec, EmptyHiddenSizesRejected) {
  PolicySpec s = desk_spec();
  s.hidden_sizes.clear();
  EXPECT_THROW(init_weights(s, 1), ConfigError);
  EXPECT_THROW(cell_from_string("lstm"), ConfigError);
}

TEST(Forward, ZeroWeightsGiveMidpointAction) {
  for (auto cell : {Cell::recurrent, Cell::feedforward}) {
    auto spec = desk_spec(cell);
    PolicyWeights w{Vector(parameter_count(spec), 0.0), manifest(spec)};
    RunningNormalizer norm(16);
    auto r = forward(w, spec, norm, Vector(16, 0.7), Vector{0.3, -1.0}, zero_hidden(spec));
    for (double a : r.action) EXPECT_EQ(a, 0.1);
  }
}

TEST(Forward, Pure) {
  std::mt19937_64 rng(4);
  auto spec = desk_spec();
  auto w = init_weights(spec, 3);
  RunningNormalizer norm(16);
  auto obs = random_vec(rng, 16);
  auto h0 = zero_hidden(spec);
  auto a = forward(w, spec, norm, obs, Vector{0.5, 0.5}, h0);
  auto b = forward(w, spec, norm, obs, Vector{0.5, 0.5}, h0);
  EXPECT_EQ(a.action, b.action);
  for (std::size_t l = 0; l < a.hidden.layers.size(); ++l) EXPECT_EQ(a.hidden.layers[l], b.hidden.layers[l]);
}

TEST(Forward, DimensionMismatchIsArgumentError) {
  auto spec = desk_spec();
  auto w = init_weights(spec, 3);
  RunningNormalizer norm(16);
  EXPECT_THROW(forward(w, spec, norm, Vector(15, 0.0), Vector(2, 0.0), zero_hidden(spec)), ArgumentError);
  EXPECT_THROW(forward(w, spec, norm, Vector(16, 0.0), Vector(3, 0.0), zero_hidden(spec)), ArgumentError);
}

TEST(Forward, RecurrentWithZeroRecurrenceReducesToFeedforward) {
  // With U = 0 and the update gate pinned shut, h' = tanh(W_n x + b_n), which
  // is a tanh feedforward layer with weights W_n and bias b_n.
  std::mt19937_64 rng(5);
  auto rs = desk_spec(Cell::recurrent);
  auto fs = desk_spec(Cell::feedforward);
  auto rw = unflatten(init_weights(rs, 11));
  std::vector<Eigen::MatrixXd> fw;
  std::size_t k = 0;
  for (std::size_t l = 0; l < 2; ++l) {
    auto& W = rw[k];
    auto& U = rw[k + 1];
    auto& b = rw[k + 2];
    const Eigen::Index h = 64;
    U.setZero();
    b.block(0, 0, h, 1).setConstant(-1000.0);  // update gate z -> 0
    W.block(0, 0, h, W.cols()).setZero();
    fw.push_back(W.block(2 * h, 0, h, W.cols()));
    fw.push_back(b.block(2 * h, 0, h, 1));
    k += 3;
  }
  fw.push_back(rw[k]);
  fw.push_back(rw[k + 1]);
  auto rflat = flatten(rw, rs);
  auto fflat = flatten(fw, fs);
  RunningNormalizer norm(16);
  auto obs = random_vec(rng, 16);
  Vector c{0.4, -0.9};
  auto a = forward(rflat, rs, norm, obs, c, zero_hidden(rs));
  auto b = forward(fflat, fs, norm, obs, c, zero_hidden(fs));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(a.action[i], b.action[i], 1e-14);
}

TEST(Invariants, ActionRangeUnderLargeWeights) {
  std::mt19937_64 rng(6);
  auto spec = desk_spec();
  PolicyWeights w{random_vec(rng, parameter_count(spec), 3.0), manifest(spec)};
  RunningNormalizer norm(16);
  auto h = zero_hidden(spec);
  for (int t = 0; t < 50; ++t) {
    auto r = forward(w, spec, norm, random_vec(rng, 16, 5.0), random_vec(rng, 2, 2.0), h);
    for (double a : r.action) {
      EXPECT_GE(a, 0.0);
      EXPECT_LE(a, 0.2);
    }
    h = r.hidden;
  }
}

TEST(Invariants, FlattenUnflattenRoundTrip) {
  auto spec = desk_spec();
  auto w = init_weights(spec, 21);
  EXPECT_EQ(flatten(unflatten(w), spec).theta, w.theta);
}

TEST(Normalizer, TwoObservationsBatchFormula) {
  RunningNormalizer n(1);
  n.update(Vector{1.0});
  n.update(Vector{3.0});
  EXPECT_DOUBLE_EQ(n.mean[0], 2.0);
  EXPECT_DOUBLE_EQ(n.stddev(0), 1.0);
}

TEST(Normalizer, SingleObservationClampsDivisor) {
  auto n = normalizer_update(RunningNormalizer(3), Vector{0.5, -1.0, 2.0});
  EXPECT_EQ(n.mean, (Vector{0.5, -1.0, 2.0}));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(n.divisor(i), 1.0);
}

TEST(Normalizer, StreamingMatchesTwoPass) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> N(3.0, 2.5);
  RunningNormalizer n(2);
  std::vector<Vector> all;
  for (int i = 0; i < 10000; ++i) {
    Vector o{N(rng), N(rng) * 0.01};
    all.push_back(o);
    n.update(o);
  }
  for (std::size_t d = 0; d < 2; ++d) {
    double m = 0.0;
    for (const auto& o : all) m += o[d];
    m /= all.size();
    double v = 0.0;
    for (const auto& o : all) v += (o[d] - m) * (o[d] - m);
    v /= all.size();
    EXPECT_NEAR(n.mean[d], m, 1e-9);
    EXPECT_NEAR(n.stddev(d), std::sqrt(v), 1e-9);
  }
}

TEST(Normalizer, MergeOrderInsensitive) {
  std::mt19937_64 rng(9);
  std::vector<Vector> obs;
  for (int i = 0; i < 300; ++i) obs.push_back(random_vec(rng, 4, 2.0));
  RunningNormalizer seq(4);
  for (const auto& o : obs) seq.update(o);
  std::vector<RunningNormalizer> parts(3, RunningNormalizer(4));
  for (std::size_t i = 0; i < obs.size(); ++i) parts[i % 3].update(obs[i]);
  RunningNormalizer fwd(4), rev(4);
  for (int p = 0; p < 3; ++p) fwd.merge(parts[p]);
  for (int p = 2; p >= 0; --p) rev.merge(parts[p]);
  for (std::size_t d = 0; d < 4; ++d) {
    EXPECT_NEAR(fwd.mean[d], seq.mean[d], 1e-12);
    EXPECT_NEAR(rev.mean[d], seq.mean[d], 1e-12);
    EXPECT_NEAR(fwd.stddev(d), seq.stddev(d), 1e-9);
    EXPECT_NEAR(rev.stddev(d), seq.stddev(d), 1e-9);
  }
}

TEST(Forward, LatentIsNotNormalized) {
  // A normalizer with a huge spread on observations must not touch the latent:
  // changing the latent still changes the action.
  auto spec = desk_spec(Cell::feedforward);
  auto w = init_weights(spec, 2);
  for (auto& x : w.theta) x *= 20.0;
  RunningNormalizer norm(16);
  norm.update(Vector(16, -100.0));
  norm.update(Vector(16, 100.0));
  auto a = forward(w, spec, norm, Vector(16, 0.0), Vector{2.0, 2.0}, zero_hidden(spec));
  auto b = forward(w, spec, norm, Vector(16, 0.0), Vector{-2.0, -2.0}, zero_hidden(spec));
  double diff = 0.0;
  for (std::size_t i = 0; i < 6; ++i) diff = std::max(diff, std::abs(a.action[i] - b.action[i]));
  EXPECT_GT(diff, 1e-6);
}
