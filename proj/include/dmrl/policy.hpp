#pragma once

// Latent-conditioned policy pi(s, c): running observation normalization, a
// stack of gated recurrent (or feedforward) layers, and a sigmoid output head
// scaled to the per-step shed limit. Forward passes only; training is
// derivative-free.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dmrl/core.hpp"
#include "dmrl/gridenv.hpp"

namespace dmrl::policy {

enum class Cell { recurrent, feedforward };

inline std::string to_string(Cell c) { return c == Cell::recurrent ? "recurrent" : "feedforward"; }
inline Cell cell_from_string(const std::string& s) {
  if (s == "recurrent") return Cell::recurrent;
  if (s == "feedforward") return Cell::feedforward;
  throw ConfigError("policy: unknown cell '" + s + "' (expected recurrent or feedforward)");
}

struct PolicySpec {
  std::size_t obs_dim = 0;
  std::size_t latent_dim = 2;
  std::size_t action_dim = 0;
  std::vector<std::size_t> hidden_sizes{64, 64};
  Cell cell = Cell::recurrent;

  void validate() const {
    if (obs_dim < 1 || latent_dim < 1 || action_dim < 1) throw ConfigError("policy: all dims must be >= 1");
    if (hidden_sizes.empty()) throw ConfigError("policy: hidden_sizes must not be empty");
    for (auto h : hidden_sizes)
      if (h < 1) throw ConfigError("policy: hidden sizes must be >= 1");
  }

  std::size_t input_dim() const { return obs_dim + latent_dim; }
  friend bool operator==(const PolicySpec&, const PolicySpec&) = default;
};

/// One named block of the flat parameter vector, stored column-major.
struct Slice {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
};

/// Layout of theta. Recurrent layers hold W (3h x in), U (3h x h) and b (3h)
/// with gate blocks ordered update, reset, candidate. Feedforward layers hold
/// W (h x in) and b (h). The output head holds W (a x h) and b (a).
inline std::vector<Slice> manifest(const PolicySpec& spec) {
  spec.validate();
  std::vector<Slice> out;
  std::size_t off = 0;
  auto add = [&](std::string name, std::size_t r, std::size_t c) {
    out.push_back({std::move(name), off, r, c});
    off += r * c;
  };
  std::size_t in = spec.input_dim();
  for (std::size_t l = 0; l < spec.hidden_sizes.size(); ++l) {
    const std::size_t h = spec.hidden_sizes[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    if (spec.cell == Cell::recurrent) {
      add(p + "W", 3 * h, in);
      add(p + "U", 3 * h, h);
      add(p + "b", 3 * h, 1);
    } else {
      add(p + "W", h, in);
      add(p + "b", h, 1);
    }
    in = h;
  }
  add("out.W", spec.action_dim, in);
  add("out.b", spec.action_dim, 1);
  return out;
}

inline std::size_t parameter_count(const PolicySpec& spec) {
  std::size_t n = 0;
  for (const auto& s : manifest(spec)) n += s.size();
  return n;
}

/// Flat parameter vector theta plus the manifest mapping slices to layers.
struct PolicyWeights {
  Vector theta;
  std::vector<Slice> slices;
};

/// Blocks of theta as dense matrices, in manifest order.
inline std::vector<Eigen::MatrixXd> unflatten(const PolicyWeights& w) {
  std::size_t total = 0;
  for (const auto& s : w.slices) total += s.size();
  if (total != w.theta.size()) throw ArgumentError("unflatten: theta length does not match manifest");
  std::vector<Eigen::MatrixXd> blocks;
  blocks.reserve(w.slices.size());
  for (const auto& s : w.slices) {
    blocks.emplace_back(Eigen::Map<const Eigen::MatrixXd>(w.theta.data() + s.offset,
                                                          static_cast<Eigen::Index>(s.rows),
                                                          static_cast<Eigen::Index>(s.cols)));
  }
  return blocks;
}

inline PolicyWeights flatten(const std::vector<Eigen::MatrixXd>& blocks, const PolicySpec& spec) {
  PolicyWeights w;
  w.slices = manifest(spec);
  if (blocks.size() != w.slices.size()) throw ArgumentError("flatten: block count does not match manifest");
  w.theta.assign(parameter_count(spec), 0.0);
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const auto& s = w.slices[k];
    if (static_cast<std::size_t>(blocks[k].rows()) != s.rows || static_cast<std::size_t>(blocks[k].cols()) != s.cols)
      throw ArgumentError("flatten: block '" + s.name + "' has the wrong shape");
    Eigen::Map<Eigen::MatrixXd>(w.theta.data() + s.offset, static_cast<Eigen::Index>(s.rows),
                                static_cast<Eigen::Index>(s.cols)) = blocks[k];
  }
  return w;
}

/// Weights i.i.d. uniform in [-0.05, 0.05].
inline PolicyWeights init_weights(const PolicySpec& spec, std::uint64_t seed) {
  PolicyWeights w;
  w.slices = manifest(spec);
  w.theta.resize(parameter_count(spec));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-0.05, 0.05);
  for (auto& x : w.theta) x = unif(rng);
  return w;
}

/// Streaming per-component mean and sum of squared deviations (Welford), with
/// the pairwise merge of Chan et al. for combining worker batches.
struct RunningNormalizer {
  double count = 0.0;
  Vector mean;
  Vector m2;

  RunningNormalizer() = default;
  explicit RunningNormalizer(std::size_t dim) : mean(dim, 0.0), m2(dim, 0.0) {}

  std::size_t dim() const { return mean.size(); }

  void update(std::span<const double> obs) {
    if (obs.size() != dim()) throw ArgumentError("normalizer: observation dimension mismatch");
    count += 1.0;
    for (std::size_t i = 0; i < dim(); ++i) {
      const double d = obs[i] - mean[i];
      mean[i] += d / count;
      m2[i] += d * (obs[i] - mean[i]);
    }
  }

  void merge(const RunningNormalizer& other) {
    if (other.count == 0.0) return;
    if (other.dim() != dim()) throw ArgumentError("normalizer: merge dimension mismatch");
    if (count == 0.0) {
      *this = other;
      return;
    }
    const double n = count + other.count;
    for (std::size_t i = 0; i < dim(); ++i) {
      const double d = other.mean[i] - mean[i];
      mean[i] += d * other.count / n;
      m2[i] += other.m2[i] + d * d * count * other.count / n;
    }
    count = n;
  }

  double stddev(std::size_t i) const { return count > 0.0 ? std::sqrt(m2[i] / count) : 0.0; }

  /// Divisor applied to component i; degenerate spreads normalize by 1.
  double divisor(std::size_t i) const {
    const double s = stddev(i);
    return s < 1e-8 ? 1.0 : s;
  }

  friend bool operator==(const RunningNormalizer&, const RunningNormalizer&) = default;
};

inline RunningNormalizer normalizer_update(RunningNormalizer norm, std::span<const double> obs) {
  norm.update(obs);
  return norm;
}

/// Per-layer recurrent carry; empty vectors for feedforward layers.
struct HiddenState {
  std::vector<Eigen::VectorXd> layers;
};

inline HiddenState zero_hidden(const PolicySpec& spec) {
  HiddenState h;
  for (auto n : spec.hidden_sizes)
    h.layers.push_back(spec.cell == Cell::recurrent ? Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))
                                                    : Eigen::VectorXd());
  return h;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Non-owning evaluator over a flat theta. Scratch buffers make `act` cheap
/// to call every control step; a view is not shared between threads.
class PolicyView {
 public:
  PolicyView(const PolicySpec& spec, std::span<const double> theta) : spec_(spec), theta_(theta) {
    slices_ = manifest(spec);
    if (theta.size() != parameter_count(spec))
      throw ArgumentError("policy: theta has " + std::to_string(theta.size()) + " entries, expected " +
                          std::to_string(parameter_count(spec)));
    input_.resize(static_cast<Eigen::Index>(spec.input_dim()));
  }

  const PolicySpec& spec() const { return spec_; }

  grid::Action act(const RunningNormalizer& norm, std::span<const double> obs, std::span<const double> latent,
                   HiddenState& hidden) {
    if (obs.size() != spec_.obs_dim)
      throw ArgumentError("policy: observation has " + std::to_string(obs.size()) + " entries, expected " +
                          std::to_string(spec_.obs_dim));
    if (latent.size() != spec_.latent_dim)
      throw ArgumentError("policy: latent has " + std::to_string(latent.size()) + " entries, expected " +
                          std::to_string(spec_.latent_dim));
    if (norm.dim() != spec_.obs_dim) throw ArgumentError("policy: normalizer dimension mismatch");
    if (hidden.layers.size() != spec_.hidden_sizes.size()) throw ArgumentError("policy: hidden state layer count");

    for (std::size_t i = 0; i < spec_.obs_dim; ++i)
      input_[static_cast<Eigen::Index>(i)] = (obs[i] - norm.mean[i]) / norm.divisor(i);
    for (std::size_t i = 0; i < spec_.latent_dim; ++i)
      input_[static_cast<Eigen::Index>(spec_.obs_dim + i)] = latent[i];

    std::size_t si = 0;
    Eigen::VectorXd x = input_;
    for (std::size_t l = 0; l < spec_.hidden_sizes.size(); ++l) {
      const auto h = static_cast<Eigen::Index>(spec_.hidden_sizes[l]);
      if (spec_.cell == Cell::recurrent) {
        auto W = block(si++);
        auto U = block(si++);
        auto b = block(si++);
        auto& hs = hidden.layers[l];
        if (hs.size() != h) throw ArgumentError("policy: hidden state size mismatch");
        gx_.noalias() = W * x;
        gx_ += b.col(0);
        gh_.noalias() = U * hs;
        Eigen::VectorXd next(h);
        for (Eigen::Index k = 0; k < h; ++k) {
          const double z = sigmoid(gx_[k] + gh_[k]);
          const double r = sigmoid(gx_[h + k] + gh_[h + k]);
          const double n = std::tanh(gx_[2 * h + k] + r * gh_[2 * h + k]);
          next[k] = (1.0 - z) * n + z * hs[k];
        }
        hs = next;
        x = std::move(next);
      } else {
        auto W = block(si++);
        auto b = block(si++);
        Eigen::VectorXd y = W * x + b.col(0);
        x = y.array().tanh().matrix();
      }
    }
    auto Wo = block(si++);
    auto bo = block(si++);
    Eigen::VectorXd z = Wo * x + bo.col(0);
    grid::Action a(spec_.action_dim);
    for (std::size_t i = 0; i < spec_.action_dim; ++i)
      a[i] = grid::kMaxShed * sigmoid(z[static_cast<Eigen::Index>(i)]);
    return a;
  }

 private:
  Eigen::Map<const Eigen::MatrixXd> block(std::size_t k) const {
    const auto& s = slices_[k];
    return {theta_.data() + s.offset, static_cast<Eigen::Index>(s.rows), static_cast<Eigen::Index>(s.cols)};
  }

  PolicySpec spec_;
  std::span<const double> theta_;
  std::vector<Slice> slices_;
  Eigen::VectorXd input_;
  Eigen::VectorXd gx_;
  Eigen::VectorXd gh_;
};

struct ForwardResult {
  grid::Action action;
  HiddenState hidden;
};

/// Pure forward pass: input is concat(normalize(obs), c); the latent is not
/// normalized. Every action component lies in (0, 0.2).
inline ForwardResult forward(const PolicyWeights& weights, const PolicySpec& spec, const RunningNormalizer& norm,
                             std::span<const double> obs, std::span<const double> latent, HiddenState hidden) {
  PolicyView view(spec, weights.theta);
  auto a = view.act(norm, obs, latent, hidden);
  return {std::move(a), std::move(hidden)};
}

/// Everything needed to act: shape, weights and observation statistics.
struct PolicyBundle {
  PolicySpec spec;
  Vector theta;
  RunningNormalizer normalizer;

  static PolicyBundle create(const PolicySpec& spec, std::uint64_t seed) {
    spec.validate();
    return {spec, init_weights(spec, seed).theta, RunningNormalizer(spec.obs_dim)};
  }

  PolicyWeights weights() const { return {theta, manifest(spec)}; }
};

}  // namespace dmrl::policy
