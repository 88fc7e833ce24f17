#pragma once

// Three-arm comparison on identical seeded scenarios: the policy with its
// adapted latent, the same policy at the zero latent, and receding-horizon MPC.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dmrl/core.hpp"
#include "dmrl/dmrl.hpp"
#include "dmrl/gridenv.hpp"
#include "dmrl/mpc.hpp"
#include "dmrl/parallel.hpp"
#include "dmrl/pars.hpp"
#include "dmrl/policy.hpp"

namespace dmrl::baseline {

inline constexpr const char* kArms[] = {"adapted", "zero_latent", "mpc"};

struct ComparisonRow {
  std::string scenario_id;
  std::string arm;
  double ret = 0.0;
  bool envelope_pass = false;
  double total_shed = 0.0;
  double wall_ms = 0.0;
};

/// Rows ordered by scenario, then arm in kArms order. `latents` maps each
/// test environment id to its adapted latent.
inline std::vector<ComparisonRow> run_baselines(const policy::PolicyBundle& bundle, const pars::LatentMap& latents,
                                                const std::vector<grid::Scenario>& scenarios,
                                                const pars::Problem& problem, const MpcConfig& mpc,
                                                std::uint64_t seed, std::size_t workers = 1) {
  mpc.validate();
  for (const auto& s : scenarios) {
    auto it = latents.find(s.env.id);
    if (it == latents.end()) throw ArgumentError("run_baselines: no adapted latent for environment '" + s.env.id + "'");
    if (it->second.size() != bundle.spec.latent_dim) throw ArgumentError("run_baselines: latent dimension mismatch");
  }
  const Vector zero(bundle.spec.latent_dim, 0.0);
  std::vector<ComparisonRow> rows(3 * scenarios.size());
  parallel_for(rows.size(), workers, [&](std::size_t idx) {
    const std::size_t k = idx / 3;
    const std::size_t arm = idx % 3;
    const auto& sc = scenarios[k];
    const std::uint64_t s = derive_seed(seed, k);
    const auto t0 = std::chrono::steady_clock::now();
    grid::EpisodeResult res;
    if (arm == 2) {
      res = grid::run_episode(problem.model, sc, problem.weights, s, [&](const grid::GridState& st, const grid::Observation&) {
        return mpc_control(st, problem.model, sc, problem.weights, mpc);
      });
    } else {
      const Vector& c = arm == 0 ? latents.at(sc.env.id) : zero;
      policy::PolicyView view(bundle.spec, bundle.theta);
      auto hidden = policy::zero_hidden(bundle.spec);
      res = grid::run_episode(problem.model, sc, problem.weights, s, [&](const grid::GridState&, const grid::Observation& obs) {
        return view.act(bundle.normalizer, obs, c, hidden);
      });
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    rows[idx] = {sc.id(), kArms[arm], res.total_return, res.envelope_pass, res.total_shed, ms};
  });
  return rows;
}

}  // namespace dmrl::baseline
