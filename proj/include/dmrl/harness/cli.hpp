#pragma once

// Command-line front door: train, adapt, evaluate, baseline, validate-config.
// Exit codes: 0 success, 1 configuration or input error, 2 runtime fault.

#include <CLI11.hpp>

#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dmrl/baseline.hpp"
#include "dmrl/core.hpp"
#include "dmrl/dmrl.hpp"
#include "dmrl/harness/artifacts.hpp"
#include "dmrl/harness/checkpoint.hpp"
#include "dmrl/harness/config.hpp"

namespace dmrl::harness {

enum ExitCode : int { kOk = 0, kConfigError = 1, kRuntimeFault = 2 };

inline constexpr std::uint64_t kAdaptStream = 0xada9;
inline constexpr std::uint64_t kEvalStream = 0xe7a1;

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::string> out;
};

namespace detail {

struct Context {
  RunConfig cfg;
  RunDir dir;
  std::ostream& out;
};

inline Context open_context(const GlobalOptions& g, std::ostream& out) {
  RunConfig cfg = load_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (g.workers) {
    if (*g.workers < 1) throw ConfigError("--workers must be >= 1");
    cfg.workers = *g.workers;
  }
  if (g.out) cfg.output_dir = *g.out;
  RunDir dir{cfg.output_dir};
  return {std::move(cfg), std::move(dir), out};
}

inline void write_resolved(const Context& ctx) {
  fs::create_directories(ctx.dir.root);
  std::ofstream f(ctx.dir.resolved_config(), std::ios::binary | std::ios::trunc);
  f << to_json(ctx.cfg).dump(2) << '\n';
  if (!f) throw std::runtime_error("cannot write " + ctx.dir.resolved_config().string());
}

inline meta::Checkpoint open_checkpoint(const Context& ctx, const std::string& path) {
  auto cp = load_checkpoint(path.empty() ? ctx.dir.latest_checkpoint() : fs::path(path));
  if (!(cp.bundle.spec == ctx.cfg.policy_spec()))
    throw ConfigError("checkpoint policy shape does not match the configuration");
  return cp;
}

inline int cmd_train(const Context& ctx, bool resume, std::optional<int> stop_after) {
  const auto& cfg = ctx.cfg;
  const auto sets = cfg.scenario_sets();
  write_resolved(ctx);
  meta::Checkpoint state;
  if (resume && fs::exists(ctx.dir.latest_checkpoint())) {
    state = open_checkpoint(ctx, "");
    if (state.seed != cfg.seed) throw ConfigError("--resume: checkpoint seed differs from the configured seed");
    ctx.out << "resuming at outer iteration " << state.next_outer << '\n';
  } else {
    state = meta::initial_state(cfg.policy_spec(), cfg.train_envs, cfg.meta, cfg.seed);
  }

  std::vector<meta::BoTrace> traces;
  meta::MetaOptions opts;
  opts.workers = cfg.workers;
  opts.stop_after_outer = stop_after;
  opts.bo_traces = &traces;
  opts.on_checkpoint = [&](const meta::Checkpoint& cp) {
    save_checkpoint(ctx.dir.checkpoint(cp.next_outer - 1), cp);
    save_checkpoint(ctx.dir.latest_checkpoint(), cp);
    for (const auto& t : traces)
      write_bo_trace(ctx.dir.bo_traces() / ("train_outer" + std::to_string(t.outer) + "_" + t.env_id + ".csv"), t.rows,
                     cfg.policy.latent_dim);
    traces.clear();
    write_history(ctx.dir.history(), cp.history);
    const auto& last = cp.history.empty() ? meta::HistoryRow{} : cp.history.back();
    ctx.out << "outer " << cp.next_outer - 1 << ": mean return " << last.rec.mean_return << '\n';
  };
  meta::meta_train(state, cfg.train_envs, cfg.train_contingencies.enumerate(), cfg.problem(), cfg.meta, opts);
  write_history(ctx.dir.history(), state.history);
  ctx.out << "checkpoint: " << ctx.dir.latest_checkpoint().string() << '\n';
  return kOk;
}

inline meta::AdaptResult adapt_env(const Context& ctx, const meta::Checkpoint& cp, const std::string& env_id) {
  const auto& cfg = ctx.cfg;
  std::size_t idx = 0;
  while (idx < cfg.test_envs.size() && cfg.test_envs[idx].id != env_id) ++idx;
  const auto& env = cfg.test_env(env_id);
  auto res = meta::adapt(cp.bundle, env, cfg.test_contingencies.enumerate(), cfg.problem(), cfg.meta.bo,
                         derive_seed(cfg.seed, kAdaptStream, idx), cfg.workers);
  write_latent(ctx.dir.latent(env_id), env_id, res.c, res.j);
  write_bo_trace(ctx.dir.bo_traces() / ("adapt_" + env_id + ".csv"), res.bo.trace, cfg.policy.latent_dim);
  ctx.out << "adapted " << env_id << ": J* " << res.j << '\n';
  return res;
}

inline int cmd_adapt(const Context& ctx, const std::string& checkpoint, const std::string& env) {
  const auto cp = open_checkpoint(ctx, checkpoint);
  if (env == "all") {
    for (const auto& e : ctx.cfg.test_envs) adapt_env(ctx, cp, e.id);
  } else {
    adapt_env(ctx, cp, env);
  }
  return kOk;
}

inline int cmd_evaluate(const Context& ctx, const std::string& checkpoint, const std::string& latent_path, bool zero,
                        const std::string& env) {
  const auto& cfg = ctx.cfg;
  const auto cp = open_checkpoint(ctx, checkpoint);
  const auto sets = cfg.scenario_sets();
  Vector c(cfg.policy.latent_dim, 0.0);
  std::string env_filter = env;
  std::string tag = "zero";
  if (!zero) {
    const auto rec = read_latent(latent_path);
    if (rec.c.size() != cfg.policy.latent_dim) throw ConfigError("latent file dimension does not match the policy");
    if (!env_filter.empty() && env_filter != rec.env)
      throw ConfigError("--env '" + env_filter + "' differs from the latent file's environment '" + rec.env + "'");
    env_filter = rec.env;
    c = rec.c;
    tag = "latent";
  }
  std::vector<grid::Scenario> scenarios;
  for (const auto& s : sets.test)
    if (env_filter.empty() || s.env.id == env_filter) scenarios.push_back(s);
  if (scenarios.empty()) throw ConfigError("no test scenarios for environment '" + env_filter + "'");
  if (!env_filter.empty()) tag += "_" + env_filter;

  std::vector<grid::EpisodeTrace> traces;
  const auto m = meta::evaluate(cp.bundle, c, scenarios, cfg.problem(), derive_seed(cfg.seed, kEvalStream),
                                cfg.workers, &traces);
  write_metrics(ctx.dir.eval() / (tag + "_metrics.csv"), m);
  for (std::size_t k = 0; k < scenarios.size(); ++k)
    write_episode_trace(ctx.dir.eval() / "traces" / tag / (file_stem(scenarios[k].id()) + ".csv"), traces[k]);
  ctx.out << tag << ": mean return " << m.mean_return << ", pass rate " << m.pass_rate << ", mean shed "
          << m.mean_shed << '\n';
  return kOk;
}

inline int cmd_baseline(const Context& ctx, const std::string& checkpoint) {
  const auto& cfg = ctx.cfg;
  const auto cp = open_checkpoint(ctx, checkpoint);
  const auto sets = cfg.scenario_sets();
  pars::LatentMap latents;
  for (const auto& e : cfg.test_envs) {
    if (fs::exists(ctx.dir.latent(e.id))) {
      const auto rec = read_latent(ctx.dir.latent(e.id));
      if (rec.c.size() != cfg.policy.latent_dim) throw ConfigError("latent file for '" + e.id + "' has wrong dimension");
      latents[e.id] = rec.c;
    } else {
      latents[e.id] = adapt_env(ctx, cp, e.id).c;
    }
  }
  const auto rows = baseline::run_baselines(cp.bundle, latents, sets.test, cfg.problem(), cfg.mpc,
                                            derive_seed(cfg.seed, kEvalStream), cfg.workers);
  write_comparison(ctx.dir.comparison(), rows);
  write_paired_differences(ctx.dir.paired_differences(), rows);
  std::size_t wins = 0;
  for (std::size_t k = 0; k + 1 < rows.size(); k += 3) wins += rows[k].ret >= rows[k + 1].ret ? 1 : 0;
  ctx.out << "adapted >= zero-latent on " << wins << " of " << rows.size() / 3 << " scenarios\n";
  return kOk;
}

}  // namespace detail

/// Run the CLI in-process. `default_config` is used when --config is absent.
inline int run_cli(int argc, const char* const* argv, const std::string& default_config, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Latent-space meta-reinforcement learning for FIDVR load shedding", "dmrl_cli"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  g.config = default_config;
  std::uint64_t seed = 0;
  std::size_t workers = 0;
  std::string out_dir;
  app.add_option("--config", g.config, "Run configuration (JSON)");
  auto* seed_opt = app.add_option("--seed", seed, "Override the configured seed");
  auto* workers_opt = app.add_option("--workers", workers, "Override the worker count");
  auto* out_opt = app.add_option("--out", out_dir, "Override the run directory");

  bool resume = false;
  int stop_after = 0;
  auto* train = app.add_subcommand("train", "Meta-train; writes checkpoints and history");
  train->add_flag("--resume", resume, "Continue from checkpoints/latest.ckpt if present");
  auto* stop_opt = train->add_option("--stop-after", stop_after, "Stop after this many outer iterations")
                       ->check(CLI::PositiveNumber);

  std::string checkpoint;
  std::string env;
  auto* adapt = app.add_subcommand("adapt", "Latent search for a held-out environment");
  adapt->add_option("--checkpoint", checkpoint, "Checkpoint (default: run dir latest)");
  adapt->add_option("--env", env, "Test environment id, or 'all'")->required();

  std::string latent;
  bool zero = false;
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate the policy on test scenarios");
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint (default: run dir latest)");
  auto* latent_opt = evaluate->add_option("--latent", latent, "Latent file written by adapt");
  auto* zero_opt = evaluate->add_flag("--zero", zero, "Use the zero latent");
  latent_opt->excludes(zero_opt);
  evaluate->add_option("--env", env, "Restrict to one test environment");

  auto* base = app.add_subcommand("baseline", "Adapted vs zero-latent vs MPC comparison");
  base->add_option("--checkpoint", checkpoint, "Checkpoint (default: run dir latest)");

  auto* validate = app.add_subcommand("validate-config", "Check a configuration and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kConfigError;
  }
  if (*seed_opt) g.seed = seed;
  if (*workers_opt) g.workers = workers;
  if (*out_opt) g.out = out_dir;

  try {
    if (*validate) {
      const auto cfg = load_config(g.config);
      parse_config(to_json(cfg));
      out << g.config << ": ok\n";
      return kOk;
    }
    if (*evaluate && !zero && latent.empty()) throw ConfigError("evaluate: one of --latent or --zero is required");
    const auto ctx = detail::open_context(g, out);
    if (*train) return detail::cmd_train(ctx, resume, *stop_opt ? std::optional<int>(stop_after) : std::nullopt);
    if (*adapt) return detail::cmd_adapt(ctx, checkpoint, env);
    if (*evaluate) return detail::cmd_evaluate(ctx, checkpoint, latent, zero, env);
    if (*base) return detail::cmd_baseline(ctx, checkpoint);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ParseError& e) {
    err << e.what() << '\n';
    return kConfigError;
  } catch (const MigrationError& e) {
    err << "migration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    err << "runtime fault: " << e.what() << '\n';
    return kRuntimeFault;
  }
  return kOk;
}

}  // namespace dmrl::harness
