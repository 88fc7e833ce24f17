#pragma once

// CSV artifacts of a run directory. Every file starts with a header row and
// keeps a fixed column order; numbers use shortest round-trip formatting.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "dmrl/baseline.hpp"
#include "dmrl/bayesopt.hpp"
#include "dmrl/dmrl.hpp"
#include "dmrl/gridenv.hpp"
#include "dmrl/harness/checkpoint.hpp"

namespace dmrl::harness {

namespace fs = std::filesystem;

/// Run directory layout.
struct RunDir {
  fs::path root;

  fs::path resolved_config() const { return root / "resolved_config.json"; }
  fs::path checkpoints() const { return root / "checkpoints"; }
  fs::path latest_checkpoint() const { return checkpoints() / "latest.ckpt"; }
  fs::path checkpoint(int outer) const { return checkpoints() / ("outer_" + std::to_string(outer) + ".ckpt"); }
  fs::path history() const { return root / "history.csv"; }
  fs::path bo_traces() const { return root / "bo_traces"; }
  fs::path eval() const { return root / "eval"; }
  fs::path latents() const { return root / "latents"; }
  fs::path latent(const std::string& env) const { return latents() / (env + ".csv"); }
  fs::path comparison() const { return root / "comparison.csv"; }
  fs::path paired_differences() const { return root / "paired_differences.csv"; }
};

/// Scenario ids contain '/', which is not allowed in file names.
inline std::string file_stem(std::string id) {
  for (auto& ch : id)
    if (ch == '/') ch = '_';
  return id;
}

class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::vector<std::string>& header) : path_(path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot write '" + path.string() + "'");
    row(header);
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
    if (!out_) throw std::runtime_error("write failed for '" + path_.string() + "'");
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

inline std::string num(double x) { return format_double(x); }
inline std::string flag(bool b) { return b ? "1" : "0"; }

inline void write_history(const fs::path& path, const std::vector<meta::HistoryRow>& rows) {
  CsvWriter w(path, {"outer", "iteration", "mean_return", "alpha", "nu"});
  for (const auto& h : rows)
    w.row({std::to_string(h.outer), std::to_string(h.rec.iteration), num(h.rec.mean_return), num(h.rec.alpha),
           num(h.rec.nu)});
}

inline void write_bo_trace(const fs::path& path, const std::vector<bo::TraceRow>& rows, std::size_t dim) {
  std::vector<std::string> header{"round"};
  for (std::size_t k = 0; k < dim; ++k) header.push_back("c" + std::to_string(k));
  header.push_back("y");
  header.push_back("incumbent");
  CsvWriter w(path, header);
  for (const auto& r : rows) {
    std::vector<std::string> cells{std::to_string(r.round)};
    for (double x : r.c) cells.push_back(num(x));
    cells.push_back(num(r.y));
    cells.push_back(num(r.incumbent));
    w.row(cells);
  }
}

inline void write_metrics(const fs::path& path, const meta::Metrics& m) {
  CsvWriter w(path, {"scenario_id", "env_id", "return", "envelope_pass", "total_shed"});
  for (const auto& r : m.rows) w.row({r.scenario_id, r.env_id, num(r.ret), flag(r.envelope_pass), num(r.total_shed)});
}

inline void write_episode_trace(const fs::path& path, const grid::EpisodeTrace& t) {
  const std::size_t nb = t.voltage.empty() ? 0 : t.voltage.front().size();
  const std::size_t nl = t.load_frac.empty() ? 0 : t.load_frac.front().size();
  std::vector<std::string> header{"t"};
  for (std::size_t i = 0; i < nb; ++i) header.push_back("V" + std::to_string(i));
  for (std::size_t i = 0; i < nl; ++i) header.push_back("L" + std::to_string(i));
  for (std::size_t i = 0; i < nl; ++i) header.push_back("a" + std::to_string(i));
  header.push_back("reward");
  CsvWriter w(path, header);
  for (std::size_t k = 0; k < t.t.size(); ++k) {
    std::vector<std::string> cells{num(t.t[k])};
    for (double v : t.voltage[k]) cells.push_back(num(v));
    for (double v : t.load_frac[k]) cells.push_back(num(v));
    for (double v : t.action[k]) cells.push_back(num(v));
    cells.push_back(num(t.reward[k]));
    w.row(cells);
  }
}

inline void write_comparison(const fs::path& path, const std::vector<baseline::ComparisonRow>& rows) {
  CsvWriter w(path, {"scenario_id", "arm", "return", "envelope_pass", "total_shed", "wall_ms"});
  for (const auto& r : rows)
    w.row({r.scenario_id, r.arm, num(r.ret), flag(r.envelope_pass), num(r.total_shed), num(r.wall_ms)});
}

/// Adapted-minus-zero return per scenario, from a comparison report.
inline void write_paired_differences(const fs::path& path, const std::vector<baseline::ComparisonRow>& rows) {
  std::map<std::string, std::pair<double, double>> by_id;
  std::vector<std::string> order;
  for (const auto& r : rows) {
    if (!by_id.count(r.scenario_id)) order.push_back(r.scenario_id);
    auto& p = by_id[r.scenario_id];
    if (r.arm == "adapted") p.first = r.ret;
    if (r.arm == "zero_latent") p.second = r.ret;
  }
  CsvWriter w(path, {"scenario_id", "adapted_return", "zero_latent_return", "difference"});
  for (const auto& id : order) {
    const auto [a, z] = by_id[id];
    w.row({id, num(a), num(z), num(a - z)});
  }
}

/// Latent file: one header row, then `env_id,j,c0,c1,...`.
inline void write_latent(const fs::path& path, const std::string& env, const Vector& c, double j) {
  std::vector<std::string> header{"env_id", "j"};
  for (std::size_t k = 0; k < c.size(); ++k) header.push_back("c" + std::to_string(k));
  CsvWriter w(path, header);
  std::vector<std::string> cells{env, num(j)};
  for (double x : c) cells.push_back(num(x));
  w.row(cells);
}

struct LatentRecord {
  std::string env;
  double j = 0.0;
  Vector c;
};

inline LatentRecord read_latent(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("latent", "cannot open '" + path.string() + "'");
  std::string header;
  std::string line;
  if (!std::getline(in, header) || !std::getline(in, line)) throw ParseError("latent", "expected header and one row");
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ls(line);
  while (std::getline(ls, cell, ',')) cells.push_back(cell);
  if (cells.size() < 3) throw ParseError("latent", "row too short");
  detail::LineReader r("latent", {});
  LatentRecord rec{cells[0], r.real(cells[1]), {}};
  for (std::size_t k = 2; k < cells.size(); ++k) rec.c.push_back(r.real(cells[k]));
  return rec;
}

}  // namespace dmrl::harness
