#pragma once

// Versioned plain-text checkpoint. Doubles are written in shortest
// round-trip form, so load(save(x)) reproduces every field bit for bit.

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "dmrl/core.hpp"
#include "dmrl/dmrl.hpp"
#include "dmrl/policy.hpp"

namespace dmrl::harness {

inline constexpr std::string_view kCheckpointMagic = "dmrl-checkpoint";

inline std::string format_double(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc{}) throw std::runtime_error("format_double: conversion failed");
  return {buf, end};
}

namespace detail {

class LineReader {
 public:
  LineReader(std::string section, std::vector<std::string> lines) : section_(std::move(section)), lines_(std::move(lines)) {}

  std::vector<std::string> tokens() {
    if (pos_ >= lines_.size()) fail("unexpected end of section");
    std::istringstream is(lines_[pos_++]);
    std::vector<std::string> out;
    for (std::string t; is >> t;) out.push_back(t);
    return out;
  }

  /// A line of the form `key v1 v2 ...`.
  std::vector<std::string> keyed(std::string_view key, std::size_t n_values) {
    auto t = tokens();
    if (t.empty() || t[0] != key) fail("expected '" + std::string(key) + "'");
    if (t.size() != n_values + 1) fail("'" + std::string(key) + "' expects " + std::to_string(n_values) + " values");
    t.erase(t.begin());
    return t;
  }

  double real(const std::string& s) {
    double x = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc{} || p != s.data() + s.size()) fail("bad number '" + s + "'");
    return x;
  }

  std::uint64_t count(const std::string& s) {
    std::uint64_t x = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc{} || p != s.data() + s.size()) fail("bad integer '" + s + "'");
    return x;
  }

  long integer(const std::string& s) {
    long x = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc{} || p != s.data() + s.size()) fail("bad integer '" + s + "'");
    return x;
  }

  Vector reals(std::string_view key, std::size_t n) {
    Vector out;
    for (const auto& s : keyed(key, n)) out.push_back(real(s));
    return out;
  }

  void done() const {
    if (pos_ != lines_.size()) fail("trailing content");
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(section_, what); }

 private:
  std::string section_;
  std::vector<std::string> lines_;
  std::size_t pos_ = 0;
};

inline void put_reals(std::ostream& os, std::string_view key, const Vector& v) {
  os << key;
  for (double x : v) os << ' ' << format_double(x);
  os << '\n';
}

}  // namespace detail

inline std::string serialize_checkpoint(const meta::Checkpoint& cp) {
  std::ostringstream os;
  const auto& spec = cp.bundle.spec;
  os << kCheckpointMagic << " v" << cp.version << '\n';

  os << "[spec]\n";
  os << "obs_dim " << spec.obs_dim << "\nlatent_dim " << spec.latent_dim << "\naction_dim " << spec.action_dim << '\n';
  os << "hidden_sizes " << spec.hidden_sizes.size();
  for (auto h : spec.hidden_sizes) os << ' ' << h;
  os << "\ncell " << policy::to_string(spec.cell) << '\n';

  os << "[theta]\nlength " << cp.bundle.theta.size() << '\n';
  for (double x : cp.bundle.theta) os << format_double(x) << '\n';

  const auto& n = cp.bundle.normalizer;
  os << "[normalizer]\ncount " << format_double(n.count) << '\n';
  detail::put_reals(os, "mean", n.mean);
  detail::put_reals(os, "m2", n.m2);

  os << "[latents]\nentries " << cp.table.size() << '\n';
  for (const auto& [id, e] : cp.table) {
    os << "env " << id << ' ' << e.bo_runs << ' ' << format_double(e.last_j);
    for (double x : e.c) os << ' ' << format_double(x);
    os << '\n';
  }

  os << "[schedule]\nalpha " << format_double(cp.schedule.alpha) << "\nnu " << format_double(cp.schedule.nu)
     << "\niteration " << cp.schedule.iteration << '\n';

  os << "[lineage]\nseed " << cp.seed << "\nnext_outer " << cp.next_outer << "\nenv_cursor " << cp.env_cursor << '\n';

  os << "[history]\nrows " << cp.history.size() << '\n';
  for (const auto& h : cp.history)
    os << h.outer << ' ' << h.rec.iteration << ' ' << format_double(h.rec.mean_return) << ' '
       << format_double(h.rec.alpha) << ' ' << format_double(h.rec.nu) << '\n';
  os << "[end]\n";
  return os.str();
}

inline meta::Checkpoint parse_checkpoint(const std::string& text) {
  std::istringstream in(text);
  std::string header;
  if (!std::getline(in, header)) throw ParseError("header", "empty file");
  const std::string prefix = std::string(kCheckpointMagic) + " v";
  if (header.rfind(prefix, 0) != 0) throw ParseError("header", "not a checkpoint file");
  int version = 0;
  {
    const std::string v = header.substr(prefix.size());
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), version);
    if (ec != std::errc{} || p != v.data() + v.size()) throw ParseError("header", "bad version tag '" + v + "'");
  }
  if (version != meta::Checkpoint::kSchemaVersion)
    throw MigrationError("checkpoint schema v" + std::to_string(version) + " cannot be read by this build (expects v" +
                         std::to_string(meta::Checkpoint::kSchemaVersion) + "); no migration path is defined");

  std::map<std::string, std::vector<std::string>> sections;
  std::vector<std::string> order;
  std::string current;
  for (std::string line; std::getline(in, line);) {
    if (line.size() > 2 && line.front() == '[' && line.back() == ']') {
      current = line.substr(1, line.size() - 2);
      if (sections.count(current)) throw ParseError(current, "duplicate section");
      sections[current];
      order.push_back(current);
    } else {
      if (current.empty()) throw ParseError("header", "content before the first section");
      sections[current].push_back(line);
    }
  }
  auto section = [&](const std::string& name) {
    auto it = sections.find(name);
    if (it == sections.end()) throw ParseError(name, "missing section (file truncated?)");
    return detail::LineReader(name, it->second);
  };

  meta::Checkpoint cp;
  cp.version = version;
  {
    auto r = section("spec");
    auto& s = cp.bundle.spec;
    s.obs_dim = r.count(r.keyed("obs_dim", 1)[0]);
    s.latent_dim = r.count(r.keyed("latent_dim", 1)[0]);
    s.action_dim = r.count(r.keyed("action_dim", 1)[0]);
    auto t = r.tokens();
    if (t.size() < 2 || t[0] != "hidden_sizes") r.fail("expected 'hidden_sizes'");
    const auto nh = r.count(t[1]);
    if (t.size() != nh + 2) r.fail("hidden_sizes count mismatch");
    s.hidden_sizes.clear();
    for (std::size_t i = 0; i < nh; ++i) s.hidden_sizes.push_back(r.count(t[i + 2]));
    try {
      s.cell = policy::cell_from_string(r.keyed("cell", 1)[0]);
      s.validate();
    } catch (const ConfigError& e) {
      r.fail(e.what());
    }
    r.done();
  }
  {
    auto r = section("theta");
    const auto n = r.count(r.keyed("length", 1)[0]);
    if (n != policy::parameter_count(cp.bundle.spec)) r.fail("length does not match the policy spec");
    cp.bundle.theta.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto t = r.tokens();
      if (t.size() != 1) r.fail("expected one value per line");
      cp.bundle.theta[i] = r.real(t[0]);
    }
    r.done();
  }
  {
    auto r = section("normalizer");
    const std::size_t d = cp.bundle.spec.obs_dim;
    auto& n = cp.bundle.normalizer;
    n.count = r.real(r.keyed("count", 1)[0]);
    n.mean = r.reals("mean", d);
    n.m2 = r.reals("m2", d);
    r.done();
  }
  {
    auto r = section("latents");
    const auto n = r.count(r.keyed("entries", 1)[0]);
    const std::size_t d = cp.bundle.spec.latent_dim;
    for (std::size_t i = 0; i < n; ++i) {
      auto t = r.tokens();
      if (t.size() != 4 + d || t[0] != "env") r.fail("malformed latent entry");
      meta::LatentEntry e;
      e.bo_runs = static_cast<int>(r.integer(t[2]));
      e.last_j = r.real(t[3]);
      for (std::size_t k = 0; k < d; ++k) e.c.push_back(r.real(t[4 + k]));
      cp.table[t[1]] = std::move(e);
    }
    r.done();
  }
  {
    auto r = section("schedule");
    cp.schedule.alpha = r.real(r.keyed("alpha", 1)[0]);
    cp.schedule.nu = r.real(r.keyed("nu", 1)[0]);
    cp.schedule.iteration = r.integer(r.keyed("iteration", 1)[0]);
    r.done();
  }
  {
    auto r = section("lineage");
    cp.seed = r.count(r.keyed("seed", 1)[0]);
    cp.next_outer = static_cast<int>(r.integer(r.keyed("next_outer", 1)[0]));
    cp.env_cursor = r.count(r.keyed("env_cursor", 1)[0]);
    r.done();
  }
  {
    auto r = section("history");
    const auto n = r.count(r.keyed("rows", 1)[0]);
    for (std::size_t i = 0; i < n; ++i) {
      auto t = r.tokens();
      if (t.size() != 5) r.fail("malformed history row");
      meta::HistoryRow h;
      h.outer = static_cast<int>(r.integer(t[0]));
      h.rec = {r.integer(t[1]), r.real(t[2]), r.real(t[3]), r.real(t[4])};
      cp.history.push_back(h);
    }
    r.done();
  }
  section("end").done();
  return cp;
}

/// Written to a temporary sibling and renamed, so a crash mid-write never
/// leaves a half-written checkpoint under the final name.
inline void save_checkpoint(const std::filesystem::path& path, const meta::Checkpoint& cp) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint '" + tmp + "'");
    out << serialize_checkpoint(cp);
    out.flush();
    if (!out) throw std::runtime_error("write failed for checkpoint '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline meta::Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("header", "cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace dmrl::harness
