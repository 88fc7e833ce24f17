#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dmrl {

using Vector = std::vector<double>;

/// Bad argument shape or value passed to an operation.
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Invalid configuration (topology, scenario grid, hyperparameters).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite numbers during environment propagation.
struct SimulationFault : std::runtime_error {
  SimulationFault(const std::string& scenario_id, const std::string& what)
      : std::runtime_error("simulation fault in scenario '" + scenario_id + "': " + what),
        scenario(scenario_id) {}
  std::string scenario;
};

/// Linear algebra failure (e.g. kernel matrix not positive definite).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed persisted artifact.
struct ParseError : std::runtime_error {
  ParseError(const std::string& section_name, const std::string& what)
      : std::runtime_error("parse error in section [" + section_name + "]: " + what),
        section(section_name) {}
  std::string section;
};

/// Persisted artifact written by an incompatible schema version.
struct MigrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// splitmix64 finalizer
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derive a child seed from a parent seed and a path of indices. Every random
/// stream in the library is addressed this way, never by worker identity.
template <class... Ix>
std::uint64_t derive_seed(std::uint64_t seed, Ix... path) {
  std::uint64_t s = mix64(seed);
  ((s = mix64(s ^ mix64(static_cast<std::uint64_t>(path) + 0x632be59bd9b4e019ULL))), ...);
  return s;
}

}  // namespace dmrl
