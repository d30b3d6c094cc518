#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "dido/dynamics.hpp"
#include "dido/ekf.hpp"
#include "dido/providers.hpp"
#include "dido/simkit.hpp"

namespace dido {

// ---------------------------------------------------------------------------
// TOML subset: [section] / [section.sub] headers, key = value lines, # comments.
// Values: numbers, true/false, "strings", flat arrays of numbers or strings.

using ConfigValue = std::variant<double, bool, std::string, std::vector<double>,
                                 std::vector<std::string>>;

/// Flat map from dotted key ("filter.init.tau") to value. Throws ConfigError
/// with the line number on bad syntax or duplicate keys.
struct ConfigDocument {
  std::map<std::string, ConfigValue> values;
  static ConfigDocument parse(const std::string& text);
};

// ---------------------------------------------------------------------------

struct SimConfig {
  TrajectorySpec trajectory;
  SimOptions options;
  ResidualModel residual;
};

/// Initial-value perturbations for param-study (relative for tau and d,
/// absolute for the extrinsics; uniform in [-x, x]).
struct StudyConfig {
  std::size_t runs = 6;
  double perturb_tau = 0.2;
  double perturb_d = 0.2;
  double perturb_q_IB = 0.0;  ///< rad, per axis
  double perturb_t_IB = 0.0;  ///< m, per axis
  std::size_t trace_every = 20;  ///< IMU samples between trace rows
  std::size_t threads = 0;    ///< 0: hardware concurrency
};

struct McConfig {
  std::size_t runs = 50;
  std::size_t threads = 0;
};

/// Everything one experiment needs; every random stream derives from seed.
struct RunConfig {
  std::uint64_t seed = 1;
  SimConfig sim;
  NoiseSpec noise;
  DynParams params;
  FilterConfig filter;
  ProviderConfig providers;
  StudyConfig study;
  McConfig mc;

  /// Checks every section; throws ConfigError.
  void validate() const;
};

/// Applies a document over the defaults. Unknown keys and type mismatches
/// throw ConfigError. Relative weight paths resolve against base_dir.
RunConfig config_from_document(const ConfigDocument& doc,
                               const std::filesystem::path& base_dir = {});
/// Weight paths resolve against weights_dir when given, else the file's directory.
RunConfig load_config(const std::filesystem::path& path,
                      const std::filesystem::path& weights_dir = {});
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});

/// Every key with its resolved value; parse_config(to_toml(c)) reproduces c.
std::string to_toml(const RunConfig& c);

/// Mass, filter mass and the oracle lever arm follow params; call after edits.
void sync_derived(RunConfig& c);

TrajectoryKind parse_trajectory_kind(const std::string& s);
std::string to_string(TrajectoryKind k);

}  // namespace dido
