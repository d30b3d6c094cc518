#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dido/config.hpp"
#include "dido/pipeline.hpp"

namespace dido {

/// Process exit codes shared by every command.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,     ///< bad arguments, config or IO
  kExitSimDiverged = 2,
  kExitFilterDiverged = 3,
};

struct CommandOptions {
  std::filesystem::path config;       ///< empty: built-in defaults
  std::filesystem::path out = ".";
  std::filesystem::path weights;      ///< base for relative weight paths
  std::optional<std::uint64_t> seed;  ///< overrides the config seed
  std::optional<std::size_t> runs;    ///< param-study / mc-consistency
};

/// Config resolution used by every command: file (or defaults), then the
/// seed / runs overrides, then validation.
RunConfig resolve_config(const CommandOptions& opt);

/// Writes imu.csv, rotor.csv, truth.csv and config.toml (frozen) into out.
int cmd_simulate(const CommandOptions& opt, std::ostream& log);

/// Filters the log in log_dir; writes estimate.csv, forces.csv,
/// summary.json and config.toml. Exit 3 on a non-finite state, with the
/// step index in the summary.
int cmd_estimate(const std::filesystem::path& log_dir, const CommandOptions& opt,
                 std::ostream& log);

/// Metrics of an estimate CSV against a truth CSV (or a log directory
/// holding truth.csv); writes metrics.json and errors.csv into out.
int cmd_evaluate(const std::filesystem::path& estimate_csv, const std::filesystem::path& truth,
                 const CommandOptions& opt, std::ostream& log);

/// Perturbed-initialisation runs over one log (log_dir, or simulated from
/// the config when empty); writes param_traces.csv and param_study.json.
int cmd_param_study(const std::filesystem::path& log_dir, const CommandOptions& opt,
                    std::ostream& log);

/// Writes nees.csv and mc_consistency.json.
int cmd_mc_consistency(const CommandOptions& opt, std::ostream& log);

/// Writes gradcheck.json; exit 0 only when every entry is below 1e-5.
int cmd_gradcheck(const CommandOptions& opt, std::ostream& log);

/// Runs body and maps library exceptions onto exit codes, reporting to err.
int run_guarded(const std::function<int()>& body, std::ostream& err);

/// Estimate CSV header: t, q_GI, p_GB, v_GB, tau, d, q_IB, t_IB.
const std::vector<std::string>& estimate_header();

}  // namespace dido
