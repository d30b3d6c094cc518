#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "dido/config.hpp"
#include "dido/metrics.hpp"
#include "dido/pipeline.hpp"

namespace dido {

/// Simulated log for a config; noise streams come from c.seed, the random
/// trajectory shape from sim.trajectory_seed.
FlightLog simulate(const RunConfig& c);

/// Two-stage filter over a log with the configured providers.
RunResult estimate(const FlightLog& log, const RunConfig& c, const InitialOverride& init = {});

/// Poses are (q_GI, p_GB): the IMU attitude is what the rotation stage
/// estimates, and the truth extrinsics are not part of a stored log.
TrajectoryPair pose_pair(const FlightLog& log, const RunResult& run);
std::vector<PoseSample> estimate_poses(const RunResult& run);
std::vector<PoseSample> truth_poses(const FlightLog& log);

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0: hardware
/// concurrency). The first exception, by index, is rethrown after all
/// workers stop.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

// ---------------------------------------------------------------------------
// Parameter study

struct ParamRun {
  std::size_t index = 0;
  FilterInit init;                ///< perturbed initial values
  std::vector<StepRecord> trace;  ///< every study.trace_every-th step, plus the last
  TransStageState final;
};

struct ParamStudyResult {
  DynParams truth;
  std::vector<ParamRun> runs;
};

/// Initial values for run i: tau and d scaled by (1 +- perturb) with a random
/// sign per component, extrinsics offset uniformly within +-perturb.
FilterInit perturbed_init(const RunConfig& c, std::size_t run);

/// study.runs filters over the same log, each from perturbed_init.
ParamStudyResult param_study(const RunConfig& c, const FlightLog& log);

// ---------------------------------------------------------------------------
// Monte-Carlo consistency

struct McResult {
  std::size_t runs = 0;
  std::size_t dof = 6;
  std::vector<double> t;           ///< evaluation times
  std::vector<double> mean_nees;   ///< per evaluation time, averaged over runs
  std::vector<std::vector<double>> nees;  ///< [run][time]
  double time_average = 0.0;       ///< mean of mean_nees
  double band_lo = 0.0, band_hi = 0.0;  ///< two-sided 95% band for the run mean
  double fraction_in_band = 0.0;   ///< of evaluation times
};

/// NEES of [dp, dv] against the filter's covariance at one step.
double nees_pv(const StepRecord& est, const TruthSample& truth);

/// Filter initial state drawn from the configured initial covariance around
/// the true parameters and the first truth sample (stream "mc.init").
InitialOverride sampled_initial_state(const RunConfig& c, const TruthSample& t0);

/// mc.runs independent simulations (seed substreams "mc.run.<i>") filtered
/// with the configured providers, each from sampled_initial_state; NEES
/// sampled every eval_every seconds after settle.
McResult mc_consistency(const RunConfig& c, double eval_every = 0.5, double settle = 1.0);

/// Chi-square quantile (Wilson-Hilferty, any dof > 0).
double chi2_quantile_wh(double dof, double p);

}  // namespace dido
