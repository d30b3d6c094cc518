#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "dido/ekf.hpp"
#include "dido/providers.hpp"
#include "dido/simkit.hpp"

namespace dido {

/// Filter state after the measurement updates at one IMU sample.
struct StepRecord {
  double t = 0.0;
  UnitQuaternion q_GI;
  Vec3 p_GB = Vec3::Zero(), v_GB = Vec3::Zero();
  double tau = 0.0;
  Vec3 d = Vec3::Zero();
  UnitQuaternion q_IB;
  Vec3 t_IB = Vec3::Zero();
  Vec16 P_diag = Vec16::Zero();
  Mat6 P_pv = Mat6::Zero();  ///< covariance of [dp; dv]
  Vec3 P_rot_diag = Vec3::Zero();
  Vec3 f_res = Vec3::Zero();  ///< provider residual force in use
};

/// Replaces parts of the default initialisation (truth at t0 for q, p, v and
/// the filter init block for everything else).
struct InitialOverride {
  std::optional<RotStageState> rot;
  std::optional<TransStageState> trans;
};

struct RunCounters {
  std::size_t gravity_updates = 0, gravity_skipped = 0, gravity_rejected = 0;
  std::size_t accel_updates = 0, accel_rejected = 0;
  std::size_t vp_updates = 0, vp_rejected = 0, anchors = 0;
};

struct RunResult {
  std::vector<StepRecord> steps;
  RotStageState rot;
  TransStageState trans;
  RunCounters counters;
};

/// Two-stage filter over a whole log. Per IMU sample: bias / residual
/// providers, gravity update, accelerometer update, V-P update at the end of
/// each integration window, then rotation and translation prediction to the
/// next sample with zero-order-held rotor speeds.
/// Throws NonFiniteState with the step index when the state stops being finite.
RunResult run_two_stage(const FlightLog& log, const ProviderConfig& providers,
                        const FilterConfig& filter, std::uint64_t seed,
                        const InitialOverride& init = {});

/// Level alignment from one accelerometer sample: the smallest rotation
/// taking the measured up direction onto world z (horizontal axis).
UnitQuaternion align_to_gravity(const Vec3& accel);

}  // namespace dido
