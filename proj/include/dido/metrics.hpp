#pragma once

#include <optional>
#include <vector>

#include "dido/geom.hpp"

namespace dido {

struct PoseSample {
  double t = 0.0;
  UnitQuaternion q;
  Vec3 p = Vec3::Zero();
};

/// Estimate and truth at identical timestamps.
struct TrajectoryPair {
  std::vector<double> t;
  std::vector<UnitQuaternion> q_true, q_est;
  std::vector<Vec3> p_true, p_est;
  std::size_t size() const { return t.size(); }
  /// Throws EmptyTrajectory for fewer than 2 samples, std::invalid_argument
  /// for ragged or non-increasing data.
  void validate() const;
};

/// Resamples truth at the estimate timestamps (linear in p, slerp in q).
/// Estimate samples outside the truth time span are dropped.
TrajectoryPair associate(const std::vector<PoseSample>& estimate,
                         const std::vector<PoseSample>& truth);

double ate(const TrajectoryPair& pair);  ///< m
double are(const TrajectoryPair& pair);  ///< rad
/// Relative errors over windows of dt; each i pairs with the first sample at
/// or after t_i + dt. Throws InsufficientData when no pair fits.
double rte(const TrajectoryPair& pair, double dt = 1.0 / 20.0);  ///< m
double rre(const TrajectoryPair& pair, double dt = 1.0 / 20.0);  ///< rad
/// Final position error over truth path length. Throws ZeroLength.
double td(const TrajectoryPair& pair);
/// Final rotation error per minute of flight, rad/min. Throws ZeroLength.
double rd(const TrajectoryPair& pair);
/// RMS force error, N. Throws EmptyTrajectory / std::invalid_argument.
double afe(const std::vector<Vec3>& f_true, const std::vector<Vec3>& f_est);

struct MetricSet {
  double ate = 0, are = 0, rte = 0, rre = 0, td = 0, rd = 0;
  std::optional<double> afe;
};

/// All pose metrics; td / rd are left at 0 when the truth is stationary.
MetricSet evaluate_metrics(const TrajectoryPair& pair, double dt = 1.0 / 20.0);

/// Per-sample position and rotation error norms, for plotting.
struct SampleError {
  double t, pos, rot;
};
std::vector<SampleError> per_sample_errors(const TrajectoryPair& pair);

}  // namespace dido
