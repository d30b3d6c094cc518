#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "dido/errors.hpp"
#include "dido/rng.hpp"
#include "dido/simkit.hpp"

namespace dido {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kMinFreqHz = 0.05;
constexpr double kMaxFreqHz = 0.4;
constexpr double kVerticalWeight = 0.4;
constexpr double kScanStep = 1e-3;
constexpr double kForwardYawMinSpeed = 1e-3;
}  // namespace

void TrajectorySpec::validate() const {
  if (!(duration > 0.0)) throw std::invalid_argument("TrajectorySpec: duration must be > 0");
  if (!origin.allFinite()) throw std::invalid_argument("TrajectorySpec: origin not finite");
  switch (kind) {
    case TrajectoryKind::Hover:
      break;
    case TrajectoryKind::Circle:
      if (!(radius > 0.0) || !(period > 0.0))
        throw std::invalid_argument("TrajectorySpec: circle needs radius, period > 0");
      break;
    case TrajectoryKind::Figure8:
      if (!(scale > 0.0) || !(period > 0.0))
        throw std::invalid_argument("TrajectorySpec: figure8 needs scale, period > 0");
      break;
    case TrajectoryKind::Vertical:
      if (!(amplitude > 0.0) || !(period > 0.0))
        throw std::invalid_argument("TrajectorySpec: vertical needs amplitude, period > 0");
      break;
    case TrajectoryKind::Random:
      if (sinusoids < 1 || !(max_speed > 0.0))
        throw std::invalid_argument("TrajectorySpec: random needs sinusoids >= 1, max_speed > 0");
      break;
  }
}

ReferenceTrajectory::ReferenceTrajectory(const TrajectorySpec& spec) : spec_(spec) {
  spec_.validate();
  if (spec_.kind != TrajectoryKind::Random) return;

  Rng rng(spec_.seed, "trajectory");
  for (int a = 0; a < 3; ++a) {
    const double weight = a == 2 ? kVerticalWeight : 1.0;
    for (int i = 0; i < spec_.sinusoids; ++i) {
      const double f = rng.uniform(kMinFreqHz, kMaxFreqHz);
      const double amp = weight * rng.uniform(0.5, 1.0);
      const double phase = rng.uniform(0.0, kTwoPi);
      axes_[a].push_back({amp, kTwoPi * f, phase});
    }
  }
  // Scale all amplitudes so the peak speed over the run equals max_speed.
  double vmax = 0.0;
  const auto steps = static_cast<long>(std::ceil(spec_.duration / kScanStep));
  for (long k = 0; k <= steps; ++k) {
    const double t = std::min(k * kScanStep, spec_.duration);
    Vec3 v = Vec3::Zero();
    for (int a = 0; a < 3; ++a)
      for (const auto& s : axes_[a]) v[a] += s.amplitude * s.omega * std::cos(s.omega * t + s.phase);
    vmax = std::max(vmax, v.norm());
  }
  const double k = spec_.max_speed / vmax;
  for (auto& axis : axes_)
    for (auto& s : axis) s.amplitude *= k;
}

ReferenceState ReferenceTrajectory::sample(double t) const {
  if (!(t >= 0.0) || t > spec_.duration + 1e-9) {
    throw RangeError("reference_trajectory: t outside [0, duration]");
  }
  ReferenceState r;
  r.p = spec_.origin;
  switch (spec_.kind) {
    case TrajectoryKind::Hover:
      break;
    case TrajectoryKind::Circle: {
      const double w = kTwoPi / spec_.period, R = spec_.radius;
      const double c = std::cos(w * t), s = std::sin(w * t);
      r.p += Vec3(R * c, R * s, 0.0);
      r.v = Vec3(-R * w * s, R * w * c, 0.0);
      r.a = Vec3(-R * w * w * c, -R * w * w * s, 0.0);
      break;
    }
    case TrajectoryKind::Figure8: {
      const double w = kTwoPi / spec_.period, S = spec_.scale;
      const double s1 = std::sin(w * t), c1 = std::cos(w * t);
      const double s2 = std::sin(2.0 * w * t), c2 = std::cos(2.0 * w * t);
      r.p += Vec3(S * s1, 0.5 * S * s2, 0.0);
      r.v = Vec3(S * w * c1, S * w * c2, 0.0);
      r.a = Vec3(-S * w * w * s1, -2.0 * S * w * w * s2, 0.0);
      break;
    }
    case TrajectoryKind::Vertical: {
      const double w = kTwoPi / spec_.period, A = spec_.amplitude;
      r.p.z() += A * std::sin(w * t);
      r.v.z() = A * w * std::cos(w * t);
      r.a.z() = -A * w * w * std::sin(w * t);
      break;
    }
    case TrajectoryKind::Random:
      for (int a = 0; a < 3; ++a) {
        for (const auto& s : axes_[a]) {
          const double ph = s.omega * t + s.phase;
          r.p[a] += s.amplitude * (std::sin(ph) - std::sin(s.phase));
          r.v[a] += s.amplitude * s.omega * std::cos(ph);
          r.a[a] -= s.amplitude * s.omega * s.omega * std::sin(ph);
        }
      }
      break;
  }
  r.yaw = spec_.yaw0;
  if (spec_.yaw_mode == YawMode::Forward) {
    const double speed_xy = std::hypot(r.v.x(), r.v.y());
    if (speed_xy > kForwardYawMinSpeed) r.yaw = std::atan2(r.v.y(), r.v.x());
  }
  return r;
}

ReferenceState reference_trajectory(const TrajectorySpec& spec, double t) {
  return ReferenceTrajectory(spec).sample(t);
}

}  // namespace dido
