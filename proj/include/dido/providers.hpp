#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>

#include "dido/dynamics.hpp"
#include "dido/geom.hpp"
#include "dido/nn.hpp"
#include "dido/rng.hpp"
#include "dido/simkit.hpp"

namespace dido {

enum class ProviderMode { Oracle, Neural, Null };

ProviderMode parse_provider_mode(const std::string& s);
std::string to_string(ProviderMode m);

/// Smallest variance a provider will emit.
inline constexpr double kMinVariance = 1e-10;

struct BiasEstimate {
  Vec3 b_gyro = Vec3::Zero();
  Vec3 b_accel = Vec3::Zero();
  double t = 0.0;
};

/// Absolute velocity / position of the IMU point, formed from a sequence-
/// relative estimate plus the anchor.
struct VpObservation {
  Vec3 v_GI = Vec3::Zero();
  Vec3 p_GI = Vec3::Zero();
  Vec3 sigma2_v = Vec3::Ones();
  Vec3 sigma2_p = Vec3::Ones();
  double anchor_t = 0.0;
  double t = 0.0;
};

/// What a V-P provider emits: displacement and velocity change since the
/// start of the current sequence.
struct VpRelative {
  Vec3 dv = Vec3::Zero();
  Vec3 dp = Vec3::Zero();
  Vec3 sigma2_v = Vec3::Ones();
  Vec3 sigma2_p = Vec3::Ones();
  double anchor_t = 0.0;
  double t = 0.0;
};

struct DebiasConfig {
  ProviderMode mode = ProviderMode::Oracle;
  double sigma_gyro = 0.0;   ///< oracle corruption std, rad/s
  double sigma_accel = 0.0;  ///< oracle corruption std, m/s^2
  std::filesystem::path weights_gyro, weights_accel;
  std::size_t window = 20;
  std::size_t stride = 20;
};

struct ResidualConfig {
  ProviderMode mode = ProviderMode::Oracle;
  double sigma = 0.0;       ///< oracle corruption std, N
  double null_sigma = 1e-3; ///< std reported in null mode, N
  std::filesystem::path weights;
  double cov_scale = 1.0;
  std::size_t window = 20;
  std::size_t stride = 1;
};

struct VpConfig {
  ProviderMode mode = ProviderMode::Oracle;
  double sigma_v = 0.02;  ///< oracle corruption std, m/s
  double sigma_p = 0.02;  ///< oracle corruption std, m
  std::array<std::filesystem::path, 3> vnet, pnet;  ///< per axis
  double cov_scale = 1.0;
  std::size_t window = 20;     ///< integration window m, samples
  std::size_t sequence = 200;  ///< windows per sequence before re-anchoring
  Vec3 truth_t_IB = Vec3::Zero();  ///< oracle only: true lever arm for v_GI, p_GI
};

struct ProviderConfig {
  DebiasConfig debias;
  ResidualConfig residual;
  VpConfig vp;
  /// Throws ConfigError on bad windows, strides, scales or missing weights.
  void validate() const;
};

/// Truth IMU-point velocity / position for a truth sample.
Vec3 truth_v_GI(const TruthSample& tr, const Vec3& t_IB);
Vec3 truth_p_GI(const TruthSample& tr, const Vec3& t_IB);

class DebiasProvider {
 public:
  DebiasProvider(const DebiasConfig& cfg, std::uint64_t seed);
  /// window holds the most recent samples, oldest first; only the last
  /// cfg.window are used. truth is the sample at the window end (oracle mode).
  BiasEstimate estimate(std::span<const ImuSample> window, const TruthSample* truth);
  const DebiasConfig& config() const { return cfg_; }

 private:
  DebiasConfig cfg_;
  Rng rng_;
  std::optional<WeightBundle> net_gyro_, net_accel_;
};

/// Residual-force network input: rows v_B(3), omega_B(3), u(4); one column
/// per sample, oldest first.
class ResidualProvider {
 public:
  ResidualProvider(const ResidualConfig& cfg, std::uint64_t seed);
  ResidualForce estimate(const MatX& window, const TruthSample* truth);
  const ResidualConfig& config() const { return cfg_; }

 private:
  ResidualConfig cfg_;
  Rng rng_;
  std::optional<WeightBundle> net_;
};

/// Discrete forms of the velocity and displacement integrals over an
/// integration window (forward Euler, consistent with p += v dt + a dt^2/2).
class WindowIntegrator {
 public:
  explicit WindowIntegrator(double dt) : dt_(dt) {}
  /// a_G: gravity-compensated world-frame acceleration R (a - b) + g_world.
  void add(const Vec3& a_G);
  void reset();
  std::size_t count() const { return n_; }
  double duration() const { return dt_ * static_cast<double>(n_); }
  /// sum a_G dt
  const Vec3& velocity_change() const { return dv_; }
  /// v_end T - double integral of a_G.
  Vec3 displacement(const Vec3& v_end) const;

 private:
  double dt_;
  std::size_t n_ = 0;
  Vec3 dv_ = Vec3::Zero();
  Vec3 moment_ = Vec3::Zero();  // sum a_i dt^2 (i + 1/2)
};

/// Sequence-relative velocity / position observations once per integration
/// window. Call observe() at every sample before accumulate().
class VpProvider {
 public:
  VpProvider(const VpConfig& cfg, double dt, std::uint64_t seed);

  /// Starts a sequence at sample time t. v_anchor is the current filter
  /// estimate of v_GI (used by the neural displacement input).
  void begin_sequence(double t, const Vec3& v_anchor, const TruthSample* truth);
  /// Emits an observation when a full integration window has accumulated.
  /// Throws InsufficientData (no sequence, or oracle without truth).
  std::optional<VpRelative> observe(double t, const TruthSample* truth);
  /// Feeds one debiased accelerometer sample. q_GI may be null only in
  /// oracle or null mode; neural mode throws MissingRotation.
  void accumulate(const Vec3& accel_debiased, const UnitQuaternion* q_GI);
  /// True once cfg.sequence windows have been emitted in this sequence.
  bool sequence_complete() const { return active_ && windows_ >= cfg_.sequence; }
  bool active() const { return active_; }
  double anchor_t() const { return anchor_t_; }
  const VpConfig& config() const { return cfg_; }

 private:
  VpConfig cfg_;
  double dt_;
  Rng rng_;
  bool active_ = false;
  double anchor_t_ = 0.0;
  std::size_t windows_ = 0;
  Vec3 v_anchor_ = Vec3::Zero();
  Vec3 truth_v0_ = Vec3::Zero(), truth_p0_ = Vec3::Zero();
  WindowIntegrator win_;
  std::array<std::optional<WeightBundle>, 3> vnet_, pnet_;
  std::array<GruState, 3> vstate_, pstate_;
};

/// Anchored absolute observation: anchor value plus relative estimate.
VpObservation anchor_observation(const VpRelative& rel, const Vec3& v_anchor, const Vec3& p_anchor);

}  // namespace dido
