#include "dido/providers.hpp"

#include <algorithm>
#include <cmath>

#include "dido/errors.hpp"

namespace dido {

ProviderMode parse_provider_mode(const std::string& s) {
  if (s == "oracle") return ProviderMode::Oracle;
  if (s == "neural") return ProviderMode::Neural;
  if (s == "null") return ProviderMode::Null;
  throw ConfigError("unknown provider mode '" + s + "' (oracle|neural|null)");
}

std::string to_string(ProviderMode m) {
  switch (m) {
    case ProviderMode::Oracle: return "oracle";
    case ProviderMode::Neural: return "neural";
    case ProviderMode::Null: return "null";
  }
  return "?";
}

namespace {

void require_weights(const std::filesystem::path& p, const std::string& what) {
  if (p.empty()) throw ConfigError(what + ": neural mode needs a weight file");
}

void check_net(const WeightBundle& w, Arch arch, int in, int length, const std::string& what) {
  if (w.arch != arch) throw ShapeError(what + ": wrong architecture");
  if (arch == Arch::ResNet1d) {
    if (w.dim("in_channels") != in || w.dim("length") != length)
      throw ShapeError(what + ": expected " + std::to_string(in) + " channels x " +
                       std::to_string(length) + " samples");
  } else if (w.dim("input") != 2 || w.dim("output") != 2) {
    throw ShapeError(what + ": V/P nets take 2 inputs and emit 2 outputs");
  }
}

Vec3 floor_var(const Vec3& v) { return v.cwiseMax(kMinVariance); }

}  // namespace

void ProviderConfig::validate() const {
  auto win = [](std::size_t w, std::size_t stride, const std::string& what) {
    if (w < 2) throw ConfigError(what + ": window must be at least 2 samples");
    if (stride == 0) throw ConfigError(what + ": stride must be positive");
  };
  win(debias.window, debias.stride, "provider.debias");
  win(residual.window, residual.stride, "provider.residual");
  if (vp.window == 0 || vp.sequence == 0) throw ConfigError("provider.vp: window and sequence must be positive");
  if (!(residual.cov_scale > 0.0) || !(vp.cov_scale > 0.0))
    throw ConfigError("provider: covariance scales must be positive");
  if (debias.sigma_gyro < 0 || debias.sigma_accel < 0 || residual.sigma < 0 || vp.sigma_v < 0 ||
      vp.sigma_p < 0 || !(residual.null_sigma > 0))
    throw ConfigError("provider: corruption stds must be non-negative");
  if (debias.mode == ProviderMode::Neural) {
    require_weights(debias.weights_gyro, "provider.debias (gyro)");
    require_weights(debias.weights_accel, "provider.debias (accel)");
  }
  if (residual.mode == ProviderMode::Neural) require_weights(residual.weights, "provider.residual");
  if (vp.mode == ProviderMode::Neural)
    for (int a = 0; a < 3; ++a) {
      require_weights(vp.vnet[a], "provider.vp (V net)");
      require_weights(vp.pnet[a], "provider.vp (P net)");
    }
}

Vec3 truth_v_GI(const TruthSample& tr, const Vec3& t_IB) {
  return tr.v_GB - tr.q_GI.matrix() * tr.omega_I.cross(t_IB);
}

Vec3 truth_p_GI(const TruthSample& tr, const Vec3& t_IB) {
  return tr.p_GB - tr.q_GI.matrix() * t_IB;
}

// ---------------------------------------------------------------------------

DebiasProvider::DebiasProvider(const DebiasConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), rng_(seed, "providers.debias") {
  if (cfg_.mode == ProviderMode::Neural) {
    net_gyro_ = load_weights(cfg_.weights_gyro);
    net_accel_ = load_weights(cfg_.weights_accel);
    const int T = static_cast<int>(cfg_.window);
    check_net(*net_gyro_, Arch::ResNet1d, 3, T, "debias gyro net");
    check_net(*net_accel_, Arch::ResNet1d, 3, T, "debias accel net");
  }
}

BiasEstimate DebiasProvider::estimate(std::span<const ImuSample> window, const TruthSample* truth) {
  if (window.size() < cfg_.window) throw InsufficientData("debias_provider: window too short");
  BiasEstimate out;
  out.t = window.back().t;
  switch (cfg_.mode) {
    case ProviderMode::Null:
      break;
    case ProviderMode::Oracle:
      if (!truth) throw InsufficientData("debias_provider: oracle mode needs ground truth");
      out.b_gyro = truth->b_gyro + rng_.normal3(cfg_.sigma_gyro);
      out.b_accel = truth->b_accel + rng_.normal3(cfg_.sigma_accel);
      break;
    case ProviderMode::Neural: {
      const auto T = static_cast<Eigen::Index>(cfg_.window);
      MatX g(3, T), a(3, T);
      const std::size_t off = window.size() - cfg_.window;
      for (Eigen::Index j = 0; j < T; ++j) {
        g.col(j) = window[off + static_cast<std::size_t>(j)].gyro;
        a.col(j) = window[off + static_cast<std::size_t>(j)].accel;
      }
      out.b_gyro = resnet1d_forward(*net_gyro_, g).mean;
      out.b_accel = resnet1d_forward(*net_accel_, a).mean;
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

ResidualProvider::ResidualProvider(const ResidualConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), rng_(seed, "providers.residual") {
  if (cfg_.mode == ProviderMode::Neural) {
    net_ = load_weights(cfg_.weights);
    check_net(*net_, Arch::ResNet1d, 10, static_cast<int>(cfg_.window), "residual net");
    if (!net_->has("fc_xi.weight")) throw ShapeError("residual net: needs an xi head");
  }
}

ResidualForce ResidualProvider::estimate(const MatX& window, const TruthSample* truth) {
  if (window.rows() != 10) throw ShapeError("residual_provider: window needs 10 rows");
  if (window.cols() < static_cast<Eigen::Index>(cfg_.window))
    throw InsufficientData("residual_provider: window too short");
  ResidualForce out;
  switch (cfg_.mode) {
    case ProviderMode::Null:
      out.f_res = Vec3::Zero();
      out.sigma2_f = Vec3::Constant(cfg_.null_sigma * cfg_.null_sigma);
      break;
    case ProviderMode::Oracle:
      if (!truth) throw InsufficientData("residual_provider: oracle mode needs ground truth");
      out.f_res = truth->f_res + rng_.normal3(cfg_.sigma);
      out.sigma2_f = Vec3::Constant(cfg_.sigma * cfg_.sigma);
      break;
    case ProviderMode::Neural: {
      const auto T = static_cast<Eigen::Index>(cfg_.window);
      const ResNetOutput o = resnet1d_forward(*net_, window.rightCols(T));
      out.f_res = o.mean;
      out.sigma2_f = diag_cov(*o.xi);
      break;
    }
  }
  out.sigma2_f = floor_var(cfg_.cov_scale * out.sigma2_f).cwiseMax(1e-6);
  return out;
}

// ---------------------------------------------------------------------------

void WindowIntegrator::add(const Vec3& a_G) {
  moment_ += a_G * (dt_ * dt_ * (static_cast<double>(n_) + 0.5));
  dv_ += a_G * dt_;
  ++n_;
}

void WindowIntegrator::reset() {
  n_ = 0;
  dv_.setZero();
  moment_.setZero();
}

Vec3 WindowIntegrator::displacement(const Vec3& v_end) const {
  // sum_i (v_i dt + a_i dt^2/2) with v_i = v_end - sum_{j>=i} a_j dt
  return v_end * duration() - (dv_ * duration() - moment_);
}

VpProvider::VpProvider(const VpConfig& cfg, double dt, std::uint64_t seed)
    : cfg_(cfg), dt_(dt), rng_(seed, "providers.vp"), win_(dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("VpProvider: dt must be positive");
  if (cfg_.mode == ProviderMode::Neural) {
    for (int a = 0; a < 3; ++a) {
      vnet_[a] = load_weights(cfg_.vnet[a]);
      pnet_[a] = load_weights(cfg_.pnet[a]);
      check_net(*vnet_[a], Arch::GruVp, 2, 0, "V net");
      check_net(*pnet_[a], Arch::GruVp, 2, 0, "P net");
    }
  }
}

void VpProvider::begin_sequence(double t, const Vec3& v_anchor, const TruthSample* truth) {
  active_ = true;
  anchor_t_ = t;
  windows_ = 0;
  v_anchor_ = v_anchor;
  win_.reset();
  if (cfg_.mode == ProviderMode::Oracle) {
    if (!truth) throw InsufficientData("vp_provider: oracle mode needs ground truth");
    truth_v0_ = truth_v_GI(*truth, cfg_.truth_t_IB);
    truth_p0_ = truth_p_GI(*truth, cfg_.truth_t_IB);
  }
  if (cfg_.mode == ProviderMode::Neural) {
    for (int a = 0; a < 3; ++a) {
      vstate_[a] = gru_initial_state(*vnet_[a]);
      pstate_[a] = gru_initial_state(*pnet_[a]);
    }
  }
}

std::optional<VpRelative> VpProvider::observe(double t, const TruthSample* truth) {
  if (!active_) throw InsufficientData("vp_provider: no active sequence");
  if (win_.count() < cfg_.window) return std::nullopt;
  VpRelative out;
  out.anchor_t = anchor_t_;
  out.t = t;
  switch (cfg_.mode) {
    case ProviderMode::Null:
      // No information: huge variances keep the update inert.
      out.sigma2_v = out.sigma2_p = Vec3::Constant(1e12);
      break;
    case ProviderMode::Oracle:
      if (!truth) throw InsufficientData("vp_provider: oracle mode needs ground truth");
      out.dv = truth_v_GI(*truth, cfg_.truth_t_IB) - truth_v0_ + rng_.normal3(cfg_.sigma_v);
      out.dp = truth_p_GI(*truth, cfg_.truth_t_IB) - truth_p0_ + rng_.normal3(cfg_.sigma_p);
      out.sigma2_v = Vec3::Constant(cfg_.sigma_v * cfg_.sigma_v);
      out.sigma2_p = Vec3::Constant(cfg_.sigma_p * cfg_.sigma_p);
      break;
    case ProviderMode::Neural: {
      const double T = win_.duration();
      Vec3 v_rel, xi_v, xi_p;
      for (int a = 0; a < 3; ++a) {
        const VecX o = gru_step(*vnet_[a], vstate_[a], Eigen::Vector2d(win_.velocity_change()[a], T));
        v_rel[a] = o[0];
        xi_v[a] = o[1];
      }
      const Vec3 dp_win = win_.displacement(v_anchor_ + v_rel);
      for (int a = 0; a < 3; ++a) {
        const VecX o = gru_step(*pnet_[a], pstate_[a], Eigen::Vector2d(dp_win[a], T));
        out.dp[a] = o[0];
        xi_p[a] = o[1];
      }
      out.dv = v_rel;
      out.sigma2_v = diag_cov(xi_v);
      out.sigma2_p = diag_cov(xi_p);
      break;
    }
  }
  out.sigma2_v = floor_var(cfg_.cov_scale * out.sigma2_v);
  out.sigma2_p = floor_var(cfg_.cov_scale * out.sigma2_p);
  ++windows_;
  win_.reset();
  return out;
}

void VpProvider::accumulate(const Vec3& accel_debiased, const UnitQuaternion* q_GI) {
  if (!active_) throw InsufficientData("vp_provider: no active sequence");
  if (cfg_.mode != ProviderMode::Neural) {
    win_.add(Vec3::Zero());  // only the sample count matters
    return;
  }
  if (!q_GI) throw MissingRotation("vp_provider: neural mode needs the rotation stream");
  win_.add(q_GI->matrix() * accel_debiased + gravity_world());
}

VpObservation anchor_observation(const VpRelative& rel, const Vec3& v_anchor, const Vec3& p_anchor) {
  VpObservation o;
  o.v_GI = v_anchor + rel.dv;
  o.p_GI = p_anchor + rel.dp;
  o.sigma2_v = rel.sigma2_v;
  o.sigma2_p = rel.sigma2_p;
  o.anchor_t = rel.anchor_t;
  o.t = rel.t;
  return o;
}

}  // namespace dido
