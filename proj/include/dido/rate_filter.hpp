#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "dido/geom.hpp"

namespace dido {

/// First-order IIR low-pass on angular rate, y <- y + beta (x - y), with
/// angular acceleration from a central difference of the filtered rate.
/// The difference is centred one sample back so it stays causal.
class RateFilter {
 public:
  RateFilter(double cutoff_hz, double dt) : dt_(dt) {
    if (!(cutoff_hz > 0.0) || !(dt > 0.0)) {
      throw std::invalid_argument("RateFilter: cutoff and dt must be positive");
    }
    const double rc = 1.0 / (2.0 * std::numbers::pi * cutoff_hz);
    beta_ = dt / (rc + dt);
  }

  void update(const Vec3& omega) {
    if (count_ == 0) {
      y_ = omega;
      prev_ = prev2_ = omega;
    } else {
      prev2_ = prev_;
      prev_ = y_;
      y_ += beta_ * (omega - y_);
    }
    ++count_;
  }

  const Vec3& omega() const { return y_; }
  Vec3 alpha() const { return count_ < 3 ? Vec3::Zero() : Vec3((y_ - prev2_) / (2.0 * dt_)); }
  double beta() const { return beta_; }

 private:
  double dt_;
  double beta_ = 1.0;
  long count_ = 0;
  Vec3 y_ = Vec3::Zero(), prev_ = Vec3::Zero(), prev2_ = Vec3::Zero();
};

}  // namespace dido
