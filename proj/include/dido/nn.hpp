#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dido/geom.hpp"

namespace dido {

using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;

/// Dense row-major float64 array.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0);
  std::size_t size() const { return data.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  /// Row-major 2-D view; requires rank 2.
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> mat()
      const;
  Eigen::Map<const VecX> vec() const { return {data.data(), static_cast<Eigen::Index>(size())}; }
};

using ParamMap = std::map<std::string, Tensor>;

enum class Arch { ResNet1d, GruVp };

/// Named weights for one network plus its architecture dimensions.
///
/// resnet1d dims: in_channels, width, length, out, kernel (=3).
///   params: conv0.{weight [W,C,3], bias [W]}, block.conv1.*, block.conv2.*
///   ([W,W,3], [W]), fc_mean.{weight [out,W], bias [out]}, optionally fc_xi.*.
/// gru_vp dims: input, hidden (list), output.
///   params: gru.weight_ih_l{k} [3H,In], gru.weight_hh_l{k} [3H,H],
///   gru.bias_ih_l{k}, gru.bias_hh_l{k} [3H], fc.weight [out,H_last], fc.bias [out].
///   Gate order r, z, n.
struct WeightBundle {
  Arch arch = Arch::ResNet1d;
  std::map<std::string, int> dims;
  std::vector<int> hidden;  ///< gru_vp only
  ParamMap params;

  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return params.count(name) != 0; }
  int dim(const std::string& name) const;
  /// Throws ShapeError when a parameter is missing, misshapen, non-finite, or unexpected.
  void validate() const;
  std::size_t parameter_count() const;
};

WeightBundle parse_weights(const std::string& json_text);
WeightBundle load_weights(const std::filesystem::path& path);
std::string dump_weights(const WeightBundle& w);
void save_weights(const std::filesystem::path& path, const WeightBundle& w);

/// Zero-initialised bundles with the right shapes.
WeightBundle make_resnet1d(int in_channels, int width = 32, int length = 20, bool xi_head = true);
WeightBundle make_gru_vp(int input = 2, std::vector<int> hidden = {64, 128, 256}, int output = 2);

/// Hand-built resnet1d whose mean head returns the window mean of the first
/// three input channels (ReLU pairs +x / -x recombined in the head). The xi
/// head, if requested, outputs log_std everywhere.
WeightBundle make_window_mean_resnet(int in_channels, int length = 20, bool xi_head = false,
                                     double log_std = 0.0);

/// Fills every parameter with N(0, scale^2) from the given seed.
void randomize(WeightBundle& w, std::uint64_t seed, double scale);

// ---------------------------------------------------------------------------
// ResNet1d

template <class S>
using Vec3T = Eigen::Matrix<S, 3, 1>;

template <class S>
struct ResNetOutputT {
  Vec3T<S> mean = Vec3T<S>::Zero();
  std::optional<Vec3T<S>> xi;
};
using ResNetOutput = ResNetOutputT<double>;

/// window is [C x T]. Throws ShapeError.
ResNetOutput resnet1d_forward(const WeightBundle& w, const MatX& window);
/// Same network evaluated in extended precision (finite-difference oracle).
ResNetOutputT<long double> resnet1d_forward_ext(const WeightBundle& w, const MatX& window);

/// Parameter gradients of a scalar whose gradients w.r.t. the outputs are
/// d_mean and (if the xi head exists) d_xi.
ParamMap resnet1d_backward(const WeightBundle& w, const MatX& window, const Vec3& d_mean,
                           const Vec3& d_xi);

/// Smallest |pre-activation| over every ReLU in the forward pass. Finite
/// differences with steps well below this never cross a kink.
double resnet1d_relu_margin(const WeightBundle& w, const MatX& window);

// ---------------------------------------------------------------------------
// GRU

struct GruState {
  std::vector<VecX> h;  ///< one hidden vector per layer
};

GruState gru_initial_state(const WeightBundle& w);
/// One recurrence step; updates state and returns the head output.
VecX gru_step(const WeightBundle& w, GruState& state, const VecX& x);
/// seq is [steps x input]; returns [steps x output]. Initial hidden state zero.
MatX gru_forward(const WeightBundle& w, const MatX& seq);
/// Extended-precision evaluation of gru_forward.
Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic> gru_forward_ext(const WeightBundle& w,
                                                                           const MatX& seq);
/// Backpropagation through time; d_out is [steps x output].
ParamMap gru_backward(const WeightBundle& w, const MatX& seq, const MatX& d_out);

/// Covariance from log-std head: diag(exp(2 xi)). Always positive definite.
Vec3 diag_cov(const Vec3& xi);

}  // namespace dido
