#include <algorithm>

#include "dido/errors.hpp"
#include "dido/nn.hpp"

namespace dido {

namespace {

template <class S>
using MatS = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using VecS = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <class S>
struct ConvLayer {
  MatS<S> taps[3];  // [Cout x Cin] per kernel offset -1, 0, +1
  VecS<S> bias;
};

template <class S>
ConvLayer<S> conv_layer(const WeightBundle& w, const std::string& prefix) {
  const Tensor& wt = w.at(prefix + ".weight");
  const Tensor& bt = w.at(prefix + ".bias");
  const auto co = static_cast<Eigen::Index>(wt.shape[0]);
  const auto ci = static_cast<Eigen::Index>(wt.shape[1]);
  ConvLayer<S> L;
  for (int j = 0; j < 3; ++j) {
    L.taps[j].resize(co, ci);
    for (Eigen::Index o = 0; o < co; ++o)
      for (Eigen::Index c = 0; c < ci; ++c) L.taps[j](o, c) = static_cast<S>(wt[(o * ci + c) * 3 + j]);
  }
  L.bias = bt.vec().cast<S>();
  return L;
}

// Same-padded kernel-3 convolution.
template <class S>
MatS<S> conv(const ConvLayer<S>& L, const MatS<S>& x) {
  const Eigen::Index T = x.cols();
  MatS<S> y = L.bias.replicate(1, T);
  y.noalias() += L.taps[1] * x;
  if (T > 1) {
    y.rightCols(T - 1).noalias() += L.taps[0] * x.leftCols(T - 1);
    y.leftCols(T - 1).noalias() += L.taps[2] * x.rightCols(T - 1);
  }
  return y;
}

// Accumulates weight/bias gradients into g and returns dL/dx.
MatX conv_backward(const ConvLayer<double>& L, const MatX& x, const MatX& dy, const std::string& prefix,
                   ParamMap& g) {
  const Eigen::Index T = x.cols();
  const Eigen::Index co = dy.rows(), ci = x.rows();
  MatX dw[3];
  dw[1] = dy * x.transpose();
  dw[0] = MatX::Zero(co, ci);
  dw[2] = MatX::Zero(co, ci);
  MatX dx = L.taps[1].transpose() * dy;
  if (T > 1) {
    dw[0] = dy.rightCols(T - 1) * x.leftCols(T - 1).transpose();
    dw[2] = dy.leftCols(T - 1) * x.rightCols(T - 1).transpose();
    dx.leftCols(T - 1).noalias() += L.taps[0].transpose() * dy.rightCols(T - 1);
    dx.rightCols(T - 1).noalias() += L.taps[2].transpose() * dy.leftCols(T - 1);
  }
  Tensor& gw = g[prefix + ".weight"];
  gw = Tensor({static_cast<std::size_t>(co), static_cast<std::size_t>(ci), 3});
  for (Eigen::Index o = 0; o < co; ++o)
    for (Eigen::Index c = 0; c < ci; ++c)
      for (int j = 0; j < 3; ++j) gw[(o * ci + c) * 3 + j] = dw[j](o, c);
  Tensor& gb = g[prefix + ".bias"];
  gb = Tensor({static_cast<std::size_t>(co)});
  const VecX db = dy.rowwise().sum();
  for (Eigen::Index o = 0; o < co; ++o) gb[o] = db[o];
  return dx;
}

template <class S>
MatS<S> relu(const MatS<S>& x) { return x.cwiseMax(S(0)); }
MatX relu_mask(const MatX& pre, const MatX& d) {
  return (pre.array() > 0.0).select(d, MatX::Zero(d.rows(), d.cols()));
}

template <class S>
struct Forward {
  ConvLayer<S> c0, c1, c2;
  MatS<S> a0, h0, a1, h1, a2, s, h3;
  VecS<S> g;
};

void check_window(const WeightBundle& w, const MatX& x) {
  if (w.arch != Arch::ResNet1d) throw ShapeError("resnet1d_forward: bundle is not resnet1d");
  if (x.rows() != w.dim("in_channels") || x.cols() != w.dim("length")) {
    throw ShapeError("resnet1d_forward: window is " + std::to_string(x.rows()) + "x" +
                     std::to_string(x.cols()) + ", expected " +
                     std::to_string(w.dim("in_channels")) + "x" + std::to_string(w.dim("length")));
  }
}

template <class S>
Forward<S> run(const WeightBundle& w, const MatX& x) {
  check_window(w, x);
  Forward<S> f;
  f.c0 = conv_layer<S>(w, "conv0");
  f.c1 = conv_layer<S>(w, "block.conv1");
  f.c2 = conv_layer<S>(w, "block.conv2");
  f.a0 = conv(f.c0, MatS<S>(x.cast<S>()));
  f.h0 = relu(f.a0);
  f.a1 = conv(f.c1, f.h0);
  f.h1 = relu(f.a1);
  f.a2 = conv(f.c2, f.h1);
  f.s = f.a2 + f.h0;
  f.h3 = relu(f.s);
  f.g = f.h3.rowwise().mean();
  return f;
}

template <class S>
ResNetOutputT<S> forward(const WeightBundle& w, const MatX& window) {
  const Forward<S> f = run<S>(w, window);
  ResNetOutputT<S> out;
  out.mean = w.at("fc_mean.weight").mat().cast<S>() * f.g + w.at("fc_mean.bias").vec().cast<S>();
  if (w.has("fc_xi.weight")) {
    out.xi = Vec3T<S>(w.at("fc_xi.weight").mat().cast<S>() * f.g +
                      w.at("fc_xi.bias").vec().cast<S>());
  }
  return out;
}

}  // namespace

ResNetOutput resnet1d_forward(const WeightBundle& w, const MatX& window) {
  return forward<double>(w, window);
}

ResNetOutputT<long double> resnet1d_forward_ext(const WeightBundle& w, const MatX& window) {
  return forward<long double>(w, window);
}

double resnet1d_relu_margin(const WeightBundle& w, const MatX& window) {
  const Forward<double> f = run<double>(w, window);
  return std::min({f.a0.cwiseAbs().minCoeff(), f.a1.cwiseAbs().minCoeff(),
                   f.s.cwiseAbs().minCoeff()});
}

ParamMap resnet1d_backward(const WeightBundle& w, const MatX& window, const Vec3& d_mean,
                           const Vec3& d_xi) {
  const Forward<double> f = run<double>(w, window);
  ParamMap g;
  const auto W = static_cast<std::size_t>(f.g.size());
  auto head = [&](const std::string& prefix, const Vec3& d) {
    Tensor gw({3, W});
    for (std::size_t o = 0; o < 3; ++o)
      for (std::size_t c = 0; c < W; ++c) gw[o * W + c] = d[o] * f.g[c];
    Tensor gb({3});
    for (std::size_t o = 0; o < 3; ++o) gb[o] = d[o];
    g[prefix + ".weight"] = gw;
    g[prefix + ".bias"] = gb;
    return VecX(w.at(prefix + ".weight").mat().transpose() * d);
  };
  VecX dg = head("fc_mean", d_mean);
  if (w.has("fc_xi.weight")) dg += head("fc_xi", d_xi);

  const Eigen::Index T = f.h3.cols();
  const MatX dh3 = (dg / static_cast<double>(T)).replicate(1, T);
  const MatX ds = relu_mask(f.s, dh3);
  const MatX dh1 = conv_backward(f.c2, f.h1, ds, "block.conv2", g);
  const MatX da1 = relu_mask(f.a1, dh1);
  const MatX dh0 = ds + conv_backward(f.c1, f.h0, da1, "block.conv1", g);
  const MatX da0 = relu_mask(f.a0, dh0);
  conv_backward(f.c0, window, da0, "conv0", g);
  return g;
}

}  // namespace dido
