#include <cmath>

#include "dido/errors.hpp"
#include "dido/nn.hpp"

namespace dido {

namespace {

struct GruLayer {
  MatX w_ih, w_hh;
  VecX b_ih, b_hh;
  Eigen::Index H = 0;
};

std::vector<GruLayer> layers(const WeightBundle& w) {
  if (w.arch != Arch::GruVp) throw ShapeError("gru_forward: bundle is not gru_vp");
  std::vector<GruLayer> out;
  for (std::size_t l = 0; l < w.hidden.size(); ++l) {
    const std::string s = std::to_string(l);
    GruLayer L;
    L.w_ih = w.at("gru.weight_ih_l" + s).mat();
    L.w_hh = w.at("gru.weight_hh_l" + s).mat();
    L.b_ih = w.at("gru.bias_ih_l" + s).vec();
    L.b_hh = w.at("gru.bias_hh_l" + s).vec();
    L.H = w.hidden[l];
    out.push_back(std::move(L));
  }
  return out;
}

VecX sigmoid(const VecX& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }

struct Cache {
  VecX x, h_prev, r, z, n, hn;  // hn = W_hn h + b_hn
  VecX h;
};

Cache cell(const GruLayer& L, const VecX& x, const VecX& h_prev) {
  const Eigen::Index H = L.H;
  const VecX gi = L.w_ih * x + L.b_ih;
  const VecX gh = L.w_hh * h_prev + L.b_hh;
  Cache c;
  c.x = x;
  c.h_prev = h_prev;
  c.r = sigmoid(gi.segment(0, H) + gh.segment(0, H));
  c.z = sigmoid(gi.segment(H, H) + gh.segment(H, H));
  c.hn = gh.segment(2 * H, H);
  c.n = (gi.segment(2 * H, H).array() + c.r.array() * c.hn.array()).tanh().matrix();
  c.h = ((1.0 - c.z.array()) * c.n.array() + c.z.array() * h_prev.array()).matrix();
  return c;
}

void check_input(const WeightBundle& w, Eigen::Index in) {
  if (in != w.dim("input")) {
    throw ShapeError("gru_forward: input width " + std::to_string(in) + ", expected " +
                     std::to_string(w.dim("input")));
  }
}

Tensor to_tensor(const MatX& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) t[i * m.cols() + j] = m(i, j);
  return t;
}

Tensor to_tensor(const VecX& v) {
  Tensor t({static_cast<std::size_t>(v.size())});
  for (Eigen::Index i = 0; i < v.size(); ++i) t[i] = v[i];
  return t;
}

}  // namespace

GruState gru_initial_state(const WeightBundle& w) {
  GruState s;
  for (int h : w.hidden) s.h.push_back(VecX::Zero(h));
  return s;
}

VecX gru_step(const WeightBundle& w, GruState& state, const VecX& x) {
  check_input(w, x.size());
  const auto L = layers(w);
  if (state.h.size() != L.size()) throw ShapeError("gru_step: state has wrong layer count");
  VecX in = x;
  for (std::size_t l = 0; l < L.size(); ++l) {
    if (state.h[l].size() != L[l].H) throw ShapeError("gru_step: state has wrong hidden size");
    state.h[l] = cell(L[l], in, state.h[l]).h;
    in = state.h[l];
  }
  return w.at("fc.weight").mat() * in + w.at("fc.bias").vec();
}

namespace {

template <class S>
Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> forward(const WeightBundle& w, const MatX& seq) {
  using M = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  using V = Eigen::Matrix<S, Eigen::Dynamic, 1>;
  check_input(w, seq.cols());
  const auto L = layers(w);
  std::vector<M> w_ih, w_hh;
  std::vector<V> b_ih, b_hh, h;
  for (const auto& l : L) {
    w_ih.push_back(l.w_ih.cast<S>());
    w_hh.push_back(l.w_hh.cast<S>());
    b_ih.push_back(l.b_ih.cast<S>());
    b_hh.push_back(l.b_hh.cast<S>());
    h.push_back(V::Zero(l.H));
  }
  const M fc_w = w.at("fc.weight").mat().cast<S>();
  const V fc_b = w.at("fc.bias").vec().cast<S>();
  M out(seq.rows(), w.dim("output"));
  auto sig = [](const V& x) { return V((S(1) / (S(1) + (-x.array()).exp())).matrix()); };
  for (Eigen::Index t = 0; t < seq.rows(); ++t) {
    V in = seq.row(t).transpose().cast<S>();
    for (std::size_t l = 0; l < L.size(); ++l) {
      const Eigen::Index H = L[l].H;
      const V gi = w_ih[l] * in + b_ih[l];
      const V gh = w_hh[l] * h[l] + b_hh[l];
      const V r = sig(gi.segment(0, H) + gh.segment(0, H));
      const V z = sig(gi.segment(H, H) + gh.segment(H, H));
      const V n = (gi.segment(2 * H, H).array() + r.array() * gh.segment(2 * H, H).array()).tanh().matrix();
      h[l] = ((S(1) - z.array()) * n.array() + z.array() * h[l].array()).matrix();
      in = h[l];
    }
    out.row(t) = (fc_w * in + fc_b).transpose();
  }
  return out;
}

}  // namespace

MatX gru_forward(const WeightBundle& w, const MatX& seq) { return forward<double>(w, seq); }

Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic> gru_forward_ext(const WeightBundle& w,
                                                                           const MatX& seq) {
  return forward<long double>(w, seq);
}

ParamMap gru_backward(const WeightBundle& w, const MatX& seq, const MatX& d_out) {
  check_input(w, seq.cols());
  if (d_out.rows() != seq.rows() || d_out.cols() != w.dim("output")) {
    throw ShapeError("gru_backward: d_out has wrong shape");
  }
  const auto L = layers(w);
  const std::size_t nl = L.size();
  const Eigen::Index T = seq.rows();
  const MatX fc_w = w.at("fc.weight").mat();

  // Forward with caches.
  std::vector<std::vector<Cache>> cache(nl, std::vector<Cache>(static_cast<std::size_t>(T)));
  std::vector<VecX> h(nl);
  for (std::size_t l = 0; l < nl; ++l) h[l] = VecX::Zero(L[l].H);
  for (Eigen::Index t = 0; t < T; ++t) {
    VecX in = seq.row(t).transpose();
    for (std::size_t l = 0; l < nl; ++l) {
      cache[l][t] = cell(L[l], in, h[l]);
      h[l] = cache[l][t].h;
      in = h[l];
    }
  }

  std::vector<MatX> dw_ih(nl), dw_hh(nl);
  std::vector<VecX> db_ih(nl), db_hh(nl), carry(nl);
  for (std::size_t l = 0; l < nl; ++l) {
    dw_ih[l] = MatX::Zero(L[l].w_ih.rows(), L[l].w_ih.cols());
    dw_hh[l] = MatX::Zero(L[l].w_hh.rows(), L[l].w_hh.cols());
    db_ih[l] = VecX::Zero(3 * L[l].H);
    db_hh[l] = VecX::Zero(3 * L[l].H);
    carry[l] = VecX::Zero(L[l].H);
  }
  MatX dfc_w = MatX::Zero(fc_w.rows(), fc_w.cols());
  VecX dfc_b = VecX::Zero(fc_w.rows());

  for (Eigen::Index t = T - 1; t >= 0; --t) {
    const VecX dy = d_out.row(t).transpose();
    dfc_w += dy * cache[nl - 1][t].h.transpose();
    dfc_b += dy;
    VecX g = fc_w.transpose() * dy;
    for (std::size_t li = nl; li-- > 0;) {
      const Cache& c = cache[li][t];
      const Eigen::Index H = L[li].H;
      const VecX dh = g + carry[li];
      const VecX dn = (dh.array() * (1.0 - c.z.array())).matrix();
      const VecX dz = (dh.array() * (c.h_prev.array() - c.n.array())).matrix();
      const VecX dan = (dn.array() * (1.0 - c.n.array().square())).matrix();
      const VecX dr = (dan.array() * c.hn.array()).matrix();
      const VecX dar = (dr.array() * c.r.array() * (1.0 - c.r.array())).matrix();
      const VecX daz = (dz.array() * c.z.array() * (1.0 - c.z.array())).matrix();
      VecX d_gi(3 * H), d_gh(3 * H);
      d_gi << dar, daz, dan;
      d_gh << dar, daz, (dan.array() * c.r.array()).matrix();
      dw_ih[li] += d_gi * c.x.transpose();
      db_ih[li] += d_gi;
      dw_hh[li] += d_gh * c.h_prev.transpose();
      db_hh[li] += d_gh;
      carry[li] = (dh.array() * c.z.array()).matrix() + L[li].w_hh.transpose() * d_gh;
      g = L[li].w_ih.transpose() * d_gi;
    }
  }

  ParamMap grads;
  for (std::size_t l = 0; l < nl; ++l) {
    const std::string s = std::to_string(l);
    grads["gru.weight_ih_l" + s] = to_tensor(dw_ih[l]);
    grads["gru.weight_hh_l" + s] = to_tensor(dw_hh[l]);
    grads["gru.bias_ih_l" + s] = to_tensor(db_ih[l]);
    grads["gru.bias_hh_l" + s] = to_tensor(db_hh[l]);
  }
  grads["fc.weight"] = to_tensor(dfc_w);
  grads["fc.bias"] = to_tensor(dfc_b);
  return grads;
}

}  // namespace dido
