#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dido/errors.hpp"
#include "dido/nn.hpp"
#include "dido/rng.hpp"

namespace dido {

using nlohmann::json;

Tensor::Tensor(std::vector<std::size_t> s, double fill) : shape(std::move(s)) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  data.assign(n, fill);
}

Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
Tensor::mat() const {
  if (shape.size() != 2) throw ShapeError("Tensor::mat: rank is not 2");
  return {data.data(), static_cast<Eigen::Index>(shape[0]), static_cast<Eigen::Index>(shape[1])};
}

const Tensor& WeightBundle::at(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw ShapeError("missing parameter '" + name + "'");
  return it->second;
}

int WeightBundle::dim(const std::string& name) const {
  auto it = dims.find(name);
  if (it == dims.end()) throw ShapeError("missing dimension '" + name + "'");
  return it->second;
}

std::size_t WeightBundle::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [k, t] : params) n += t.size();
  return n;
}

namespace {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

std::map<std::string, Shape> expected_shapes(const WeightBundle& w) {
  std::map<std::string, Shape> e;
  auto pos = [&](const std::string& k) {
    const int v = w.dim(k);
    if (v <= 0) throw ShapeError("dimension '" + k + "' must be positive");
    return static_cast<std::size_t>(v);
  };
  if (w.arch == Arch::ResNet1d) {
    const auto C = pos("in_channels"), W = pos("width"), O = pos("out");
    pos("length");
    if (w.dim("kernel") != 3) throw ShapeError("resnet1d: only kernel 3 is supported");
    e["conv0.weight"] = {W, C, 3};
    e["conv0.bias"] = {W};
    e["block.conv1.weight"] = {W, W, 3};
    e["block.conv1.bias"] = {W};
    e["block.conv2.weight"] = {W, W, 3};
    e["block.conv2.bias"] = {W};
    e["fc_mean.weight"] = {O, W};
    e["fc_mean.bias"] = {O};
    if (w.has("fc_xi.weight") || w.has("fc_xi.bias")) {
      e["fc_xi.weight"] = {O, W};
      e["fc_xi.bias"] = {O};
    }
  } else {
    auto in = pos("input");
    const auto O = pos("output");
    if (w.hidden.empty()) throw ShapeError("gru_vp: empty hidden list");
    for (std::size_t l = 0; l < w.hidden.size(); ++l) {
      if (w.hidden[l] <= 0) throw ShapeError("gru_vp: hidden sizes must be positive");
      const auto H = static_cast<std::size_t>(w.hidden[l]);
      const std::string s = std::to_string(l);
      e["gru.weight_ih_l" + s] = {3 * H, in};
      e["gru.weight_hh_l" + s] = {3 * H, H};
      e["gru.bias_ih_l" + s] = {3 * H};
      e["gru.bias_hh_l" + s] = {3 * H};
      in = H;
    }
    e["fc.weight"] = {O, in};
    e["fc.bias"] = {O};
  }
  return e;
}

void flatten(const json& j, Shape& shape, std::vector<double>& out, std::size_t depth,
             const std::string& name) {
  if (j.is_array()) {
    if (depth == shape.size()) shape.push_back(j.size());
    else if (shape[depth] != j.size()) throw ShapeError("ragged array in '" + name + "'");
    for (const auto& x : j) flatten(x, shape, out, depth + 1, name);
  } else if (j.is_number()) {
    if (depth != shape.size()) throw ShapeError("ragged array in '" + name + "'");
    out.push_back(j.get<double>());
  } else {
    throw ShapeError("non-numeric entry in '" + name + "'");
  }
}

json nest(const Tensor& t, std::size_t depth, std::size_t& offset) {
  if (depth == t.shape.size()) return t.data[offset++];
  json a = json::array();
  for (std::size_t i = 0; i < t.shape[depth]; ++i) a.push_back(nest(t, depth + 1, offset));
  return a;
}

}  // namespace

void WeightBundle::validate() const {
  const auto expected = expected_shapes(*this);
  for (const auto& [name, shape] : expected) {
    const Tensor& t = at(name);
    if (t.shape != shape) {
      throw ShapeError("parameter '" + name + "' has shape " + shape_str(t.shape) +
                       ", expected " + shape_str(shape));
    }
    for (double x : t.data)
      if (!std::isfinite(x)) throw ShapeError("parameter '" + name + "' is not finite");
  }
  for (const auto& [name, t] : params) {
    if (!expected.count(name)) throw ShapeError("unexpected parameter '" + name + "'");
  }
}

WeightBundle parse_weights(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ShapeError(std::string("weight file is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("arch") || !j.contains("dims") || !j.contains("params")) {
    throw ShapeError("weight file needs 'arch', 'dims' and 'params'");
  }
  WeightBundle w;
  const std::string arch = j["arch"].is_string() ? j["arch"].get<std::string>() : "";
  if (arch == "resnet1d") w.arch = Arch::ResNet1d;
  else if (arch == "gru_vp") w.arch = Arch::GruVp;
  else throw ShapeError("unknown arch '" + arch + "'");

  if (!j["dims"].is_object()) throw ShapeError("'dims' must be an object");
  for (const auto& [k, v] : j["dims"].items()) {
    if (k == "hidden") {
      if (!v.is_array()) throw ShapeError("'hidden' must be a list");
      for (const auto& h : v) {
        if (!h.is_number_integer()) throw ShapeError("'hidden' entries must be integers");
        w.hidden.push_back(h.get<int>());
      }
    } else {
      if (!v.is_number_integer()) throw ShapeError("dimension '" + k + "' must be an integer");
      w.dims[k] = v.get<int>();
    }
  }
  if (!j["params"].is_object()) throw ShapeError("'params' must be an object");
  for (const auto& [name, v] : j["params"].items()) {
    Tensor t;
    flatten(v, t.shape, t.data, 0, name);
    w.params.emplace(name, std::move(t));
  }
  w.validate();
  return w;
}

WeightBundle load_weights(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open weight file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_weights(ss.str());
}

std::string dump_weights(const WeightBundle& w) {
  json j;
  j["arch"] = w.arch == Arch::ResNet1d ? "resnet1d" : "gru_vp";
  json dims = json::object();
  for (const auto& [k, v] : w.dims) dims[k] = v;
  if (w.arch == Arch::GruVp) dims["hidden"] = w.hidden;
  j["dims"] = dims;
  json params = json::object();
  for (const auto& [name, t] : w.params) {
    std::size_t off = 0;
    params[name] = nest(t, 0, off);
  }
  j["params"] = params;
  return j.dump();
}

void save_weights(const std::filesystem::path& path, const WeightBundle& w) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write weight file " + path.string());
  out << dump_weights(w) << '\n';
}

WeightBundle make_resnet1d(int in_channels, int width, int length, bool xi_head) {
  WeightBundle w;
  w.arch = Arch::ResNet1d;
  w.dims = {{"in_channels", in_channels}, {"width", width}, {"length", length},
            {"out", 3}, {"kernel", 3}};
  if (xi_head) {
    w.params["fc_xi.weight"] = Tensor({3, 1});
    w.params["fc_xi.bias"] = Tensor({3});
  }
  for (const auto& [name, shape] : expected_shapes(w)) w.params[name] = Tensor(shape);
  return w;
}

WeightBundle make_gru_vp(int input, std::vector<int> hidden, int output) {
  WeightBundle w;
  w.arch = Arch::GruVp;
  w.dims = {{"input", input}, {"output", output}};
  w.hidden = std::move(hidden);
  for (const auto& [name, shape] : expected_shapes(w)) w.params[name] = Tensor(shape);
  return w;
}

void randomize(WeightBundle& w, std::uint64_t seed, double scale) {
  Rng rng(seed, "weights");
  for (auto& [name, t] : w.params)
    for (double& x : t.data) x = scale * rng.normal();
}

Vec3 diag_cov(const Vec3& xi) { return (2.0 * xi).array().exp(); }

WeightBundle make_window_mean_resnet(int in_channels, int length, bool xi_head, double log_std) {
  if (in_channels < 3) throw ShapeError("make_window_mean_resnet: need at least 3 channels");
  WeightBundle w = make_resnet1d(in_channels, 6, length, xi_head);
  Tensor& c0 = w.params.at("conv0.weight");
  Tensor& fc = w.params.at("fc_mean.weight");
  const auto C = static_cast<std::size_t>(in_channels);
  for (std::size_t k = 0; k < 3; ++k) {
    // centre tap only: channel 2k carries relu(x_k), channel 2k+1 relu(-x_k)
    c0[((2 * k) * C + k) * 3 + 1] = 1.0;
    c0[((2 * k + 1) * C + k) * 3 + 1] = -1.0;
    fc[k * 6 + 2 * k] = 1.0;
    fc[k * 6 + 2 * k + 1] = -1.0;
  }
  if (xi_head) {
    Tensor& b = w.params.at("fc_xi.bias");
    for (std::size_t k = 0; k < 3; ++k) b[k] = log_std;
  }
  return w;
}

}  // namespace dido
