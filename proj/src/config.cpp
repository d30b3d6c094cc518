#include "dido/config.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <stdexcept>

#include "dido/errors.hpp"
#include "dido/log_io.hpp"

namespace dido {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

[[noreturn]] void syntax(std::size_t line, const std::string& msg) {
  throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.')) return false;
  return k.front() != '.' && k.back() != '.' && k.find("..") == std::string::npos;
}

// Strips a trailing comment outside string literals.
std::string strip_comment(const std::string& s) {
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') in_str = !in_str;
    if (s[i] == '#' && !in_str) return s.substr(0, i);
  }
  return s;
}

double parse_number(const std::string& s, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    syntax(line, "bad value '" + s + "'");
  }
  if (used != s.size() || !std::isfinite(v)) syntax(line, "bad number '" + s + "'");
  return v;
}

std::string parse_string(const std::string& s, std::size_t line) {
  if (s.size() < 2 || s.front() != '"' || s.back() != '"') syntax(line, "bad string " + s);
  const std::string body = s.substr(1, s.size() - 2);
  if (body.find('"') != std::string::npos) syntax(line, "embedded quote in " + s);
  return body;
}

ConfigValue parse_value(const std::string& raw, std::size_t line) {
  const std::string s = trim(raw);
  if (s.empty()) syntax(line, "missing value");
  if (s == "true") return true;
  if (s == "false") return false;
  if (s.front() == '"') return parse_string(s, line);
  if (s.front() == '[') {
    if (s.back() != ']') syntax(line, "unterminated array");
    std::vector<std::string> items;
    std::string cur;
    bool in_str = false;
    for (char c : s.substr(1, s.size() - 2)) {
      if (c == '"') in_str = !in_str;
      if (c == ',' && !in_str) {
        items.push_back(trim(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!trim(cur).empty()) items.push_back(trim(cur));
    if (items.empty()) return std::vector<double>{};
    if (items.front().front() == '"') {
      std::vector<std::string> out;
      for (const auto& it : items) out.push_back(parse_string(it, line));
      return out;
    }
    std::vector<double> out;
    for (const auto& it : items) out.push_back(parse_number(it, line));
    return out;
  }
  return parse_number(s, line);
}

// ---------------------------------------------------------------------------
// Schema: one binding per key, shared by the reader and the writer.

struct Binding {
  std::string key;
  std::function<void(RunConfig&, const ConfigValue&, const std::filesystem::path&)> set;
  std::function<std::string(const RunConfig&)> get;
};

[[noreturn]] void type_error(const std::string& key, const char* want) {
  throw ConfigError("config key '" + key + "': expected " + want);
}

double as_double(const std::string& key, const ConfigValue& v) {
  if (const double* d = std::get_if<double>(&v)) return *d;
  type_error(key, "a number");
}

std::string quote(const std::string& s) { return "\"" + s + "\""; }

std::string number_list(const double* x, int n) {
  std::string out = "[";
  for (int i = 0; i < n; ++i) out += (i ? ", " : "") + format_double(x[i]);
  return out + "]";
}

template <class Get>
Binding num(std::string key, Get ref) {
  return {key,
          [key, ref](RunConfig& c, const ConfigValue& v, const std::filesystem::path&) {
            ref(c) = as_double(key, v);
          },
          [ref](const RunConfig& c) { return format_double(ref(const_cast<RunConfig&>(c))); }};
}

template <class Get>
Binding count(std::string key, Get ref) {
  return {key,
          [key, ref](RunConfig& c, const ConfigValue& v, const std::filesystem::path&) {
            const double d = as_double(key, v);
            if (d < 0 || d != std::floor(d) || d > 1e15) type_error(key, "a non-negative integer");
            ref(c) = static_cast<std::size_t>(d);
          },
          [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); }};
}

template <class Get>
Binding flag(std::string key, Get ref) {
  return {key,
          [key, ref](RunConfig& c, const ConfigValue& v, const std::filesystem::path&) {
            const bool* b = std::get_if<bool>(&v);
            if (!b) type_error(key, "true or false");
            ref(c) = *b;
          },
          [ref](const RunConfig& c) {
            return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false");
          }};
}

// Vec3 from [x, y, z]; a scalar fills all three components.
template <class Get>
Binding vec3(std::string key, Get ref) {
  return {key,
          [key, ref](RunConfig& c, const ConfigValue& v, const std::filesystem::path&) {
            if (const double* d = std::get_if<double>(&v)) {
              ref(c) = Vec3::Constant(*d);
              return;
            }
            const auto* a = std::get_if<std::vector<double>>(&v);
            if (!a || a->size() != 3) type_error(key, "a number or a 3-element array");
            ref(c) = Vec3((*a)[0], (*a)[1], (*a)[2]);
          },
          [ref](const RunConfig& c) {
            const Vec3 x = ref(const_cast<RunConfig&>(c));
            return number_list(x.data(), 3);
          }};
}

// Quaternion as [w, x, y, z], normalised on read.
template <class Get>
Binding quat(std::string key, Get ref) {
  return {key,
          [key, ref](RunConfig& c, const ConfigValue& v, const std::filesystem::path&) {
            const auto* a = std::get_if<std::vector<double>>(&v);
            if (!a || a->size() != 4) type_error(key, "a 4-element array [w, x, y, z]");
            const Vec4 q((*a)[0], (*a)[1], (*a)[2], (*a)[3]);
            if (!(q.norm() > 1e-12)) type_error(key, "a non-zero quaternion");
            ref(c) = UnitQuaternion(q);
          },
          [ref](const RunConfig& c) {
            const Vec4 q = ref(const_cast<RunConfig&>(c)).coeffs();
            return number_list(q.data(), 4);
          }};
}

template <class Get, class Parse, class Print>
Binding choice(std::string key, Get ref, Parse parse, Print print) {
  return {key,
          [key, ref, parse](RunConfig& c, const ConfigValue& v, const std::filesystem::path&) {
            const auto* s = std::get_if<std::string>(&v);
            if (!s) type_error(key, "a string");
            try {
              ref(c) = parse(*s);
            } catch (const std::invalid_argument& e) {
              throw ConfigError("config key '" + key + "': " + e.what());
            }
          },
          [ref, print](const RunConfig& c) { return quote(print(ref(const_cast<RunConfig&>(c)))); }};
}

std::filesystem::path resolve(const std::string& s, const std::filesystem::path& base) {
  if (s.empty()) return {};
  const std::filesystem::path p(s);
  return p.is_absolute() || base.empty() ? p : base / p;
}

template <class Get>
Binding path(std::string key, Get ref) {
  return {key,
          [key, ref](RunConfig& c, const ConfigValue& v, const std::filesystem::path& base) {
            const auto* s = std::get_if<std::string>(&v);
            if (!s) type_error(key, "a path string");
            ref(c) = resolve(*s, base);
          },
          [ref](const RunConfig& c) { return quote(ref(const_cast<RunConfig&>(c)).string()); }};
}

template <class Get>
Binding paths3(std::string key, Get ref) {
  return {key,
          [key, ref](RunConfig& c, const ConfigValue& v, const std::filesystem::path& base) {
            const auto* a = std::get_if<std::vector<std::string>>(&v);
            if (!a || a->size() != 3) type_error(key, "3 path strings (x, y, z)");
            for (int i = 0; i < 3; ++i) ref(c)[i] = resolve((*a)[i], base);
          },
          [ref](const RunConfig& c) {
            const auto& p = ref(const_cast<RunConfig&>(c));
            return "[" + quote(p[0].string()) + ", " + quote(p[1].string()) + ", " +
                   quote(p[2].string()) + "]";
          }};
}

YawMode parse_yaw(const std::string& s) {
  if (s == "constant") return YawMode::Constant;
  if (s == "forward") return YawMode::Forward;
  throw std::invalid_argument("unknown yaw mode '" + s + "'");
}
std::string print_yaw(YawMode m) { return m == YawMode::Constant ? "constant" : "forward"; }

ResidualModel::Kind parse_residual(const std::string& s) {
  if (s == "zero") return ResidualModel::Kind::Zero;
  if (s == "constant") return ResidualModel::Kind::Constant;
  if (s == "quad_drag") return ResidualModel::Kind::QuadDrag;
  throw std::invalid_argument("unknown residual model '" + s + "'");
}
std::string print_residual(ResidualModel::Kind k) {
  switch (k) {
    case ResidualModel::Kind::Zero: return "zero";
    case ResidualModel::Kind::Constant: return "constant";
    case ResidualModel::Kind::QuadDrag: return "quad_drag";
  }
  return "zero";
}

AnchorMode parse_anchor(const std::string& s) {
  if (s == "known") return AnchorMode::Known;
  if (s == "consider") return AnchorMode::Consider;
  throw std::invalid_argument("unknown anchor mode '" + s + "'");
}
std::string print_anchor(AnchorMode m) { return m == AnchorMode::Known ? "known" : "consider"; }

ProviderMode parse_mode(const std::string& s) {
  try {
    return parse_provider_mode(s);
  } catch (const Error& e) {
    throw std::invalid_argument(e.what());
  }
}
std::string print_mode(ProviderMode m) { return to_string(m); }

#define REF(expr) [](RunConfig& c) -> auto& { return c.expr; }

const std::vector<Binding>& schema() {
  static const std::vector<Binding> table = {
      {"seed",
       [](RunConfig& c, const ConfigValue& v, const std::filesystem::path&) {
         const double d = as_double("seed", v);
         if (d < 0 || d != std::floor(d) || d > 9.007199254740992e15)
           type_error("seed", "a non-negative integer below 2^53");
         c.seed = static_cast<std::uint64_t>(d);
       },
       [](const RunConfig& c) { return std::to_string(c.seed); }},

      choice("sim.trajectory", REF(sim.trajectory.kind), parse_trajectory_kind,
             [](TrajectoryKind k) { return to_string(k); }),
      num("sim.duration", REF(sim.trajectory.duration)),
      num("sim.radius", REF(sim.trajectory.radius)),
      num("sim.scale", REF(sim.trajectory.scale)),
      num("sim.period", REF(sim.trajectory.period)),
      num("sim.amplitude", REF(sim.trajectory.amplitude)),
      num("sim.max_speed", REF(sim.trajectory.max_speed)),
      {"sim.sinusoids",
       [](RunConfig& c, const ConfigValue& v, const std::filesystem::path&) {
         const double d = as_double("sim.sinusoids", v);
         if (d < 1 || d != std::floor(d) || d > 64) type_error("sim.sinusoids", "an integer in [1, 64]");
         c.sim.trajectory.sinusoids = static_cast<int>(d);
       },
       [](const RunConfig& c) { return std::to_string(c.sim.trajectory.sinusoids); }},
      {"sim.trajectory_seed",
       [](RunConfig& c, const ConfigValue& v, const std::filesystem::path&) {
         const double d = as_double("sim.trajectory_seed", v);
         if (d < 0 || d != std::floor(d) || d > 9.007199254740992e15)
           type_error("sim.trajectory_seed", "a non-negative integer below 2^53");
         c.sim.trajectory.seed = static_cast<std::uint64_t>(d);
       },
       [](const RunConfig& c) { return std::to_string(c.sim.trajectory.seed); }},
      choice("sim.yaw_mode", REF(sim.trajectory.yaw_mode), parse_yaw, print_yaw),
      num("sim.yaw0", REF(sim.trajectory.yaw0)),
      vec3("sim.origin", REF(sim.trajectory.origin)),
      num("sim.f_imu", REF(sim.options.f_imu)),
      num("sim.f_rotor", REF(sim.options.f_rotor)),
      num("sim.divergence_radius", REF(sim.options.divergence_radius)),
      choice("sim.residual", REF(sim.residual.kind), parse_residual, print_residual),
      vec3("sim.residual_c", REF(sim.residual.c)),
      num("sim.residual_k", REF(sim.residual.k)),
      num("sim.controller.kp", REF(sim.options.gains.kp)),
      num("sim.controller.kd", REF(sim.options.gains.kd)),
      num("sim.controller.k_att", REF(sim.options.gains.k_att)),
      num("sim.controller.k_rate", REF(sim.options.gains.k_rate)),
      num("sim.controller.max_rate", REF(sim.options.gains.max_rate)),

      vec3("noise.sigma_gyro", REF(noise.sigma_gyro)),
      vec3("noise.sigma_accel", REF(noise.sigma_accel)),
      vec3("noise.sigma_bg_walk", REF(noise.sigma_bg_walk)),
      vec3("noise.sigma_ba_walk", REF(noise.sigma_ba_walk)),
      vec3("noise.b_gyro0", REF(noise.b_gyro0)),
      vec3("noise.b_accel0", REF(noise.b_accel0)),

      num("params.mass", REF(params.mass)),
      num("params.tau", REF(params.tau)),
      vec3("params.d", REF(params.d)),
      quat("params.q_IB", REF(params.q_IB)),
      vec3("params.t_IB", REF(params.t_IB)),

      num("filter.sigma_gyro", REF(filter.sigma_gyro)),
      num("filter.sigma_accel", REF(filter.sigma_accel)),
      num("filter.sigma_gravity", REF(filter.sigma_gravity)),
      num("filter.gravity_norm_gate", REF(filter.gravity_norm_gate)),
      count("filter.gravity_every", REF(filter.gravity_every)),
      num("filter.sigma_tau_walk", REF(filter.sigma_tau_walk)),
      num("filter.sigma_d_walk", REF(filter.sigma_d_walk)),
      num("filter.sigma_q_IB_walk", REF(filter.sigma_q_IB_walk)),
      num("filter.sigma_t_IB_walk", REF(filter.sigma_t_IB_walk)),
      num("filter.scale_accel", REF(filter.scale_accel)),
      num("filter.scale_vp", REF(filter.scale_vp)),
      flag("filter.gate", REF(filter.gate)),
      num("filter.gate_quantile", REF(filter.gate_quantile)),
      choice("filter.anchor", REF(filter.anchor), parse_anchor, print_anchor),
      num("filter.rate_cutoff_hz", REF(filter.rate_cutoff_hz)),
      num("filter.attitude_coupling_s", REF(filter.attitude_coupling_s)),
      flag("filter.gravity_update", REF(filter.gravity_update)),
      flag("filter.accel_update", REF(filter.accel_update)),
      flag("filter.vp_update", REF(filter.vp_update)),
      num("filter.init.tau", REF(filter.init.tau)),
      vec3("filter.init.d", REF(filter.init.d)),
      quat("filter.init.q_IB", REF(filter.init.q_IB)),
      vec3("filter.init.t_IB", REF(filter.init.t_IB)),
      num("filter.cov.q", REF(filter.init.var_q)),
      num("filter.cov.p", REF(filter.init.var_p)),
      num("filter.cov.v", REF(filter.init.var_v)),
      num("filter.cov.tau", REF(filter.init.var_tau)),
      num("filter.cov.d", REF(filter.init.var_d)),
      num("filter.cov.q_IB", REF(filter.init.var_q_IB)),
      num("filter.cov.t_IB", REF(filter.init.var_t_IB)),

      choice("providers.debias.mode", REF(providers.debias.mode), parse_mode, print_mode),
      num("providers.debias.sigma_gyro", REF(providers.debias.sigma_gyro)),
      num("providers.debias.sigma_accel", REF(providers.debias.sigma_accel)),
      path("providers.debias.weights_gyro", REF(providers.debias.weights_gyro)),
      path("providers.debias.weights_accel", REF(providers.debias.weights_accel)),
      count("providers.debias.window", REF(providers.debias.window)),
      count("providers.debias.stride", REF(providers.debias.stride)),
      choice("providers.residual.mode", REF(providers.residual.mode), parse_mode, print_mode),
      num("providers.residual.sigma", REF(providers.residual.sigma)),
      num("providers.residual.null_sigma", REF(providers.residual.null_sigma)),
      path("providers.residual.weights", REF(providers.residual.weights)),
      num("providers.residual.cov_scale", REF(providers.residual.cov_scale)),
      count("providers.residual.window", REF(providers.residual.window)),
      count("providers.residual.stride", REF(providers.residual.stride)),
      choice("providers.vp.mode", REF(providers.vp.mode), parse_mode, print_mode),
      num("providers.vp.sigma_v", REF(providers.vp.sigma_v)),
      num("providers.vp.sigma_p", REF(providers.vp.sigma_p)),
      paths3("providers.vp.vnet", REF(providers.vp.vnet)),
      paths3("providers.vp.pnet", REF(providers.vp.pnet)),
      num("providers.vp.cov_scale", REF(providers.vp.cov_scale)),
      count("providers.vp.window", REF(providers.vp.window)),
      count("providers.vp.sequence", REF(providers.vp.sequence)),

      count("study.runs", REF(study.runs)),
      num("study.perturb_tau", REF(study.perturb_tau)),
      num("study.perturb_d", REF(study.perturb_d)),
      num("study.perturb_q_IB", REF(study.perturb_q_IB)),
      num("study.perturb_t_IB", REF(study.perturb_t_IB)),
      count("study.trace_every", REF(study.trace_every)),
      count("study.threads", REF(study.threads)),
      count("mc.runs", REF(mc.runs)),
      count("mc.threads", REF(mc.threads)),
  };
  return table;
}

#undef REF

std::string section_of(const std::string& key) {
  const auto dot = key.rfind('.');
  return dot == std::string::npos ? std::string() : key.substr(0, dot);
}

}  // namespace

ConfigDocument ConfigDocument::parse(const std::string& text) {
  ConfigDocument doc;
  std::istringstream is(text);
  std::string raw, section;
  std::set<std::string> headers;
  std::size_t line = 0;
  while (std::getline(is, raw)) {
    ++line;
    const std::string s = trim(strip_comment(raw));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3) syntax(line, "bad section header");
      section = trim(s.substr(1, s.size() - 2));
      if (!valid_key(section)) syntax(line, "bad section name '" + section + "'");
      if (!headers.insert(section).second) syntax(line, "duplicate section [" + section + "]");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) syntax(line, "expected key = value");
    const std::string key = trim(s.substr(0, eq));
    if (!valid_key(key)) syntax(line, "bad key '" + key + "'");
    const std::string full = section.empty() ? key : section + "." + key;
    if (doc.values.count(full)) syntax(line, "duplicate key '" + full + "'");
    doc.values.emplace(full, parse_value(s.substr(eq + 1), line));
  }
  return doc;
}

TrajectoryKind parse_trajectory_kind(const std::string& s) {
  if (s == "hover") return TrajectoryKind::Hover;
  if (s == "circle") return TrajectoryKind::Circle;
  if (s == "figure8") return TrajectoryKind::Figure8;
  if (s == "random") return TrajectoryKind::Random;
  if (s == "vertical") return TrajectoryKind::Vertical;
  throw std::invalid_argument("unknown trajectory kind '" + s + "'");
}

std::string to_string(TrajectoryKind k) {
  switch (k) {
    case TrajectoryKind::Hover: return "hover";
    case TrajectoryKind::Circle: return "circle";
    case TrajectoryKind::Figure8: return "figure8";
    case TrajectoryKind::Random: return "random";
    case TrajectoryKind::Vertical: return "vertical";
  }
  return "hover";
}

void sync_derived(RunConfig& c) {
  c.filter.mass = c.params.mass;
  c.providers.vp.truth_t_IB = c.params.t_IB;
}

void RunConfig::validate() const {
  auto wrap = [](const char* section, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(std::string(section) + ": " + e.what());
    }
  };
  wrap("sim", [&] {
    sim.trajectory.validate();
    if (!(sim.options.f_imu > 0) || !(sim.options.f_rotor > 0) || sim.options.f_rotor > sim.options.f_imu)
      throw ConfigError("sim: need f_imu >= f_rotor > 0");
    if (!(sim.options.divergence_radius > 0)) throw ConfigError("sim: divergence_radius must be > 0");
    if (sim.residual.k < 0) throw ConfigError("sim: residual_k must be >= 0");
  });
  wrap("noise", [&] { noise.validate(); });
  wrap("params", [&] { params.validate(); });
  wrap("filter", [&] { filter.validate(); });
  wrap("providers", [&] { providers.validate(); });
  if (!(study.perturb_tau >= 0 && study.perturb_tau < 1) || !(study.perturb_d >= 0) ||
      !(study.perturb_q_IB >= 0) || !(study.perturb_t_IB >= 0))
    throw ConfigError("study: perturbations must be >= 0 (perturb_tau < 1)");
  if (study.trace_every == 0) throw ConfigError("study: trace_every must be positive");
  if (study.runs == 0 || mc.runs == 0) throw ConfigError("study/mc: runs must be positive");
}

RunConfig config_from_document(const ConfigDocument& doc, const std::filesystem::path& base_dir) {
  std::map<std::string, const Binding*> by_key;
  std::set<std::string> sections;
  for (const Binding& b : schema()) {
    by_key.emplace(b.key, &b);
    for (std::string s = section_of(b.key); !s.empty(); s = section_of(s)) sections.insert(s);
  }
  RunConfig c;
  for (const auto& [key, value] : doc.values) {
    const auto it = by_key.find(key);
    if (it == by_key.end()) {
      const std::string sec = section_of(key);
      if (!sec.empty() && !sections.count(sec))
        throw ConfigError("unknown config section [" + sec + "]");
      throw ConfigError("unknown config key '" + key + "'");
    }
    it->second->set(c, value, base_dir);
  }
  sync_derived(c);
  return c;
}

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  return config_from_document(ConfigDocument::parse(text), base_dir);
}

RunConfig load_config(const std::filesystem::path& path, const std::filesystem::path& weights_dir) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), weights_dir.empty() ? path.parent_path() : weights_dir);
}

std::string to_toml(const RunConfig& c) {
  std::ostringstream out;
  std::string current = "\x01";
  for (const Binding& b : schema()) {
    const std::string sec = section_of(b.key);
    if (sec != current) {
      if (!sec.empty()) out << (current == "\x01" ? "" : "\n") << "[" << sec << "]\n";
      current = sec;
    }
    out << b.key.substr(sec.empty() ? 0 : sec.size() + 1) << " = " << b.get(c) << "\n";
  }
  return out.str();
}

}  // namespace dido
