#pragma once

// JSON run configuration. Schema problems raise InputError carrying the field
// path; a metric that is not positive raises SingularFormError.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "jflow/critical.hpp"
#include "jflow/error.hpp"
#include "jflow/flow.hpp"
#include "jflow/functionals.hpp"
#include "jflow/hermitian.hpp"
#include "jflow/io.hpp"
#include "jflow/torus.hpp"

namespace jflow {

using nlohmann::json;

struct GridConfig {
  GridMode mode = GridMode::invariant;
  int N = 32;
  Stencil stencil = Stencil::fd4;
};

struct Phi0Config {
  std::vector<CosineMode> modes;
  std::string file;
};

struct OutputConfig {
  std::string csv;
  std::string json;
  std::string field;
};

struct CriticalConfig {
  NewtonSettings settings;
  // extra random admissible starting potentials for the uniqueness check
  int random_starts = 0;
  double start_strength = 0.5;
};

struct RunConfig {
  std::string command;
  int n = 0;
  GridConfig grid;
  HermitianForm omega;  // after normalization
  HermitianForm omega_input;
  HermitianForm chi0;
  bool normalize = false;
  double normalization_factor = 1.0;
  Phi0Config phi0;
  FlowSettings flow;
  CriticalConfig critical;
  PathSpec path;
  std::uint64_t seed = 0;
  OutputConfig output;
  std::string base_dir;

  TorusGrid make_grid() const { return TorusGrid(n, grid.mode, grid.N, grid.stencil); }
};

namespace detail {

class Section {
public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw InputError(path_.empty() ? "" : path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const {
    used_.insert(key);
    return j_.contains(key);
  }
  const json& raw(const std::string& key) const {
    used_.insert(key);
    return j_.at(key);
  }

  double number(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_number()) throw InputError(at(key), "expected a number");
    return v.get<double>();
  }
  long long integer(const std::string& key, long long fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) throw InputError(at(key), "expected an integer");
    return v.get<long long>();
  }
  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) throw InputError(at(key), "expected true or false");
    return v.get<bool>();
  }
  std::string string(const std::string& key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_string()) throw InputError(at(key), "expected a string");
    return v.get<std::string>();
  }

  void reject_unknown() const {
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k)) throw InputError(at(k), "unknown field");
  }

private:
  const json& j_;
  std::string path_;
  mutable std::set<std::string> used_;
};

inline void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw InputError(path, what);
}

inline CMatrix real_rows(const json& rows, const std::string& path) {
  require(rows.is_array() && !rows.empty(), path, "expected a square array of rows");
  const auto n = static_cast<Eigen::Index>(rows.size());
  require(n <= kMaxDim, path, "dimension exceeds " + std::to_string(kMaxDim));
  CMatrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    const std::string rp = path + "[" + std::to_string(i) + "]";
    require(row.is_array() && static_cast<Eigen::Index>(row.size()) == n, rp, "row has wrong length");
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& v = row[static_cast<std::size_t>(j)];
      require(v.is_number(), rp + "[" + std::to_string(j) + "]", "expected a number");
      m(i, j) = v.get<double>();
    }
  }
  return m;
}

// [[..]], {"re": [[..]], "im": [[..]]}, {"diagonal": [..]} or a scalar times the identity
inline CMatrix parse_matrix(const json& j, const std::string& path, int n_hint) {
  if (j.is_number()) {
    require(n_hint > 0, path, "a scalar needs an explicit n");
    return j.get<double>() * CMatrix::Identity(n_hint, n_hint);
  }
  if (j.is_array()) return real_rows(j, path);
  Section s(j, path);
  CMatrix m;
  if (s.has("diagonal")) {
    const auto& d = s.raw("diagonal");
    require(d.is_array() && !d.empty(), s.at("diagonal"), "expected a non-empty array");
    const auto n = static_cast<Eigen::Index>(d.size());
    require(n <= kMaxDim, s.at("diagonal"), "dimension exceeds " + std::to_string(kMaxDim));
    m = CMatrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      require(d[static_cast<std::size_t>(i)].is_number(), s.at("diagonal") + "[" + std::to_string(i) + "]", "expected a number");
      m(i, i) = d[static_cast<std::size_t>(i)].get<double>();
    }
  } else {
    require(s.has("re"), s.at("re"), "missing");
    m = real_rows(s.raw("re"), s.at("re"));
    if (s.has("im")) {
      const CMatrix im = real_rows(s.raw("im"), s.at("im"));
      require(im.rows() == m.rows(), s.at("im"), "size differs from re");
      m += cplx(0.0, 1.0) * im;
    }
  }
  s.reject_unknown();
  return m;
}

inline HermitianForm parse_form(const json& j, const std::string& path, int n_hint) {
  const CMatrix m = parse_matrix(j, path, n_hint);
  HermitianForm f;
  try {
    f = HermitianForm(m);
  } catch (const ShapeError& e) {
    throw InputError(path, e.what());
  }
  if (!f.is_positive()) throw SingularFormError(path + ": matrix is not positive definite");
  return f;
}

inline json matrix_to_json(const CMatrix& m) {
  json re = json::array(), im = json::array();
  bool complex = false;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array(), c = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      r.push_back(m(i, j).real());
      c.push_back(m(i, j).imag());
      complex = complex || m(i, j).imag() != 0.0;
    }
    re.push_back(r);
    im.push_back(c);
  }
  if (!complex) return re;
  return {{"re", re}, {"im", im}};
}

}  // namespace detail

inline const std::vector<std::string>& known_commands() {
  static const std::vector<std::string> c = {"flow", "critical", "conditions", "functionals"};
  return c;
}

inline RunConfig config_from_json(const json& root, const std::string& base_dir = ".") {
  detail::Section top(root, "");
  RunConfig cfg;
  cfg.base_dir = base_dir;
  cfg.command = top.string("command", "");
  if (!cfg.command.empty())
    detail::require(std::find(known_commands().begin(), known_commands().end(), cfg.command) != known_commands().end(),
                    "command", "unknown command '" + cfg.command + "'");
  const long long n_hint = top.integer("n", 0);
  detail::require(n_hint >= 0 && n_hint <= kMaxDim, "n", "must lie in 1.." + std::to_string(kMaxDim));

  if (top.has("grid")) {
    detail::Section g(top.raw("grid"), "grid");
    const std::string mode = g.string("mode", "invariant");
    detail::require(mode == "invariant" || mode == "full", g.at("mode"), "expected \"invariant\" or \"full\"");
    cfg.grid.mode = mode == "invariant" ? GridMode::invariant : GridMode::full;
    const long long N = g.integer("N", 32);
    detail::require(N >= 8 && N % 2 == 0 && N <= 4096, g.at("N"), "must be even and >= 8");
    cfg.grid.N = static_cast<int>(N);
    const std::string st = g.string("stencil", "fd4");
    detail::require(st == "fd4" || st == "spectral", g.at("stencil"), "expected \"fd4\" or \"spectral\"");
    cfg.grid.stencil = st == "fd4" ? Stencil::fd4 : Stencil::spectral;
    g.reject_unknown();
  }

  detail::require(top.has("omega"), "omega", "missing");
  detail::require(top.has("chi0"), "chi0", "missing");
  cfg.omega = detail::parse_form(top.raw("omega"), "omega", static_cast<int>(n_hint));
  cfg.chi0 = detail::parse_form(top.raw("chi0"), "chi0", static_cast<int>(n_hint));
  cfg.omega_input = cfg.omega;
  cfg.n = cfg.omega.dim();
  detail::require(cfg.chi0.dim() == cfg.n, "chi0", "dimension differs from omega");
  detail::require(n_hint == 0 || n_hint == cfg.n, "n", "does not match the size of omega");

  cfg.normalize = top.boolean("normalize", false);
  if (cfg.normalize) {
    const double c = class_constant_c(cfg.omega, cfg.chi0);
    cfg.normalization_factor = 1.0 / (cfg.n * c);
    cfg.omega = HermitianForm::trusted(cfg.omega.matrix() * cfg.normalization_factor);
  }

  const int axes = cfg.grid.mode == GridMode::invariant ? cfg.n : 2 * cfg.n;
  if (top.has("phi0")) {
    const auto& p = top.raw("phi0");
    const json* modes = nullptr;
    std::string mpath = "phi0";
    if (p.is_array()) {
      modes = &p;
    } else {
      detail::Section ps(p, "phi0");
      if (ps.has("modes")) {
        modes = &ps.raw("modes");
        mpath = "phi0.modes";
      }
      cfg.phi0.file = ps.string("file", "");
      detail::require(!(modes && !cfg.phi0.file.empty()), "phi0", "give either modes or file, not both");
      ps.reject_unknown();
    }
    if (modes) {
      detail::require(modes->is_array(), mpath, "expected an array of modes");
      for (std::size_t k = 0; k < modes->size(); ++k) {
        const std::string mp = mpath + "[" + std::to_string(k) + "]";
        detail::Section m((*modes)[k], mp);
        CosineMode cm;
        detail::require(m.has("wavevector") && m.raw("wavevector").is_array(), m.at("wavevector"), "missing or not an array");
        for (const auto& kv : m.raw("wavevector")) {
          detail::require(kv.is_number_integer(), m.at("wavevector"), "entries must be integers");
          cm.wavevector.push_back(kv.get<int>());
        }
        detail::require(static_cast<int>(cm.wavevector.size()) == axes, m.at("wavevector"),
                        "needs " + std::to_string(axes) + " entries for this grid");
        cm.amplitude = m.number("amplitude", 0.0);
        cm.phase = m.number("phase", 0.0);
        m.reject_unknown();
        cfg.phi0.modes.push_back(std::move(cm));
      }
    }
  }

  if (top.has("flow")) {
    detail::Section f(top.raw("flow"), "flow");
    auto& s = cfg.flow;
    s.tol = f.number("tol", s.tol);
    detail::require(s.tol > 0, f.at("tol"), "must be positive");
    s.t_max = f.number("t_max", s.t_max);
    detail::require(s.t_max > 0, f.at("t_max"), "must be positive");
    s.safety = f.number("safety", s.safety);
    detail::require(s.safety > 0 && s.safety <= 1, f.at("safety"), "must lie in (0, 1]");
    s.sample_every = static_cast<int>(f.integer("sample_every", s.sample_every));
    detail::require(s.sample_every >= 1, f.at("sample_every"), "must be >= 1");
    s.blowup_ceiling = f.number("blowup_ceiling", s.blowup_ceiling);
    detail::require(s.blowup_ceiling > 0, f.at("blowup_ceiling"), "must be positive");
    s.monotone_window = static_cast<int>(f.integer("monotone_window", s.monotone_window));
    detail::require(s.monotone_window >= 1, f.at("monotone_window"), "must be >= 1");
    s.monotone_tol = f.number("monotone_tol", s.monotone_tol);
    detail::require(s.monotone_tol >= 0, f.at("monotone_tol"), "must be >= 0");
    const long long ms = f.integer("max_steps", static_cast<long long>(s.max_steps));
    detail::require(ms >= 1, f.at("max_steps"), "must be >= 1");
    s.max_steps = static_cast<std::size_t>(ms);
    s.monitor.functionals = f.boolean("functionals", s.monitor.functionals);
    s.monitor.mabuchi = f.boolean("mabuchi", s.monitor.mabuchi);
    f.reject_unknown();
  }

  if (top.has("critical")) {
    detail::Section c(top.raw("critical"), "critical");
    auto& s = cfg.critical.settings;
    s.tol = c.number("tol", s.tol);
    detail::require(s.tol > 0, c.at("tol"), "must be positive");
    s.max_iters = static_cast<int>(c.integer("max_iters", s.max_iters));
    detail::require(s.max_iters >= 0, c.at("max_iters"), "must be >= 0");
    s.damping = c.number("damping", s.damping);
    detail::require(s.damping > 0 && s.damping <= 1, c.at("damping"), "must lie in (0, 1]");
    s.damping_floor = c.number("damping_floor", s.damping_floor);
    detail::require(s.damping_floor > 0 && s.damping_floor <= s.damping, c.at("damping_floor"), "must lie in (0, damping]");
    s.linear_tol = c.number("linear_tol", s.linear_tol);
    detail::require(s.linear_tol > 0, c.at("linear_tol"), "must be positive");
    s.linear_max_iters = static_cast<int>(c.integer("linear_max_iters", s.linear_max_iters));
    detail::require(s.linear_max_iters >= 1, c.at("linear_max_iters"), "must be >= 1");
    cfg.critical.random_starts = static_cast<int>(c.integer("random_starts", 0));
    detail::require(cfg.critical.random_starts >= 0, c.at("random_starts"), "must be >= 0");
    cfg.critical.start_strength = c.number("start_strength", cfg.critical.start_strength);
    detail::require(cfg.critical.start_strength > 0 && cfg.critical.start_strength < 1, c.at("start_strength"),
                    "must lie in (0, 1)");
    c.reject_unknown();
  }

  if (top.has("path")) {
    detail::Section p(top.raw("path"), "path");
    const std::string kind = p.string("kind", "linear");
    detail::require(kind == "linear" || kind == "quadratic", p.at("kind"), "expected \"linear\" or \"quadratic\"");
    cfg.path.kind = kind == "linear" ? PathKind::linear : PathKind::quadratic;
    cfg.path.steps = static_cast<int>(p.integer("steps", 64));
    detail::require(cfg.path.steps >= 16, p.at("steps"), "must be >= 16");
    cfg.path.richardson = p.boolean("richardson", true);
    p.reject_unknown();
  }

  if (top.has("seed")) {
    const auto& s = top.raw("seed");
    detail::require(s.is_number_unsigned() || (s.is_number_integer() && s.get<long long>() >= 0), "seed",
                    "expected a non-negative integer");
    cfg.seed = s.get<std::uint64_t>();
  }

  if (top.has("output")) {
    detail::Section o(top.raw("output"), "output");
    cfg.output.csv = o.string("csv", "");
    cfg.output.json = o.string("json", "");
    cfg.output.field = o.string("field", "");
    o.reject_unknown();
  }
  top.reject_unknown();
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("", "cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError("", std::string("config is not valid JSON: ") + e.what());
  }
  const auto dir = std::filesystem::path(path).parent_path();
  return config_from_json(j, dir.empty() ? "." : dir.string());
}

inline std::string resolve_path(const RunConfig& cfg, const std::string& p) {
  if (p.empty() || std::filesystem::path(p).is_absolute()) return p;
  return (std::filesystem::path(cfg.base_dir) / p).string();
}

inline PotentialField initial_potential(const RunConfig& cfg) {
  const TorusGrid g = cfg.make_grid();
  if (!cfg.phi0.file.empty()) {
    GridFunction f = read_field(resolve_path(cfg, cfg.phi0.file), cfg.grid.stencil, "phi0.file");
    if (!(f.grid == g)) throw InputError("phi0.file", "field grid does not match the configured grid");
    return f;
  }
  return cosine_modes(g, cfg.phi0.modes);
}

// Fully materialized config, echoed into every run summary.
inline json to_json(const RunConfig& cfg) {
  json j;
  if (!cfg.command.empty()) j["command"] = cfg.command;
  j["n"] = cfg.n;
  j["grid"] = {{"mode", to_string(cfg.grid.mode)}, {"N", cfg.grid.N}, {"stencil", to_string(cfg.grid.stencil)}};
  j["omega"] = detail::matrix_to_json(cfg.omega_input.matrix());
  j["chi0"] = detail::matrix_to_json(cfg.chi0.matrix());
  j["normalize"] = cfg.normalize;
  if (cfg.normalize) {
    j["normalization_factor"] = cfg.normalization_factor;
    j["omega_normalized"] = detail::matrix_to_json(cfg.omega.matrix());
  }
  if (!cfg.phi0.file.empty()) {
    j["phi0"] = {{"file", cfg.phi0.file}};
  } else {
    json modes = json::array();
    for (const auto& m : cfg.phi0.modes) modes.push_back({{"wavevector", m.wavevector}, {"amplitude", m.amplitude}, {"phase", m.phase}});
    j["phi0"] = {{"modes", modes}};
  }
  const auto& f = cfg.flow;
  j["flow"] = {{"tol", f.tol},
               {"t_max", f.t_max},
               {"safety", f.safety},
               {"sample_every", f.sample_every},
               {"blowup_ceiling", f.blowup_ceiling},
               {"monotone_window", f.monotone_window},
               {"monotone_tol", f.monotone_tol},
               {"max_steps", f.max_steps},
               {"functionals", f.monitor.functionals},
               {"mabuchi", f.monitor.mabuchi}};
  const auto& c = cfg.critical.settings;
  j["critical"] = {{"tol", c.tol},
                   {"max_iters", c.max_iters},
                   {"damping", c.damping},
                   {"damping_floor", c.damping_floor},
                   {"linear_tol", c.linear_tol},
                   {"linear_max_iters", c.linear_max_iters},
                   {"random_starts", cfg.critical.random_starts},
                   {"start_strength", cfg.critical.start_strength}};
  j["path"] = {{"kind", to_string(cfg.path.kind)}, {"steps", cfg.path.steps}, {"richardson", cfg.path.richardson}};
  j["seed"] = cfg.seed;
  j["output"] = {{"csv", cfg.output.csv}, {"json", cfg.output.json}, {"field", cfg.output.field}};
  return j;
}

}  // namespace jflow
