#pragma once

// Command implementations behind tools/jflow.cpp. Each returns an exit code and
// a JSON summary; the executable only parses arguments and prints.

#include <chrono>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "jflow/cone.hpp"
#include "jflow/config.hpp"
#include "jflow/critical.hpp"
#include "jflow/flow.hpp"
#include "jflow/functionals.hpp"
#include "jflow/io.hpp"
#include "jflow/proptest.hpp"
#include "jflow/random.hpp"

namespace jflow {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 1;
inline constexpr int schema = 2;
inline constexpr int inadmissible = 3;
inline constexpr int blowup = 4;
inline constexpr int timeout = 5;
inline constexpr int invariant = 6;
}  // namespace exit_code

struct CommandResult {
  int code = exit_code::ok;
  json result = json::object();
};

// slack allowed when the CLI re-checks monitored invariants
inline constexpr double kInvariantTol = 1e-6;

inline json to_json(const MaxPrincipleReport& m) {
  return {{"band", {m.band_lo, m.band_hi}},
          {"violation", m.violation},
          {"lower_bound", m.lower_bound},
          {"chi_lower", m.chi_lower},
          {"lower_bound_violation", m.lower_bound_violation},
          {"lam_max_nonincreasing", m.lam_max_nonincreasing},
          {"lam_min_nondecreasing", m.lam_min_nondecreasing},
          {"monotonicity_defect", m.monotonicity_defect}};
}

inline CommandResult cmd_flow(const RunConfig& cfg) {
  const FlowProblem pb(cfg.omega, cfg.chi0);
  const PotentialField phi0 = initial_potential(cfg);
  const FlowRun run_out = run(pb, phi0, cfg.flow);
  CommandResult r;
  if (!cfg.output.csv.empty()) {
    std::ofstream os(resolve_path(cfg, cfg.output.csv));
    if (!os) throw std::runtime_error("cannot write " + cfg.output.csv);
    write_csv(os, run_out.samples);
  }
  if (!cfg.output.field.empty()) write_field(resolve_path(cfg, cfg.output.field), run_out.final_state.phi);

  // a run that stops at t = 0 has a single sample and nothing to monitor
  const bool moved = run_out.samples.size() >= 2;
  MaxPrincipleReport mp;
  if (moved) mp = monitor_max_principle(run_out.samples);
  const auto gi = check_gradient_identity(run_out.samples, cfg.flow.monotone_tol);
  const double band = std::max(1.0, std::abs(run_out.band_hi) + std::abs(run_out.band_lo));
  const bool invariants_ok = run_out.band_violation <= kInvariantTol * band && mp.violation <= kInvariantTol * band &&
                             mp.lower_bound_violation <= kInvariantTol * band && run_out.jhat_monotone;
  r.result = {{"verdict", to_string(run_out.verdict)},
              {"message", run_out.message},
              {"c", pb.c},
              {"steps", run_out.steps},
              {"t", run_out.final_state.t},
              {"final_residual", run_out.final_state.residual},
              {"samples", run_out.samples.size()},
              {"band", {run_out.band_lo, run_out.band_hi}},
              {"band_violation", run_out.band_violation},
              {"max_principle", moved ? to_json(mp) : json(nullptr)},
              {"jhat_monotone", run_out.jhat_monotone},
              {"gradient_identity", {{"max_relative_defect", gi.max_relative_defect}, {"monotone", gi.monotone}}},
              {"sup_phi", run_out.final_state.phi.sup()},
              {"inf_phi", run_out.final_state.phi.inf()},
              {"invariants_ok", invariants_ok}};
  switch (run_out.verdict) {
    case Verdict::converged: r.code = invariants_ok ? exit_code::ok : exit_code::invariant; break;
    case Verdict::blowup: r.code = exit_code::blowup; break;
    case Verdict::timeout: r.code = invariants_ok ? exit_code::timeout : exit_code::invariant; break;
  }
  return r;
}

inline json to_json(const NewtonReport& rep) {
  json lin = json::array();
  for (const auto& l : rep.linear)
    lin.push_back({{"method", to_string(l.method)}, {"iterations", l.iterations}, {"relative_residual", l.relative_residual},
                   {"converged", l.converged}});
  return {{"converged", rep.converged},
          {"iterations", rep.iterations},
          {"residual", rep.residual},
          {"residual_history", rep.residual_history},
          {"damping_history", rep.damping_history},
          {"linear_solves", lin},
          {"message", rep.message}};
}

inline CommandResult cmd_critical(const RunConfig& cfg) {
  const FlowProblem pb(cfg.omega, cfg.chi0);
  const auto& set = cfg.critical.settings;
  CommandResult r;
  const auto main = newton_solve(cfg.omega, cfg.chi0, initial_potential(cfg), set);
  r.result["c"] = pb.c;
  r.result["newton"] = to_json(main.report);
  if (!cfg.output.field.empty()) write_field(resolve_path(cfg, cfg.output.field), main.phi);
  if (!main.report.converged) {
    r.code = main.report.iterations >= set.max_iters ? exit_code::timeout : exit_code::blowup;
    return r;
  }
  // pointwise sum 1/lambda_i against nc
  const MetricField chi = metric_field(cfg.chi0, main.phi);
  double worst = 0.0;
  for (std::size_t p = 0; p < chi.size(); ++p)
    worst = std::max(worst, std::abs(trace_pair(chi.form(p), cfg.omega) - pb.n() * pb.c));
  r.result["max_trace_defect"] = worst;

  json starts = json::array();
  double spread = 0.0;
  bool all_converged = true;
  CounterRng rng(cfg.seed, 500);
  const TorusGrid g = cfg.make_grid();
  for (int k = 0; k < cfg.critical.random_starts; ++k) {
    const auto start = random_admissible_potential(rng, g, cfg.chi0, cfg.critical.start_strength);
    const auto res = newton_solve(cfg.omega, cfg.chi0, start, set);
    all_converged = all_converged && res.report.converged;
    const double d = (res.phi + (-1.0) * main.phi).sup_abs();
    spread = std::max(spread, d);
    starts.push_back({{"converged", res.report.converged}, {"iterations", res.report.iterations},
                      {"residual", res.report.residual}, {"sup_distance", d}});
  }
  r.result["random_starts"] = starts;
  r.result["max_sup_distance"] = spread;
  const bool unique = spread <= 2 * set.tol || cfg.critical.random_starts == 0;
  r.result["unique"] = unique;
  if (!all_converged) r.code = exit_code::timeout;
  else if (!unique || worst > 10 * set.tol * pb.n()) r.code = exit_code::invariant;
  return r;
}

inline json to_json(const ConditionVerdict& v) {
  json j{{"holds", v.holds}, {"boundary", v.boundary}, {"index", v.index}};
  j["margin"] = std::isfinite(v.margin) ? json(v.margin) : json("inf");
  return j;
}

inline CommandResult cmd_conditions(const RunConfig& cfg) {
  const FlowProblem pb(cfg.omega, cfg.chi0);
  const int n = pb.n();
  const HermitianForm scaled = HermitianForm::trusted(cfg.chi0.matrix() * (n * pb.c));
  const auto spec = relative_spectrum(cfg.omega, scaled);
  CommandResult r;
  const auto c1 = check_condition(cfg.omega, scaled, Condition::C1);
  const auto c2 = check_condition(cfg.omega, scaled, Condition::C2);
  const auto c3 = check_condition(cfg.omega, scaled, Condition::C3);
  const auto cone = cone_form_positive(cfg.omega, scaled);
  const auto sample = evaluate_conditions(cfg.omega, scaled);
  const auto violations = condition_violations(n, sample);
  std::vector<double> lam(spec.lambdas.data(), spec.lambdas.data() + n);
  const RVector coeff = cone_form_coefficients(cfg.omega, scaled);
  r.result = {{"c", pb.c},
              {"lambdas_nc_chi0", lam},
              {"C1", to_json(c1)},
              {"C2", to_json(c2)},
              {"C3", to_json(c3)},
              {"cone_form", to_json(cone)},
              {"cone_form_coefficients", std::vector<double>(coeff.data(), coeff.data() + n)},
              {"pairing_matrix_positive", sample.pairing},
              {"consistency_violations", violations}};
  if (!violations.empty()) r.code = exit_code::invariant;
  return r;
}

inline CommandResult cmd_functionals(const RunConfig& cfg) {
  const FlowProblem pb(cfg.omega, cfg.chi0);
  const PotentialField phi = initial_potential(cfg);
  if (!metric_field(cfg.chi0, phi).admissible()) throw SingularFormError("phi0 is not admissible");
  auto pi = [](const PathIntegral& p) { return json{{"value", p.value}, {"error_estimate", p.error_estimate}}; };
  const auto ay = eval_IE_JE(cfg.chi0, phi);
  const double ent = eval_entropy(cfg.chi0, phi);
  const int n = pb.n();
  CommandResult r;
  r.result = {{"c", pb.c},
              {"J", pi(eval_J(cfg.omega, cfg.chi0, phi, cfg.path))},
              {"I", pi(eval_I(cfg.chi0, phi, cfg.path))},
              {"Jhat", pi(eval_Jhat(cfg.omega, cfg.chi0, phi, cfg.path))},
              {"IE", ay.IE},
              {"JE", ay.JE},
              {"IE_by_parts", ay.IE_by_parts},
              {"entropy", ent},
              {"mabuchi", pi(eval_mabuchi(cfg.chi0, phi, cfg.path))},
              {"average_scalar_curvature", average_curvature_of_reference(cfg.chi0, phi.grid)},
              {"blowup_monitor", blowup_monitor(cfg.omega, phi)}};
  const bool chain = ay.IE >= 0 && ay.JE >= 0 && ay.IE / (n + 1) <= ay.JE * (1 + 1e-12) &&
                     ay.JE <= ay.IE * n / (n + 1.0) * (1 + 1e-12);
  r.result["aubin_yau_chain"] = chain;
  r.result["entropy_bound"] = ent >= -1e-6;
  if (!chain || ent < -1e-6) r.code = exit_code::invariant;
  return r;
}

inline json divisor_json(const SurfaceLattice& lat, const std::vector<DivisorTerm>& D) {
  json out = json::array();
  for (const auto& t : D) out.push_back({{"curve", lat.curves[t.curve].name}, {"coefficient", to_string(t.coefficient)}});
  return out;
}

inline json certificate_json(const SurfaceLattice& lat, const RVec& alpha, const DivisorSearchResult& d) {
  json j{{"certified", d.certified}, {"message", d.message}};
  if (!d.certified) return j;
  j["divisor"] = divisor_json(lat, d.divisor);
  j["divisor_class"] = format_class(lat, divisor_class(lat, d.divisor));
  j["remainder"] = format_class(lat, d.remainder);
  j["remainder_coordinates"] = to_json(d.remainder);
  j["zariski"] = divisor_json(lat, d.zariski);
  j["margin"] = to_string(d.margin);
  json products = json::object();
  products["square"] = to_string(intersect(lat, d.remainder, d.remainder));
  products["reference"] = to_string(intersect(lat, d.remainder, lat.reference_kahler));
  for (const auto& c : lat.curves) products[c.name] = to_string(intersect(lat, d.remainder, c.cls));
  j["remainder_products"] = products;
  j["sound"] = certificate_sound(lat, alpha, d);
  return j;
}

inline json nakai_json(const SurfaceLattice& lat, const NakaiResult& n) {
  json j{{"passes", n.passes}};
  if (!n.passes) {
    j["witness"] = n.witness;
    j["value"] = to_string(n.value);
    if (n.curve >= 0) j["curve"] = lat.curves[n.curve].name;
  }
  return j;
}

// alpha given directly, or (omega, chi0) giving alpha = 2c chi0 - omega
inline CommandResult cmd_cone(const SurfaceLattice& lat, const std::optional<std::string>& alpha_text,
                              const std::optional<std::string>& omega_text, const std::optional<std::string>& chi0_text) {
  CommandResult r;
  RVec alpha;
  auto parse = [&](const std::string& text, const char* what) {
    try {
      return parse_class(lat, text);
    } catch (const std::invalid_argument& e) {
      throw InputError(what, e.what());
    }
  };
  const auto sig = lat.signature();
  r.result["lattice"] = {{"rank", lat.rank}, {"signature", {sig.positive, sig.negative, sig.zero}}, {"hodge_index", lat.hodge_index()}};
  if (omega_text || chi0_text) {
    if (!omega_text || !chi0_text) throw InputError("--omega/--chi0", "give both classes");
    const RVec w = parse(*omega_text, "--omega"), x = parse(*chi0_text, "--chi0");
    const auto wn = nakai_test(lat, w), xn = nakai_test(lat, x);
    if (!wn.passes || !xn.passes) {
      r.result["omega_nakai"] = nakai_json(lat, wn);
      r.result["chi0_nakai"] = nakai_json(lat, xn);
      r.code = exit_code::inadmissible;
      return r;
    }
    const auto cc = class_condition(lat, w, x);
    r.result["class_condition"] = {{"c", to_string(cc.c)},
                                   {"shifted_class", format_class(lat, cc.shifted)},
                                   {"shifted_square", to_string(cc.shifted_square)},
                                   {"omega_square", to_string(cc.omega_square)},
                                   {"shifted_dot_chi0", to_string(cc.shifted_dot_chi0)},
                                   {"omega_dot_chi0", to_string(cc.omega_dot_chi0)},
                                   {"identities_hold", cc.identities_hold}};
    if (!cc.identities_hold) r.code = exit_code::invariant;
    alpha = cc.shifted;
  } else {
    if (!alpha_text) throw InputError("--alpha", "missing class");
    alpha = parse(*alpha_text, "--alpha");
  }
  r.result["alpha"] = format_class(lat, alpha);
  r.result["alpha_coordinates"] = to_json(alpha);
  const auto nk = nakai_test(lat, alpha);
  r.result["nakai"] = nakai_json(lat, nk);
  const bool hyp = intersect(lat, alpha, alpha) > 0 && intersect(lat, alpha, lat.reference_kahler) > 0;
  if (!hyp) {
    r.result["certificate"] = {{"certified", false}, {"message", "alpha^2 > 0 and alpha.reference > 0 are required"}};
    r.code = exit_code::invariant;
    return r;
  }
  const auto d = divisor_search(lat, alpha);
  r.result["certificate"] = certificate_json(lat, alpha, d);
  if (!d.certified || !certificate_sound(lat, alpha, d)) r.code = exit_code::invariant;
  return r;
}

inline CommandResult cmd_proptest(std::uint64_t seed, const SuiteSizes& sizes) {
  const auto rep = property_suite(seed, sizes);
  CommandResult r;
  r.result = to_json(rep);
  r.code = rep.passed() ? exit_code::ok : exit_code::invariant;
  return r;
}

// filled in by a command body before it starts the real work
struct RunContext {
  json config;
  std::string json_path;
};

// Runs `body`, maps exceptions to exit codes and prints the summary.
inline int run_command(const std::string& name, const std::function<CommandResult(RunContext&)>& body, std::ostream& out,
                       std::ostream& err) {
  const auto t0 = std::chrono::steady_clock::now();
  RunContext ctx;
  CommandResult r;
  std::string error;
  try {
    r = body(ctx);
  } catch (const InputError& e) {
    r.code = exit_code::schema;
    error = e.what();
  } catch (const ShapeError& e) {
    r.code = exit_code::schema;
    error = e.what();
  } catch (const SingularFormError& e) {
    r.code = exit_code::inadmissible;
    error = e.what();
  } catch (const NumericalFailure& e) {
    r.code = exit_code::blowup;
    error = e.what();
  } catch (const std::exception& e) {
    r.code = exit_code::failure;
    error = e.what();
  }
  json summary{{"command", name}, {"exit_code", r.code}};
  if (!ctx.config.is_null()) summary["config"] = ctx.config;
  summary["result"] = r.result;
  if (!error.empty()) {
    summary["error"] = error;
    err << "jflow " << name << ": " << error << "\n";
  }
  summary["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::string text = summary.dump(2) + "\n";
  out << text;
  if (!ctx.json_path.empty()) {
    std::ofstream os(ctx.json_path);
    if (!os) err << "jflow " << name << ": cannot write " << ctx.json_path << "\n";
    os << text;
  }
  return r.code;
}

inline CommandResult dispatch(const RunConfig& cfg, const std::string& command) {
  if (command == "flow") return cmd_flow(cfg);
  if (command == "critical") return cmd_critical(cfg);
  if (command == "conditions") return cmd_conditions(cfg);
  if (command == "functionals") return cmd_functionals(cfg);
  throw InputError("command", "unknown command '" + command + "'");
}

// flow, critical, conditions, functionals
inline int run_config_command(const std::string& name, const std::string& config_path, std::ostream& out, std::ostream& err) {
  return run_command(
      name,
      [&](RunContext& ctx) {
        const RunConfig cfg = load_config(config_path);
        if (!cfg.command.empty() && cfg.command != name)
          throw InputError("command", "config is for '" + cfg.command + "', not '" + name + "'");
        ctx.config = to_json(cfg);
        ctx.json_path = resolve_path(cfg, cfg.output.json);
        return dispatch(cfg, name);
      },
      out, err);
}

inline int run_cone_command(const std::string& lattice_path, const std::optional<std::string>& alpha,
                            const std::optional<std::string>& omega, const std::optional<std::string>& chi0,
                            std::ostream& out, std::ostream& err) {
  return run_command(
      "cone",
      [&](RunContext& ctx) {
        ctx.config = {{"lattice", lattice_path}};
        if (alpha) ctx.config["alpha"] = *alpha;
        if (omega) ctx.config["omega"] = *omega;
        if (chi0) ctx.config["chi0"] = *chi0;
        const SurfaceLattice lat = load_lattice(lattice_path);
        return cmd_cone(lat, alpha, omega, chi0);
      },
      out, err);
}

inline int run_proptest_command(std::uint64_t seed, const SuiteSizes& sizes, std::ostream& out, std::ostream& err) {
  return run_command(
      "proptest",
      [&](RunContext& ctx) {
        ctx.config = {{"seed", seed},
                      {"condition_samples", sizes.condition_samples},
                      {"functional_samples", sizes.functional_samples},
                      {"path_samples", sizes.path_samples},
                      {"cone_samples", sizes.cone_samples}};
        return cmd_proptest(seed, sizes);
      },
      out, err);
}

}  // namespace jflow
