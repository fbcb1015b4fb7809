#pragma once

// J-flow  d phi/dt = c - omega ^ chi^{n-1} / chi^n = c - Lambda_chi(omega) / n
// on a flat torus, integrated with classical RK4 and the explicit parabolic
// step bound of the linearized operator.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "jflow/error.hpp"
#include "jflow/functionals.hpp"
#include "jflow/hermitian.hpp"
#include "jflow/parallel.hpp"
#include "jflow/torus.hpp"

namespace jflow {

/// Constant class data of a flow: omega, chi0 and c = [omega].[chi0]^{n-1} / [chi0]^n.
struct FlowProblem {
  HermitianForm omega;
  HermitianForm chi0;
  double c = 0.0;

  FlowProblem() = default;
  FlowProblem(HermitianForm w, HermitianForm x) : omega(std::move(w)), chi0(std::move(x)) {
    if (omega.dim() != chi0.dim()) throw ShapeError("FlowProblem: omega and chi0 differ in dimension");
    if (!omega.is_positive()) throw SingularFormError("FlowProblem: omega is not positive");
    if (!chi0.is_positive()) throw SingularFormError("FlowProblem: chi0 is not positive");
    c = class_constant_c(omega, chi0);
  }

  int n() const { return omega.dim(); }
};

struct MonitorRecord {
  std::size_t step = 0;
  double t = 0.0;
  double residual = 0.0;
  double lam_min = 0.0;
  double lam_max = 0.0;
  double J = 0.0;
  double I = 0.0;
  double jhat = 0.0;
  double IE = 0.0;
  double JE = 0.0;
  double entropy = 0.0;
  double mabuchi = 0.0;
  double blowup = 0.0;
  double sup_phi = 0.0;
  double inf_phi = 0.0;
  double dt = 0.0;
  /// min over the grid of the smallest eigenvalue of chi relative to chi0
  double margin = 0.0;
  /// min over the grid of the smallest eigenvalue of chi relative to omega
  double chi_over_omega = 0.0;
  /// integral of dJhat/dt = -n int phidot^2 chi^n/n! since the previous sample (trapezoid in time)
  double jhat_rate_integral = 0.0;
};

/// Pointwise evaluation of the right-hand side and the quantities derived from
/// it in the same pass.
struct StageEval {
  GridFunction rhs;
  FormField hessian;
  bool admissible = true;
  double lam_min = 0.0;
  double lam_max = 0.0;
  /// max over the grid of the largest eigenvalue of h = chi^{-1} omega chi^{-1}
  double h_max = 0.0;
  /// -n int rhs^2 det(chi) dV
  double jhat_rate = 0.0;
  double residual = 0.0;
};

inline StageEval evaluate_rhs(const FlowProblem& pb, const PotentialField& phi, bool need_hmax = true) {
  const int n = pb.n();
  StageEval ev;
  ev.hessian = complex_hessian(phi);
  ev.rhs = GridFunction(phi.grid);
  const std::size_t np = phi.size();
  std::vector<double> lam(np), hmax(np, 0.0), rate(np);
  std::vector<char> ok(np, 1);
  const CMatrix w = pb.omega.matrix();
  const CMatrix c0 = pb.chi0.matrix();
  parallel_for(np, [&](std::size_t p) {
    const CMatrix chi = c0 + ev.hessian.at(p);
    CMatrix L, X;
    if (!detail::small_cholesky(chi, L)) {
      ok[p] = 0;
      return;
    }
    detail::small_inverse_from_cholesky(L, X);
    const double Lam = detail::small_trace_product(X, w);
    if (need_hmax) {
      const CMatrix XW = X.lazyProduct(w);
      hmax[p] = detail::small_max_eigenvalue(XW.lazyProduct(X));
    }
    lam[p] = Lam;
    const double f = pb.c - Lam / n;
    ev.rhs.values[p] = f;
    rate[p] = f * f * detail::small_det_from_cholesky(L);
  }, 4096);
  for (std::size_t p = 0; p < np; ++p)
    if (!ok[p] || !std::isfinite(lam[p])) ev.admissible = false;
  if (!ev.admissible) return ev;
  ev.lam_min = std::numeric_limits<double>::infinity();
  ev.lam_max = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < np; ++p) {
    ev.lam_min = std::min(ev.lam_min, lam[p]);
    ev.lam_max = std::max(ev.lam_max, lam[p]);
    ev.h_max = std::max(ev.h_max, hmax[p]);
    ev.residual = std::max(ev.residual, std::abs(ev.rhs.values[p]));
  }
  ev.jhat_rate = -n * pairwise_sum(rate) * phi.grid.cell_volume();
  return ev;
}

struct FlowState {
  double t = 0.0;
  std::size_t step = 0;
  PotentialField phi;
  MetricField chi;
  double residual = 0.0;
  MonitorRecord monitors;
};

/// sup over the grid of |phi| + |Delta_omega phi|.
inline double blowup_monitor(const HermitianForm& omega, const PotentialField& phi) {
  const RealField lap = laplacian_w(omega, phi);
  double m = 0.0;
  for (std::size_t p = 0; p < phi.size(); ++p) m = std::max(m, std::abs(phi[p]) + std::abs(lap[p]));
  return m;
}

/// dt = safety * dx^2 / (2n * max_p lambda_max(h / n)), h = chi^{-1} omega chi^{-1}.
inline double dt_from_hmax(const TorusGrid& g, double h_max, double safety) {
  const int n = g.n();
  const double dx = g.spacing();
  return safety * dx * dx / (2.0 * n * (h_max / n));
}

inline double dt_control(const FlowProblem& pb, const FlowState& state, double safety) {
  if (!(safety > 0.0 && safety <= 1.0)) throw std::invalid_argument("dt_control: safety must lie in (0, 1]");
  const StageEval ev = evaluate_rhs(pb, state.phi);
  if (!ev.admissible) throw SingularFormError("dt_control: state is not admissible");
  return dt_from_hmax(state.phi.grid, ev.h_max, safety);
}

/// Lowest eigenvalue of chi relative to `reference` over the grid.
inline double min_relative_eigenvalue(const MetricField& chi, const HermitianForm& reference) {
  Eigen::LLT<CMatrix> ref(reference.matrix());
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < chi.size(); ++p) m = std::min(m, detail::min_relative_eigenvalue(ref, chi.value(p)));
  return m;
}

struct MonitorOptions {
  /// quadrature for the path functionals in monitor records; the linear-path
  /// integrands of J, I and Jhat are polynomials of degree <= n in t, so a
  /// coarse extrapolated trapezoid rule is exact for n <= 3
  PathSpec path = PathSpec::linear(4);
  bool functionals = true;
  bool mabuchi = true;
};

/// Fill a monitor record for the given potential.
inline MonitorRecord make_record(const FlowProblem& pb, const FlowState& s, const StageEval& ev, double dt,
                                 const MonitorOptions& opt) {
  MonitorRecord r;
  r.step = s.step;
  r.t = s.t;
  r.residual = ev.residual;
  r.lam_min = ev.lam_min;
  r.lam_max = ev.lam_max;
  r.dt = dt;
  r.sup_phi = s.phi.sup();
  r.inf_phi = s.phi.inf();
  r.blowup = blowup_monitor(pb.omega, s.phi);
  r.margin = s.chi.admissibility().margin;
  r.chi_over_omega = min_relative_eigenvalue(s.chi, pb.omega);
  // Jhat is translation invariant; evaluating it on the mean-free potential avoids cancellation
  PotentialField centered = s.phi;
  centered += -centered.mean();
  r.jhat = eval_Jhat(pb.omega, pb.chi0, centered, opt.path).value;
  if (opt.functionals) {
    r.J = eval_J(pb.omega, pb.chi0, s.phi, opt.path).value;
    r.I = eval_I(pb.chi0, s.phi, opt.path).value;
    const AubinYau ay = eval_IE_JE(pb.chi0, s.phi);
    r.IE = ay.IE;
    r.JE = ay.JE;
    r.entropy = eval_entropy(pb.chi0, s.phi);
    if (opt.mabuchi) r.mabuchi = eval_mabuchi(pb.chi0, s.phi, opt.path).value;
  }
  return r;
}

/// One classical RK4 step. Returns std::nullopt if any stage or the result
/// leaves the admissible set.
inline std::optional<PotentialField> rk4_step(const FlowProblem& pb, const PotentialField& phi, const StageEval& k1,
                                              double dt, StageEval* end_eval = nullptr) {
  auto axpy = [](const PotentialField& base, double a, const GridFunction& k) {
    PotentialField out = base;
    for (std::size_t p = 0; p < out.size(); ++p) out.values[p] += a * k.values[p];
    return out;
  };
  const StageEval k2 = evaluate_rhs(pb, axpy(phi, 0.5 * dt, k1.rhs), false);
  if (!k2.admissible) return std::nullopt;
  const StageEval k3 = evaluate_rhs(pb, axpy(phi, 0.5 * dt, k2.rhs), false);
  if (!k3.admissible) return std::nullopt;
  const StageEval k4 = evaluate_rhs(pb, axpy(phi, dt, k3.rhs), false);
  if (!k4.admissible) return std::nullopt;
  PotentialField next = phi;
  for (std::size_t p = 0; p < next.size(); ++p)
    next.values[p] += dt / 6.0 * (k1.rhs[p] + 2.0 * k2.rhs[p] + 2.0 * k3.rhs[p] + k4.rhs[p]);
  for (double v : next.values)
    if (!std::isfinite(v)) throw NumericalFailure("rk4_step: non-finite potential");
  StageEval e = evaluate_rhs(pb, next);
  if (!e.admissible) return std::nullopt;
  if (end_eval) *end_eval = std::move(e);
  return next;
}

/// Public single step: RK4 update of the state with monitors refreshed.
/// Throws SingularFormError when the step leaves the admissible set.
inline FlowState step(const FlowProblem& pb, const FlowState& state, double dt, const MonitorOptions& opt = {}) {
  const StageEval k1 = evaluate_rhs(pb, state.phi);
  if (!k1.admissible) throw SingularFormError("step: state is not admissible");
  StageEval end;
  auto next = rk4_step(pb, state.phi, k1, dt, &end);
  if (!next) throw SingularFormError("step: flow left the admissible set (blow-up event)");
  FlowState out;
  out.t = state.t + dt;
  out.step = state.step + 1;
  out.phi = std::move(*next);
  out.chi = metric_field(pb.chi0, out.phi);
  out.residual = end.residual;
  out.monitors = make_record(pb, out, end, dt, opt);
  return out;
}

enum class Verdict { converged, blowup, timeout };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::converged: return "converged";
    case Verdict::blowup: return "blowup";
    case Verdict::timeout: return "timeout";
  }
  return "?";
}

struct FlowSettings {
  double tol = 1e-8;
  double t_max = 1000.0;
  double safety = 0.9;
  int sample_every = 10;
  double blowup_ceiling = 1e6;
  /// Jhat must be non-increasing over this many trailing samples for `converged`
  int monotone_window = 100;
  /// allowed increase of Jhat between samples, relative to max(|Jhat|, |Jhat(0)|)
  double monotone_tol = 1e-10;
  std::size_t max_steps = 50'000'000;
  MonitorOptions monitor;
};

struct FlowRun {
  Verdict verdict = Verdict::timeout;
  std::string message;
  std::vector<MonitorRecord> samples;
  FlowState final_state;
  std::size_t steps = 0;
  /// initial band [inf, sup] of Lambda_chi omega
  double band_lo = 0.0;
  double band_hi = 0.0;
  /// largest excursion of Lambda outside the initial band over all steps
  double band_violation = 0.0;
  bool jhat_monotone = true;
  double wall_time_s = 0.0;
};

/// Flow from phi0 until the sup-residual drops below tol, the flow blows up,
/// or t exceeds t_max. A sample is recorded at t = 0, every `sample_every`
/// steps and at termination.
inline FlowRun run(const FlowProblem& pb, const PotentialField& phi0, const FlowSettings& set) {
  const auto start = std::chrono::steady_clock::now();
  if (set.sample_every < 1) throw std::invalid_argument("run: sample_every must be >= 1");
  if (!(set.tol > 0.0)) throw std::invalid_argument("run: tol must be positive");
  if (pb.n() != phi0.grid.n()) throw ShapeError("run: grid dimension does not match the forms");

  FlowRun out;
  FlowState s;
  s.phi = phi0;
  s.chi = metric_field(pb.chi0, phi0);
  if (!s.chi.admissible()) throw SingularFormError("run: initial potential is not admissible");
  StageEval ev = evaluate_rhs(pb, s.phi);
  if (!ev.admissible) throw SingularFormError("run: initial potential is not admissible");
  s.residual = ev.residual;
  out.band_lo = ev.lam_min;
  out.band_hi = ev.lam_max;

  double dt = dt_from_hmax(phi0.grid, ev.h_max, set.safety);
  s.monitors = make_record(pb, s, ev, dt, set.monitor);
  out.samples.push_back(s.monitors);

  double rate_integral = 0.0;
  auto record_sample = [&](const StageEval& e, double dt_used) {
    s.chi = metric_field(pb.chi0, s.phi);
    s.monitors = make_record(pb, s, e, dt_used, set.monitor);
    s.monitors.jhat_rate_integral = rate_integral;
    rate_integral = 0.0;
    out.samples.push_back(s.monitors);
  };

  auto finish = [&](Verdict v, std::string msg) {
    out.verdict = v;
    out.message = std::move(msg);
    out.final_state = s;
    out.steps = s.step;
    out.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
  };

  auto monotone_tail = [&]() {
    const std::size_t count = out.samples.size();
    const std::size_t first = count > static_cast<std::size_t>(set.monotone_window) + 1
                                  ? count - static_cast<std::size_t>(set.monotone_window) - 1
                                  : 0;
    const double scale = std::max(std::abs(out.samples.front().jhat), std::abs(out.samples.back().jhat));
    for (std::size_t i = first + 1; i < count; ++i)
      if (out.samples[i].jhat > out.samples[i - 1].jhat + set.monotone_tol * scale) return false;
    return true;
  };

  if (s.residual < set.tol) return finish(Verdict::converged, "initial potential is critical");

  std::size_t since_sample = 0;
  while (true) {
    if (s.t >= set.t_max || s.step >= set.max_steps) {
      if (since_sample > 0) record_sample(ev, dt);
      return finish(Verdict::timeout, "t_max reached before convergence");
    }
    dt = dt_from_hmax(s.phi.grid, ev.h_max, set.safety);
    StageEval end;
    auto next = rk4_step(pb, s.phi, ev, dt, &end);
    if (!next) {
      if (since_sample > 0) record_sample(ev, dt);
      return finish(Verdict::blowup, "flow left the admissible set");
    }
    rate_integral += 0.5 * dt * (ev.jhat_rate + end.jhat_rate);
    s.phi = std::move(*next);
    s.t += dt;
    ++s.step;
    ev = std::move(end);
    s.residual = ev.residual;
    out.band_violation = std::max({out.band_violation, ev.lam_max - out.band_hi, out.band_lo - ev.lam_min});

    const bool converged = s.residual < set.tol;
    if (++since_sample == static_cast<std::size_t>(set.sample_every) || converged) {
      record_sample(ev, dt);
      since_sample = 0;
      const auto& prev = out.samples[out.samples.size() - 2];
      const double scale = std::max(std::abs(out.samples.front().jhat), std::abs(s.monitors.jhat));
      if (s.monitors.jhat > prev.jhat + set.monotone_tol * scale) out.jhat_monotone = false;
      if (s.monitors.blowup > set.blowup_ceiling)
        return finish(Verdict::blowup, "blow-up monitor exceeded the ceiling");
    }
    if (converged) {
      if (!monotone_tail()) {
        out.jhat_monotone = false;
        return finish(Verdict::timeout, "residual below tolerance but Jhat not monotone over the trailing window");
      }
      return finish(Verdict::converged, "sup-residual below tolerance");
    }
  }
}

struct MaxPrincipleReport {
  double band_lo = 0.0;
  double band_hi = 0.0;
  /// max over samples of the excursion of [lam_min, lam_max] outside the initial band
  double violation = 0.0;
  /// 1 / sup Lambda_{chi_{phi_0}} omega
  double lower_bound = 0.0;
  /// min over samples of the smallest eigenvalue of chi relative to omega
  double chi_lower = 0.0;
  /// max(0, lower_bound - chi_lower)
  double lower_bound_violation = 0.0;
  bool lam_max_nonincreasing = true;
  bool lam_min_nondecreasing = true;
  /// largest increase of lam_max (decrease of lam_min) between consecutive samples
  double monotonicity_defect = 0.0;

  bool within(double eps) const { return violation <= eps && lower_bound_violation <= eps && monotonicity_defect <= eps; }
};

inline MaxPrincipleReport monitor_max_principle(std::span<const MonitorRecord> trajectory) {
  if (trajectory.size() < 2) throw std::invalid_argument("monitor_max_principle: need at least two samples");
  MaxPrincipleReport r;
  r.band_lo = trajectory.front().lam_min;
  r.band_hi = trajectory.front().lam_max;
  r.lower_bound = 1.0 / r.band_hi;
  r.chi_lower = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    const auto& m = trajectory[i];
    r.violation = std::max({r.violation, m.lam_max - r.band_hi, r.band_lo - m.lam_min});
    r.chi_lower = std::min(r.chi_lower, m.chi_over_omega);
    if (i > 0) {
      const double up = m.lam_max - trajectory[i - 1].lam_max;
      const double down = trajectory[i - 1].lam_min - m.lam_min;
      if (up > 0.0) r.lam_max_nonincreasing = false;
      if (down > 0.0) r.lam_min_nondecreasing = false;
      r.monotonicity_defect = std::max({r.monotonicity_defect, up, down});
    }
  }
  r.lower_bound_violation = std::max(0.0, r.lower_bound - r.chi_lower);
  return r;
}

/// Refinement fit of the discretization slack eps_d = C (dx^2 + dt).
struct MaxPrincipleFit {
  double C = 0.0;
  double eps_coarse = 0.0;
  double eps_fine = 0.0;
  double violation_coarse = 0.0;
  double violation_fine = 0.0;
  /// violation_coarse / violation_fine (infinite when the fine violation is 0)
  double shrink = 0.0;
  /// both violations at roundoff level relative to the band width
  bool roundoff = false;
  bool passes = false;
};

inline MaxPrincipleFit fit_max_principle(double violation_coarse, double dx_coarse, double dt_coarse,
                                         double violation_fine, double dx_fine, double dt_fine, double band_width) {
  MaxPrincipleFit f;
  f.violation_coarse = violation_coarse;
  f.violation_fine = violation_fine;
  const double sc = dx_coarse * dx_coarse + dt_coarse;
  const double sf = dx_fine * dx_fine + dt_fine;
  f.C = std::max(violation_coarse / sc, violation_fine / sf);
  f.eps_coarse = f.C * sc;
  f.eps_fine = f.C * sf;
  f.shrink = violation_fine > 0.0 ? violation_coarse / violation_fine : std::numeric_limits<double>::infinity();
  const double floor = 1e-13 * std::max(1.0, band_width);
  f.roundoff = violation_coarse <= floor && violation_fine <= floor;
  f.passes = f.roundoff || violation_fine <= violation_coarse / 4.0;
  return f;
}

/// Constants of the affine relation -C6 <= sup phi <= C6 - C7 inf phi over a trajectory (C7 given).
struct SupInfFit {
  double C6 = 0.0;
  double C7 = 1.0;
};

inline SupInfFit fit_sup_inf(std::span<const MonitorRecord> trajectory, double C7 = 1.0) {
  SupInfFit f;
  f.C7 = C7;
  for (const auto& m : trajectory) f.C6 = std::max({f.C6, -m.sup_phi, m.sup_phi + C7 * m.inf_phi});
  return f;
}

/// Per-sample check of dJhat/dt = -n int phidot^2 chi^n/n!: compares the
/// change of Jhat between samples with the time integral of the rate.
struct GradientIdentityReport {
  double max_relative_defect = 0.0;
  std::size_t worst_sample = 0;
  bool monotone = true;
};

inline GradientIdentityReport check_gradient_identity(std::span<const MonitorRecord> samples, double monotone_tol = 1e-10) {
  GradientIdentityReport r;
  const double scale0 = samples.empty() ? 0.0 : std::abs(samples.front().jhat);
  for (std::size_t i = 1; i < samples.size(); ++i) {
    const double dt = samples[i].t - samples[i - 1].t;
    if (dt <= 0.0) continue;
    const double djhat = (samples[i].jhat - samples[i - 1].jhat) / dt;
    const double rate = samples[i].jhat_rate_integral / dt;
    const double scale = std::abs(samples[i].jhat);
    const double defect = std::abs(djhat - rate) / (scale > 0.0 ? scale : 1.0);
    if (defect > r.max_relative_defect) {
      r.max_relative_defect = defect;
      r.worst_sample = i;
    }
    if (samples[i].jhat > samples[i - 1].jhat + monotone_tol * std::max(scale0, scale)) r.monotone = false;
  }
  return r;
}

inline constexpr const char* kCsvHeader =
    "t,residual,lam_min,lam_max,J,I,Jhat,IE,JE,entropy,mabuchi,blowup,sup_phi,inf_phi,dt";

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_csv(std::ostream& os, std::span<const MonitorRecord> samples) {
  os << kCsvHeader << '\n';
  for (const auto& m : samples) {
    const double row[] = {m.t,  m.residual, m.lam_min, m.lam_max,  m.J,       m.I,       m.jhat, m.IE,
                          m.JE, m.entropy,  m.mabuchi, m.blowup, m.sup_phi, m.inf_phi, m.dt};
    for (std::size_t i = 0; i < std::size(row); ++i) os << (i ? "," : "") << format_g17(row[i]);
    os << '\n';
  }
}

}  // namespace jflow
