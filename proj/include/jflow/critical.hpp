#pragma once

// Damped Newton iteration for Lambda_chi(omega) = nc, independent of the flow.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "jflow/error.hpp"
#include "jflow/flow.hpp"
#include "jflow/hermitian.hpp"
#include "jflow/parallel.hpp"
#include "jflow/torus.hpp"

namespace jflow {

struct NewtonSettings {
  double tol = 1e-10;
  int max_iters = 50;
  double damping = 1.0;
  double damping_floor = std::ldexp(1.0, -20);
  double linear_tol = 1e-10;
  int linear_max_iters = 2000;

  void validate() const {
    if (!(tol > 0.0)) throw std::invalid_argument("NewtonSettings: tol must be positive");
    if (!(damping > 0.0 && damping <= 1.0)) throw std::invalid_argument("NewtonSettings: damping must lie in (0,1]");
    if (max_iters < 0) throw std::invalid_argument("NewtonSettings: max_iters must be >= 0");
  }
};

enum class LinearMethod { cg, bicgstab };
inline const char* to_string(LinearMethod m) { return m == LinearMethod::cg ? "cg" : "bicgstab"; }

struct LinearSolveReport {
  bool converged = false;
  int iterations = 0;
  double relative_residual = 0.0;
  LinearMethod method = LinearMethod::cg;
};

// Fields annihilated by every D_a D_b: products over axes of 1 and (-1)^j.
inline std::vector<std::vector<double>> discrete_kernel(const TorusGrid& g) {
  const int axes = g.axes();
  std::vector<std::vector<double>> basis;
  for (unsigned mask = 0; mask < (1u << axes); ++mask) {
    std::vector<double> v(g.size());
    for (std::size_t p = 0; p < g.size(); ++p) {
      int parity = 0;
      for (int a = 0; a < axes; ++a)
        if (mask & (1u << a)) parity += g.index_along(p, a);
      v[p] = (parity % 2) ? -1.0 : 1.0;
    }
    basis.push_back(std::move(v));
  }
  return basis;
}

// Basis vectors are mutually orthogonal with squared norm = size.
inline void project_out(std::vector<double>& v, const std::vector<std::vector<double>>& kernel) {
  for (const auto& k : kernel) {
    double dot = 0.0;
    for (std::size_t p = 0; p < v.size(); ++p) dot += k[p] * v[p];
    dot /= static_cast<double>(v.size());
    for (std::size_t p = 0; p < v.size(); ++p) v[p] -= dot * k[p];
  }
}

/// v -> (1/n) tr(h H(v)), h = chi^{-1} g chi^{-1}, frozen at one metric.
class LinearizedOperator {
public:
  LinearizedOperator(const MetricField& chi, const HermitianForm& g) : grid_(chi.grid()), h_(chi.grid(), chi.n()) {
    if (!chi.admissible()) throw SingularFormError("linearized operator: chi is not admissible");
    if (g.dim() != chi.n()) throw ShapeError("linearized operator: dimension mismatch");
    const int n = chi.n();
    const CMatrix gm = g.matrix();
    std::vector<char> ok(chi.size(), 1);
    parallel_for(chi.size(), [&](std::size_t p) {
      CMatrix L, X;
      if (!detail::small_cholesky(chi.value(p), L)) {
        ok[p] = 0;
        return;
      }
      detail::small_inverse_from_cholesky(L, X);
      h_.set(p, X * gm * X);
    }, 4096);
    for (char c : ok)
      if (!c) throw SingularFormError("linearized operator: chi is not positive");

    // diagonal of D_a D_a is translation invariant
    const int N = grid_.points_per_axis();
    double dd = 0.0;
    if (grid_.stencil() == Stencil::fd4) {
      const double w = 1.0 / (12.0 * grid_.spacing());
      dd = -130.0 * w * w;
    } else {
      const auto& D = grid_.spectral_matrix();
      for (int l = 0; l < N; ++l) dd += D[static_cast<std::size_t>(l)] * D[static_cast<std::size_t>(l) * N];
    }
    const double per_axis = grid_.mode() == GridMode::invariant ? 0.25 * dd : 0.5 * dd;
    diag_.resize(grid_.size());
    for (std::size_t p = 0; p < grid_.size(); ++p) {
      double tr = 0.0;
      for (int i = 0; i < n; ++i) tr += h_.entry(p, i, i).real();
      diag_[p] = per_axis * tr / n;
    }
  }

  const TorusGrid& grid() const { return grid_; }
  const std::vector<double>& diagonal() const { return diag_; }

  std::vector<double> apply(const std::vector<double>& v) const {
    const int n = h_.n();
    PotentialField f(grid_);
    f.values = v;
    const FormField H = complex_hessian(f);
    std::vector<double> out(v.size());
    parallel_for(v.size(), [&](std::size_t p) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) acc += (h_.entry(p, i, j) * H.entry(p, j, i)).real();
      out[p] = acc / n;
    }, 4096);
    return out;
  }

private:
  TorusGrid grid_;
  FormField h_;
  std::vector<double> diag_;
};

inline RealField linearized_apply(const MetricField& chi, const HermitianForm& g, const PotentialField& v) {
  require_same_grid(chi.grid(), v.grid, "linearized_apply");
  LinearizedOperator op(chi, g);
  RealField out(v.grid);
  out.values = op.apply(v.values);
  return out;
}

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> t(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) t[i] = a[i] * b[i];
  return pairwise_sum(t);
}

inline void axpy(double s, const std::vector<double>& x, std::vector<double>& y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += s * x[i];
}

}  // namespace detail

// Solves op(x) = b on the complement of the discrete kernel. CG on -op with
// Jacobi preconditioning; op is only approximately symmetric for variable
// coefficients, so BiCGSTAB takes over when CG stalls.
inline LinearSolveReport solve_linearized(const LinearizedOperator& op, std::vector<double> b, std::vector<double>& x,
                                          double tol, int max_iters) {
  const auto kernel = discrete_kernel(op.grid());
  project_out(b, kernel);
  const std::size_t m = b.size();
  const double bnorm = std::sqrt(detail::dot(b, b));
  x.assign(m, 0.0);
  LinearSolveReport rep;
  if (bnorm == 0.0) {
    rep.converged = true;
    return rep;
  }
  const auto& diag = op.diagonal();
  auto precond = [&](const std::vector<double>& r) {
    std::vector<double> z(m);
    for (std::size_t i = 0; i < m; ++i) z[i] = r[i] / diag[i];
    project_out(z, kernel);
    return z;
  };
  auto residual_of = [&](const std::vector<double>& xx) {
    auto r = op.apply(xx);
    for (std::size_t i = 0; i < m; ++i) r[i] = b[i] - r[i];
    project_out(r, kernel);
    return r;
  };

  // CG on op itself: op and the Jacobi diagonal are both negative, so r.z < 0 and d.q < 0
  {
    std::vector<double> r = b, z = precond(r), d = z;
    double rz = detail::dot(r, z);
    bool healthy = true;
    for (int it = 1; it <= max_iters && healthy; ++it) {
      const auto q = op.apply(d);
      const double dq = detail::dot(d, q);
      if (!(dq < 0.0) || !(rz < 0.0)) {
        healthy = false;
        break;
      }
      const double alpha = rz / dq;
      detail::axpy(alpha, d, x);
      detail::axpy(-alpha, q, r);
      project_out(r, kernel);
      rep.iterations = it;
      if (it % 50 == 0) r = residual_of(x);
      const double rn = std::sqrt(detail::dot(r, r)) / bnorm;
      rep.relative_residual = rn;
      if (rn <= tol) {
        const auto tr = residual_of(x);
        const double true_rn = std::sqrt(detail::dot(tr, tr)) / bnorm;
        rep.relative_residual = true_rn;
        if (true_rn <= 10.0 * tol) {
          rep.converged = true;
          project_out(x, kernel);
          return rep;
        }
        healthy = false;
        break;
      }
      z = precond(r);
      const double rz_new = detail::dot(r, z);
      for (std::size_t i = 0; i < m; ++i) d[i] = z[i] + (rz_new / rz) * d[i];
      rz = rz_new;
    }
  }

  // right-preconditioned BiCGSTAB from the origin
  rep.method = LinearMethod::bicgstab;
  rep.iterations = 0;
  x.assign(m, 0.0);
  std::vector<double> r = b, rhat = b, p(m, 0.0), v(m, 0.0);
  double rho = 1.0, alpha = 1.0, omega = 1.0;
  for (int it = 1; it <= max_iters; ++it) {
    const double rho_new = detail::dot(rhat, r);
    if (rho_new == 0.0 || omega == 0.0) break;
    const double beta = (rho_new / rho) * (alpha / omega);
    for (std::size_t i = 0; i < m; ++i) p[i] = r[i] + beta * (p[i] - omega * v[i]);
    const auto ph = precond(p);
    v = op.apply(ph);
    project_out(v, kernel);
    alpha = rho_new / detail::dot(rhat, v);
    std::vector<double> s = r;
    detail::axpy(-alpha, v, s);
    detail::axpy(alpha, ph, x);
    rep.iterations = it;
    double sn = std::sqrt(detail::dot(s, s)) / bnorm;
    if (sn <= tol) {
      rep.relative_residual = sn;
      rep.converged = true;
      break;
    }
    const auto sh = precond(s);
    auto t = op.apply(sh);
    project_out(t, kernel);
    const double tt = detail::dot(t, t);
    if (tt == 0.0) break;
    omega = detail::dot(t, s) / tt;
    detail::axpy(omega, sh, x);
    r = s;
    detail::axpy(-omega, t, r);
    rho = rho_new;
    rep.relative_residual = std::sqrt(detail::dot(r, r)) / bnorm;
    if (rep.relative_residual <= tol) {
      rep.converged = true;
      break;
    }
  }
  project_out(x, kernel);
  return rep;
}

struct NewtonReport {
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
  std::vector<double> residual_history;
  std::vector<double> damping_history;
  std::vector<LinearSolveReport> linear;
  std::string message;
};

struct NewtonResult {
  PotentialField phi;
  NewtonReport report;
};

inline PotentialField mean_zero(PotentialField phi) {
  phi += -phi.mean();
  return phi;
}

inline NewtonResult newton_solve(const HermitianForm& omega, const HermitianForm& chi0, const PotentialField& phi_init,
                                 const NewtonSettings& set = {}) {
  set.validate();
  const FlowProblem pb(omega, chi0);
  if (phi_init.grid.n() != pb.n()) throw ShapeError("newton_solve: grid dimension does not match the forms");
  NewtonResult out;
  auto& rep = out.report;
  PotentialField phi = mean_zero(phi_init);
  StageEval ev = evaluate_rhs(pb, phi, false);
  if (!ev.admissible) throw SingularFormError("newton_solve: initial potential is not admissible");
  rep.residual = ev.residual;
  rep.residual_history.push_back(ev.residual);

  while (rep.residual >= set.tol) {
    if (rep.iterations >= set.max_iters) {
      rep.message = "maximum Newton iterations exceeded";
      out.phi = phi;
      return out;
    }
    const MetricField chi = metric_field(pb.chi0, phi);
    const LinearizedOperator op(chi, pb.omega);
    std::vector<double> b(ev.rhs.values.size());
    for (std::size_t p = 0; p < b.size(); ++p) b[p] = -ev.rhs.values[p];
    std::vector<double> delta;
    rep.linear.push_back(solve_linearized(op, std::move(b), delta, set.linear_tol, set.linear_max_iters));

    double s = set.damping;
    bool accepted = false;
    while (s >= set.damping_floor) {
      PotentialField trial = phi;
      for (std::size_t p = 0; p < delta.size(); ++p) trial.values[p] += s * delta[p];
      StageEval tev = evaluate_rhs(pb, trial, false);
      if (tev.admissible && tev.residual < rep.residual) {
        phi = mean_zero(std::move(trial));
        ev = std::move(tev);
        accepted = true;
        break;
      }
      s *= 0.5;
    }
    ++rep.iterations;
    if (!accepted) {
      rep.message = "no admissible decrease above the damping floor";
      out.phi = phi;
      return out;
    }
    rep.damping_history.push_back(s);
    rep.residual = ev.residual;
    rep.residual_history.push_back(ev.residual);
  }
  rep.converged = true;
  rep.message = "converged";
  out.phi = phi;
  return out;
}

}  // namespace jflow
