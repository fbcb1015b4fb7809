#pragma once

// Energy functionals on the space of potentials: J, I, Jhat (path integrals),
// the Aubin-Yau energies I^E, J^E (closed form), the entropy term and the
// Mabuchi energy.
//
// Volume normalizations follow chi^n / n! = det(chi) dV and
// omega ^ chi^{n-1} / (n-1)! = det(chi) tr(chi^{-1} omega) dV.

#include <cmath>
#include <functional>
#include <vector>

#include "jflow/error.hpp"
#include "jflow/hermitian.hpp"
#include "jflow/parallel.hpp"
#include "jflow/torus.hpp"

namespace jflow {

enum class PathKind { linear, quadratic, custom };

inline const char* to_string(PathKind k) {
  switch (k) {
    case PathKind::linear: return "linear";
    case PathKind::quadratic: return "quadratic";
    case PathKind::custom: return "custom";
  }
  return "?";
}

/// Path from 0 to phi: linear t phi, quadratic t^2 phi, or an explicit list of
/// fields at equally spaced times (nodes.front() = 0, nodes.back() = phi).
/// Integrated by the trapezoid rule on `steps` intervals; with `richardson`
/// the rule is repeated on 2*steps and extrapolated (not for custom paths).
struct PathSpec {
  PathKind kind = PathKind::linear;
  int steps = 64;
  bool richardson = true;
  std::vector<PotentialField> nodes;

  static PathSpec linear(int steps = 64) { return {PathKind::linear, steps, true, {}}; }
  static PathSpec quadratic(int steps = 64) { return {PathKind::quadratic, steps, true, {}}; }
};

struct PathIntegral {
  double value = 0.0;
  /// |T_2M - T_M| / 3 when extrapolated, otherwise 0
  double error_estimate = 0.0;
};

namespace detail {

inline void require_grid_dim(const HermitianForm& f, const TorusGrid& g, const char* what) {
  if (f.dim() != g.n()) throw ShapeError(std::string(what) + ": form dimension does not match grid");
}

/// Cholesky factor of chi at a point; throws when a path node is not admissible.
inline CMatrix admissible_factor(const CMatrix& chi, const char* what) {
  CMatrix L;
  if (!small_cholesky(chi, L)) throw SingularFormError(std::string(what) + ": path leaves the admissible set");
  return L;
}

/// int_M phidot * density(chi_t) dV at one node.
using NodeIntegrand = std::function<double(const MetricField& chi_t, const GridFunction& phidot)>;

/// int_0^1 F(t) dt with F(t) = NodeIntegrand(chi_{phi_t}, d phi_t / dt).
inline double trapezoid(const HermitianForm& chi0, const PotentialField& phi, const FormField& hess, PathKind kind, int M,
                        const NodeIntegrand& F) {
  std::vector<double> vals(static_cast<std::size_t>(M + 1));
  for (int m = 0; m <= M; ++m) {
    const double t = static_cast<double>(m) / M;
    const double s = kind == PathKind::linear ? t : t * t;
    const double ds = kind == PathKind::linear ? 1.0 : 2.0 * t;
    FormField scaled = hess;
    scaled *= s;
    const MetricField chi_t(chi0, std::move(scaled));
    GridFunction phidot = phi;
    phidot *= ds;
    const double w = (m == 0 || m == M) ? 0.5 : 1.0;
    vals[static_cast<std::size_t>(m)] = w * F(chi_t, phidot);
  }
  return pairwise_sum(vals) / M;
}

inline PathIntegral path_integral(const HermitianForm& chi0, const PotentialField& phi, const PathSpec& path,
                                  const NodeIntegrand& F) {
  require_grid_dim(chi0, phi.grid, "path_integral");
  if (path.kind == PathKind::custom) {
    const int M = static_cast<int>(path.nodes.size()) - 1;
    if (M < 2) throw ShapeError("path_integral: custom path needs at least three nodes");
    for (const auto& f : path.nodes) require_same_grid(f.grid, phi.grid, "path_integral");
    const double h = 1.0 / M;
    std::vector<double> vals(static_cast<std::size_t>(M + 1));
    for (int m = 0; m <= M; ++m) {
      // second-order time derivative (one-sided at the ends)
      GridFunction phidot(phi.grid);
      const auto& nd = path.nodes;
      for (std::size_t p = 0; p < phi.size(); ++p) {
        double d;
        if (m == 0)
          d = (-3.0 * nd[0][p] + 4.0 * nd[1][p] - nd[2][p]) / (2.0 * h);
        else if (m == M)
          d = (3.0 * nd[M][p] - 4.0 * nd[M - 1][p] + nd[M - 2][p]) / (2.0 * h);
        else
          d = (nd[m + 1][p] - nd[m - 1][p]) / (2.0 * h);
        phidot.values[p] = d;
      }
      const MetricField chi_t(chi0, complex_hessian(nd[static_cast<std::size_t>(m)]));
      const double w = (m == 0 || m == M) ? 0.5 : 1.0;
      vals[static_cast<std::size_t>(m)] = w * F(chi_t, phidot);
    }
    return {pairwise_sum(vals) * h, 0.0};
  }
  if (path.steps < 1) throw ShapeError("path_integral: steps must be positive");
  const FormField hess = complex_hessian(phi);
  const double coarse = trapezoid(chi0, phi, hess, path.kind, path.steps, F);
  if (!path.richardson) return {coarse, 0.0};
  const double fine = trapezoid(chi0, phi, hess, path.kind, 2 * path.steps, F);
  return {(4.0 * fine - coarse) / 3.0, std::abs(fine - coarse) / 3.0};
}

/// Pointwise sum of weight(p) * phidot(p) over the grid times the cell volume.
template <class Weight>
double weighted_integral(const MetricField& chi, const GridFunction& phidot, Weight&& weight) {
  std::vector<double> vals(chi.size());
  parallel_for(chi.size(), [&](std::size_t p) { vals[p] = phidot[p] * weight(p); }, 4096);
  return pairwise_sum(vals) * chi.grid().cell_volume();
}

}  // namespace detail

/// Pointwise densities relative to dV.
inline double volume_density_at(const CMatrix& chi) {
  return detail::small_det_from_cholesky(detail::admissible_factor(chi, "volume density"));
}

/// omega ^ chi^{n-1} / (n-1)!  =  det(chi) tr(chi^{-1} omega)
inline double mixed_density_at(const CMatrix& omega, const CMatrix& chi) {
  const CMatrix L = detail::admissible_factor(chi, "mixed density");
  CMatrix X;
  detail::small_inverse_from_cholesky(L, X);
  return detail::small_det_from_cholesky(L) * detail::small_trace_product(X, omega);
}

/// J(phi) = int_0^1 int_M phidot omega ^ chi_t^{n-1} / (n-1)! dt
inline PathIntegral eval_J(const HermitianForm& omega, const HermitianForm& chi0, const PotentialField& phi,
                           const PathSpec& path = {}) {
  detail::require_grid_dim(omega, phi.grid, "eval_J");
  const CMatrix w = omega.matrix();
  return detail::path_integral(chi0, phi, path, [&](const MetricField& chi, const GridFunction& phidot) {
    return detail::weighted_integral(chi, phidot, [&](std::size_t p) { return mixed_density_at(w, chi.value(p)); });
  });
}

/// I(phi) = int_0^1 int_M phidot chi_t^n / n! dt
inline PathIntegral eval_I(const HermitianForm& chi0, const PotentialField& phi, const PathSpec& path = {}) {
  return detail::path_integral(chi0, phi, path, [&](const MetricField& chi, const GridFunction& phidot) {
    return detail::weighted_integral(chi, phidot, [&](std::size_t p) { return volume_density_at(chi.value(p)); });
  });
}

/// Jhat = J - n c I, invariant under phi -> phi + C.
inline PathIntegral eval_Jhat(const HermitianForm& omega, const HermitianForm& chi0, const PotentialField& phi,
                              const PathSpec& path = {}) {
  detail::require_grid_dim(omega, phi.grid, "eval_Jhat");
  const CMatrix w = omega.matrix();
  const double nc = omega.dim() * class_constant_c(omega, chi0);
  return detail::path_integral(chi0, phi, path, [&](const MetricField& chi, const GridFunction& phidot) {
    return detail::weighted_integral(chi, phidot, [&](std::size_t p) {
      const CMatrix L = detail::admissible_factor(chi.value(p), "eval_Jhat");
      CMatrix X;
      detail::small_inverse_from_cholesky(L, X);
      return detail::small_det_from_cholesky(L) * (detail::small_trace_product(X, w) - nc);
    });
  });
}

struct AubinYau {
  double IE = 0.0;
  double JE = 0.0;
  /// I^E from (1/(n! V)) int phi (chi0^n - chi_phi^n)
  double IE_by_parts = 0.0;
};

/// Aubin-Yau energies with V = int chi0^n / n!. The gradient-sum form evaluates
///   (1/(n! V)) sum_i w_i int (sqrt(-1)/2) d phi ^ dbar phi ^ chi0^i ^ chi^{n-1-i}
/// with w_i = 1 for I^E and (i+1)/(n+1) for J^E.
inline AubinYau eval_IE_JE(const HermitianForm& chi0, const PotentialField& phi) {
  detail::require_grid_dim(chi0, phi.grid, "eval_IE_JE");
  const MetricField chi = metric_field(chi0, phi);
  const int n = chi0.dim();
  const std::vector<cplx> grad = complex_gradient(phi);
  const double V = chi0.determinant() * phi.grid.volume();
  double nfact = 1.0;
  for (int k = 2; k <= n; ++k) nfact *= k;

  std::vector<double> ie(phi.size()), je(phi.size()), alt(phi.size());
  const CMatrix c0 = chi0.matrix();
  const double det0 = chi0.determinant();
  parallel_for(phi.size(), [&](std::size_t p) {
    CMatrix G(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        G(i, j) = grad[p * static_cast<std::size_t>(n) + static_cast<std::size_t>(i)] *
                  std::conj(grad[p * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)]);
    const CMatrix cp = chi.value(p);
    std::vector<CMatrix> factors;
    double si = 0.0, sj = 0.0;
    for (int i = 0; i < n; ++i) {
      factors.assign(1, G);
      for (int r = 0; r < i; ++r) factors.push_back(c0);
      for (int r = 0; r < n - 1 - i; ++r) factors.push_back(cp);
      const double term = wedge_top(factors).real();
      si += term;
      sj += term * (i + 1) / (n + 1.0);
    }
    ie[p] = si;
    je[p] = sj;
    alt[p] = phi[p] * (det0 - cp.determinant().real()) * nfact;
  }, 4096);
  const double dv = phi.grid.cell_volume();
  AubinYau out;
  out.IE = pairwise_sum(ie) * dv / (nfact * V);
  out.JE = pairwise_sum(je) * dv / (nfact * V);
  out.IE_by_parts = pairwise_sum(alt) * dv / (nfact * V);
  return out;
}

/// int_M log(chi_phi^n / chi0^n) chi_phi^n / n!
inline double eval_entropy(const HermitianForm& chi0, const PotentialField& phi) {
  detail::require_grid_dim(chi0, phi.grid, "eval_entropy");
  const MetricField chi = metric_field(chi0, phi);
  const double det0 = volume_density_at(chi0.matrix());
  std::vector<double> vals(phi.size());
  for (std::size_t p = 0; p < phi.size(); ++p) {
    CMatrix L;
    if (!detail::small_cholesky(chi.value(p), L)) throw SingularFormError("eval_entropy: volume ratio is not positive");
    const double d = detail::small_det_from_cholesky(L);
    vals[p] = std::log(d / det0) * d;
  }
  return pairwise_sum(vals) * phi.grid.cell_volume();
}

/// R_bar = int R_chi0 chi0^n / int chi0^n from the discrete curvature of chi0.
inline double average_curvature_of_reference(const HermitianForm& chi0, const TorusGrid& grid) {
  return average_scalar_curvature(metric_field(chi0, PotentialField(grid)));
}

/// M(phi) = - int_0^1 int_M phidot (R_t - R_bar) chi_t^n / n! dt
inline PathIntegral eval_mabuchi(const HermitianForm& chi0, const PotentialField& phi, const PathSpec& path = {}) {
  detail::require_grid_dim(chi0, phi.grid, "eval_mabuchi");
  const double rbar = average_curvature_of_reference(chi0, phi.grid);
  return detail::path_integral(chi0, phi, path, [&](const MetricField& chi, const GridFunction& phidot) {
    const RealField R = scalar_curvature(chi);
    return -detail::weighted_integral(chi, phidot, [&](std::size_t p) {
      return (R[p] - rbar) * volume_density_at(chi.value(p));
    });
  });
}

}  // namespace jflow
