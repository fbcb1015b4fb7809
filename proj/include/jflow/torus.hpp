#pragma once

// Flat Kähler torus C^n / (2 pi Z)^{2n} with constant background forms and
// periodic potentials sampled at cell centers.
//
// In `invariant` mode potentials depend only on x_i = Re z_i, so the grid has n
// real axes and d/dz_i d/dzbar_j = (1/4) d^2/dx_i dx_j. In `full` mode the grid
// has 2n real axes ordered (x_1..x_n, y_1..y_n).
//
// Second derivatives are always formed as compositions D_a D_b of the same
// skew-adjoint first-derivative operator, so summation by parts holds exactly
// on the grid.

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "jflow/error.hpp"
#include "jflow/hermitian.hpp"
#include "jflow/parallel.hpp"

namespace jflow {

enum class GridMode { invariant, full };
enum class Stencil { fd4, spectral };

inline const char* to_string(GridMode m) { return m == GridMode::invariant ? "invariant" : "full"; }
inline const char* to_string(Stencil s) { return s == Stencil::fd4 ? "fd4" : "spectral"; }

class TorusGrid {
public:
  TorusGrid() = default;

  TorusGrid(int n, GridMode mode, int points_per_axis, Stencil stencil = Stencil::fd4)
      : n_(n), mode_(mode), N_(points_per_axis), stencil_(stencil) {
    if (n < 1 || n > kMaxDim) throw ShapeError("TorusGrid: complex dimension out of range");
    if (points_per_axis < 8 || points_per_axis % 2 != 0)
      throw ShapeError("TorusGrid: points per axis must be even and >= 8");
    size_ = 1;
    for (int a = 0; a < axes(); ++a) {
      if (size_ > (std::size_t{1} << 28) / static_cast<std::size_t>(N_))
        throw ShapeError("TorusGrid: grid too large");
      size_ *= static_cast<std::size_t>(N_);
    }
    if (stencil_ == Stencil::spectral) build_spectral_matrix();
  }

  int n() const noexcept { return n_; }
  GridMode mode() const noexcept { return mode_; }
  int points_per_axis() const noexcept { return N_; }
  Stencil stencil() const noexcept { return stencil_; }
  int axes() const noexcept { return mode_ == GridMode::invariant ? n_ : 2 * n_; }
  std::size_t size() const noexcept { return size_; }
  double spacing() const noexcept { return 2.0 * std::numbers::pi / N_; }
  double coordinate(int j) const noexcept { return (j + 0.5) * spacing(); }

  /// Volume of the real 2n-dimensional torus [0, 2 pi)^{2n}.
  double volume() const noexcept { return std::pow(2.0 * std::numbers::pi, 2 * n_); }

  /// Quadrature weight per grid point (midpoint rule); invariant mode folds the
  /// trivial y-integration into the weight.
  double cell_volume() const noexcept { return volume() / static_cast<double>(size_); }

  std::size_t stride(int axis) const noexcept {
    std::size_t s = 1;
    for (int a = axes() - 1; a > axis; --a) s *= static_cast<std::size_t>(N_);
    return s;
  }

  int index_along(std::size_t p, int axis) const noexcept {
    return static_cast<int>((p / stride(axis)) % static_cast<std::size_t>(N_));
  }

  std::vector<double> coordinates(std::size_t p) const {
    std::vector<double> x(static_cast<std::size_t>(axes()));
    for (int a = 0; a < axes(); ++a) x[static_cast<std::size_t>(a)] = coordinate(index_along(p, a));
    return x;
  }

  const std::vector<double>& spectral_matrix() const { return *spectral_; }

  bool operator==(const TorusGrid& o) const noexcept {
    return n_ == o.n_ && mode_ == o.mode_ && N_ == o.N_ && stencil_ == o.stencil_;
  }

private:
  void build_spectral_matrix() {
    // Periodic Fourier differentiation on an even grid (Nyquist mode dropped):
    // D(j, l) = (1/2) (-1)^{j-l} cot((j - l) h / 2), D(j, j) = 0.
    auto m = std::make_shared<std::vector<double>>(static_cast<std::size_t>(N_ * N_), 0.0);
    const double h = spacing();
    for (int j = 0; j < N_; ++j)
      for (int l = 0; l < N_; ++l) {
        if (j == l) continue;
        const int d = j - l;
        const double sign = (d % 2 == 0) ? 1.0 : -1.0;
        (*m)[static_cast<std::size_t>(j * N_ + l)] = 0.5 * sign / std::tan(d * h / 2.0);
      }
    spectral_ = std::move(m);
  }

  int n_ = 0;
  GridMode mode_ = GridMode::invariant;
  int N_ = 0;
  Stencil stencil_ = Stencil::fd4;
  std::size_t size_ = 0;
  std::shared_ptr<const std::vector<double>> spectral_;
};

void require_same_grid(const TorusGrid& a, const TorusGrid& b, const char* what);

/// Real scalar field on a torus grid (potentials, time derivatives, curvature...).
struct GridFunction {
  TorusGrid grid;
  std::vector<double> values;

  GridFunction() = default;
  explicit GridFunction(TorusGrid g) : grid(std::move(g)), values(grid.size(), 0.0) {}
  GridFunction(TorusGrid g, std::vector<double> v) : grid(std::move(g)), values(std::move(v)) {
    if (values.size() != grid.size()) throw ShapeError("GridFunction: value count does not match grid");
  }

  static GridFunction constant(const TorusGrid& g, double c) {
    return GridFunction(g, std::vector<double>(g.size(), c));
  }

  template <class Fn>
  static GridFunction from_function(const TorusGrid& g, Fn&& fn) {
    GridFunction f(g);
    for (std::size_t p = 0; p < g.size(); ++p) f.values[p] = fn(g.coordinates(p));
    return f;
  }

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t p) const { return values[p]; }
  double& operator[](std::size_t p) { return values[p]; }

  double sum() const { return pairwise_sum(values); }
  double mean() const { return sum() / static_cast<double>(values.size()); }
  double sup() const;
  double inf() const;
  double sup_abs() const;

  GridFunction& operator+=(const GridFunction& o) {
    require_same_grid(grid, o.grid, "GridFunction +=");
    for (std::size_t p = 0; p < values.size(); ++p) values[p] += o.values[p];
    return *this;
  }
  GridFunction& operator-=(const GridFunction& o) {
    require_same_grid(grid, o.grid, "GridFunction -=");
    for (std::size_t p = 0; p < values.size(); ++p) values[p] -= o.values[p];
    return *this;
  }
  GridFunction& operator*=(double s) {
    for (double& v : values) v *= s;
    return *this;
  }
  GridFunction& operator+=(double c) {
    for (double& v : values) v += c;
    return *this;
  }
  friend GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
  friend GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
  friend GridFunction operator*(double s, GridFunction a) { return a *= s; }
  friend GridFunction operator+(GridFunction a, double c) { return a += c; }
};

/// Kähler potential phi; admissible when chi0 + (sqrt(-1)/2) d dbar phi > 0 everywhere.
using PotentialField = GridFunction;
using RealField = GridFunction;

inline void require_same_grid(const TorusGrid& a, const TorusGrid& b, const char* what) {
  if (!(a == b)) throw ShapeError(std::string(what) + ": grids differ");
}

inline double GridFunction::sup() const {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : values) m = std::max(m, v);
  return m;
}
inline double GridFunction::inf() const {
  double m = std::numeric_limits<double>::infinity();
  for (double v : values) m = std::min(m, v);
  return m;
}
inline double GridFunction::sup_abs() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

/// Midpoint-rule integral over the torus.
inline double integrate(const GridFunction& f) { return f.sum() * f.grid.cell_volume(); }

/// phi = sum_m amplitude_m cos(k_m . x + phase_m); k has one entry per grid axis.
struct CosineMode {
  std::vector<int> wavevector;
  double amplitude = 0.0;
  double phase = 0.0;
};

inline PotentialField cosine_modes(const TorusGrid& g, std::span<const CosineMode> modes) {
  for (const auto& m : modes)
    if (static_cast<int>(m.wavevector.size()) != g.axes())
      throw ShapeError("cosine_modes: wavevector length must equal the number of grid axes");
  PotentialField phi(g);
  for (std::size_t p = 0; p < g.size(); ++p) {
    double v = 0.0;
    for (const auto& m : modes) {
      double arg = m.phase;
      for (int a = 0; a < g.axes(); ++a) arg += m.wavevector[static_cast<std::size_t>(a)] * g.coordinate(g.index_along(p, a));
      v += m.amplitude * std::cos(arg);
    }
    phi.values[p] = v;
  }
  return phi;
}

/// First derivative along one real axis (4th-order central or spectral).
inline std::vector<double> derivative(const TorusGrid& g, std::span<const double> f, int axis) {
  if (f.size() != g.size()) throw ShapeError("derivative: field size does not match grid");
  if (axis < 0 || axis >= g.axes()) throw ShapeError("derivative: axis out of range");
  const std::size_t s = g.stride(axis);
  const int N = g.points_per_axis();
  const double h = g.spacing();
  std::vector<double> out(f.size());
  if (g.stencil() == Stencil::fd4) {
    const double w = 1.0 / (12.0 * h);
    parallel_for(f.size(), [&](std::size_t p) {
      const int j = g.index_along(p, axis);
      const std::size_t base = p - static_cast<std::size_t>(j) * s;
      auto at = [&](int o) { return f[base + static_cast<std::size_t>((j + o + N) % N) * s]; };
      out[p] = w * (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2));
    });
  } else {
    const auto& D = g.spectral_matrix();
    parallel_for(f.size(), [&](std::size_t p) {
      const int j = g.index_along(p, axis);
      const std::size_t base = p - static_cast<std::size_t>(j) * s;
      double acc = 0.0;
      const double* row = D.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(N);
      for (int l = 0; l < N; ++l) acc += row[l] * f[base + static_cast<std::size_t>(l) * s];
      out[p] = acc;
    });
  }
  return out;
}

/// Per-point n x n complex matrices stored contiguously (column-major per point).
class FormField {
public:
  FormField() = default;
  FormField(TorusGrid g, int n) : grid_(std::move(g)), n_(n), entries_(grid_.size() * static_cast<std::size_t>(n * n)) {}

  const TorusGrid& grid() const noexcept { return grid_; }
  int n() const noexcept { return n_; }
  std::size_t size() const noexcept { return grid_.size(); }

  cplx& entry(std::size_t p, int i, int j) { return entries_[offset(p) + static_cast<std::size_t>(j * n_ + i)]; }
  cplx entry(std::size_t p, int i, int j) const { return entries_[offset(p) + static_cast<std::size_t>(j * n_ + i)]; }

  CMatrix at(std::size_t p) const {
    CMatrix m(n_, n_);
    for (int j = 0; j < n_; ++j)
      for (int i = 0; i < n_; ++i) m(i, j) = entry(p, i, j);
    return m;
  }
  HermitianForm form(std::size_t p) const { return HermitianForm::trusted(at(p)); }

  void set(std::size_t p, const CMatrix& m) {
    for (int j = 0; j < n_; ++j)
      for (int i = 0; i < n_; ++i) entry(p, i, j) = m(i, j);
  }

  FormField& operator*=(double s) {
    for (auto& e : entries_) e *= s;
    return *this;
  }

private:
  std::size_t offset(std::size_t p) const { return p * static_cast<std::size_t>(n_ * n_); }

  TorusGrid grid_;
  int n_ = 0;
  std::vector<cplx> entries_;
};

/// Complex Hessian d_i dbar_j phi at every grid point.
inline FormField complex_hessian(const PotentialField& phi) {
  const TorusGrid& g = phi.grid;
  const int n = g.n();
  const int axes = g.axes();
  std::vector<std::vector<double>> first(static_cast<std::size_t>(axes));
  for (int a = 0; a < axes; ++a) first[static_cast<std::size_t>(a)] = derivative(g, phi.values, a);

  // second[a][b] = D_b D_a phi for a <= b
  std::vector<std::vector<std::vector<double>>> second(static_cast<std::size_t>(axes));
  for (int a = 0; a < axes; ++a) {
    second[static_cast<std::size_t>(a)].resize(static_cast<std::size_t>(axes));
    for (int b = a; b < axes; ++b)
      second[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = derivative(g, first[static_cast<std::size_t>(a)], b);
  }
  auto d2 = [&](int a, int b, std::size_t p) {
    return a <= b ? second[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)][p]
                  : second[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)][p];
  };

  FormField H(g, n);
  if (g.mode() == GridMode::invariant) {
    for (std::size_t p = 0; p < g.size(); ++p)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) H.entry(p, i, j) = 0.25 * d2(i, j, p);
  } else {
    // d_i dbar_j = (1/4)[(dx_i dx_j + dy_i dy_j) + sqrt(-1)(dx_i dy_j - dy_i dx_j)]
    for (std::size_t p = 0; p < g.size(); ++p)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const double re = d2(i, j, p) + d2(n + i, n + j, p);
          const double im = d2(i, n + j, p) - d2(n + i, j, p);
          H.entry(p, i, j) = 0.25 * cplx(re, im);
        }
  }
  return H;
}

/// (1,0)-gradient d_i phi at every grid point (n entries per point).
inline std::vector<cplx> complex_gradient(const PotentialField& phi) {
  const TorusGrid& g = phi.grid;
  const int n = g.n();
  std::vector<cplx> out(g.size() * static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto dx = derivative(g, phi.values, i);
    if (g.mode() == GridMode::invariant) {
      for (std::size_t p = 0; p < g.size(); ++p) out[p * static_cast<std::size_t>(n) + static_cast<std::size_t>(i)] = 0.5 * dx[p];
    } else {
      const auto dy = derivative(g, phi.values, n + i);
      for (std::size_t p = 0; p < g.size(); ++p)
        out[p * static_cast<std::size_t>(n) + static_cast<std::size_t>(i)] = 0.5 * cplx(dx[p], -dy[p]);
    }
  }
  return out;
}

struct Admissibility {
  bool admissible = false;
  /// min over points of the smallest eigenvalue of chi_phi relative to the background
  double margin = 0.0;
  std::size_t worst_point = 0;
};

/// chi_phi = background + d dbar phi, cached per point.
class MetricField {
public:
  MetricField() = default;
  MetricField(HermitianForm background, FormField hessian)
      : background_(std::move(background)), hessian_(std::move(hessian)) {
    if (background_.dim() != hessian_.n()) throw ShapeError("MetricField: background dimension mismatch");
  }

  const TorusGrid& grid() const noexcept { return hessian_.grid(); }
  int n() const noexcept { return hessian_.n(); }
  std::size_t size() const noexcept { return hessian_.size(); }
  const HermitianForm& background() const noexcept { return background_; }
  const FormField& hessian() const noexcept { return hessian_; }

  CMatrix value(std::size_t p) const { return background_.matrix() + hessian_.at(p); }
  HermitianForm form(std::size_t p) const { return HermitianForm::trusted(value(p)); }

  const Admissibility& admissibility() const noexcept { return admissibility_; }
  bool admissible() const noexcept { return admissibility_.admissible; }

  void set_admissibility(Admissibility a) { admissibility_ = a; }

private:
  HermitianForm background_;
  FormField hessian_;
  Admissibility admissibility_;
};

inline Admissibility assess_admissibility(const MetricField& chi) {
  Admissibility rep;
  Eigen::LLT<CMatrix> ref(chi.background().matrix());
  if (ref.info() != Eigen::Success) throw SingularFormError("metric_field: background is not positive");
  std::vector<double> mins(chi.size());
  parallel_for(chi.size(), [&](std::size_t p) { mins[p] = detail::min_relative_eigenvalue(ref, chi.value(p)); }, 4096);
  rep.margin = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < mins.size(); ++p)
    if (mins[p] < rep.margin) {
      rep.margin = mins[p];
      rep.worst_point = p;
    }
  // Positive definiteness with the same relative threshold as HermitianForm::is_positive.
  rep.admissible = rep.margin > kPositivityRatio && chi.form(rep.worst_point).is_positive();
  return rep;
}

/// chi_phi = chi0 + (sqrt(-1)/2) d dbar phi with an admissibility report.
/// Inadmissible fields are flagged, not rejected.
inline MetricField metric_field(const HermitianForm& chi0, const PotentialField& phi) {
  if (chi0.dim() != phi.grid.n()) throw ShapeError("metric_field: form dimension does not match grid");
  if (!chi0.is_positive()) throw SingularFormError("metric_field: background form is not positive");
  MetricField chi(chi0, complex_hessian(phi));
  chi.set_admissibility(assess_admissibility(chi));
  return chi;
}

/// Laplacian Delta_omega phi = omega^{i jbar} d_i dbar_j phi for constant omega.
inline RealField laplacian_w(const HermitianForm& omega, const PotentialField& phi) {
  if (omega.dim() != phi.grid.n()) throw ShapeError("laplacian_w: form dimension does not match grid");
  if (!omega.is_positive()) throw SingularFormError("laplacian_w: omega is not positive");
  const FormField H = complex_hessian(phi);
  const CMatrix winv = omega.matrix().inverse();
  RealField out(phi.grid);
  const int n = omega.dim();
  for (std::size_t p = 0; p < out.size(); ++p) {
    cplx acc = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) acc += winv(j, i) * H.entry(p, i, j);
    out.values[p] = acc.real();
  }
  return out;
}

/// log det chi at every point; throws when chi is not positive somewhere.
inline RealField log_det(const MetricField& chi) {
  RealField out(chi.grid());
  for (std::size_t p = 0; p < chi.size(); ++p) {
    CMatrix L;
    if (!detail::small_cholesky(chi.value(p), L)) throw SingularFormError("log_det: metric is not positive at a grid point");
    double s = 0.0;
    for (int i = 0; i < chi.n(); ++i) s += 2.0 * std::log(L(i, i).real());
    out.values[p] = s;
  }
  return out;
}

/// Scalar curvature R = -chi^{i jbar} d_i dbar_j log det chi.
inline RealField scalar_curvature(const MetricField& chi) {
  const RealField logdet = log_det(chi);
  const FormField H = complex_hessian(logdet);
  RealField R(chi.grid());
  for (std::size_t p = 0; p < chi.size(); ++p) {
    CMatrix L, X;
    detail::small_cholesky(chi.value(p), L);
    detail::small_inverse_from_cholesky(L, X);
    R.values[p] = -detail::small_trace_product(X, H.at(p));
  }
  return R;
}

/// Volume density chi^n / n! relative to dV, i.e. det chi.
inline RealField volume_density(const MetricField& chi) {
  RealField out(chi.grid());
  for (std::size_t p = 0; p < chi.size(); ++p) out.values[p] = chi.value(p).determinant().real();
  return out;
}

/// Average scalar curvature int R chi^n / int chi^n.
inline double average_scalar_curvature(const MetricField& chi) {
  const RealField R = scalar_curvature(chi);
  const RealField vol = volume_density(chi);
  std::vector<double> prod(R.size());
  for (std::size_t p = 0; p < prod.size(); ++p) prod[p] = R.values[p] * vol.values[p];
  return pairwise_sum(prod) / vol.sum();
}

/// One factor in a wedge recipe: either a constant form or a per-point field.
struct TopFactor {
  std::function<CMatrix(std::size_t)> at;
  int multiplicity = 1;

  static TopFactor constant(const HermitianForm& f, int mult = 1) {
    CMatrix m = f.matrix();
    return {[m](std::size_t) { return m; }, mult};
  }
  static TopFactor field(const MetricField& chi, int mult = 1) {
    return {[&chi](std::size_t p) { return chi.value(p); }, mult};
  }
  static TopFactor field(const FormField& f, int mult = 1) {
    return {[&f](std::size_t p) { return f.at(p); }, mult};
  }
};

/// int_M (A_1 ^ ... ^ A_n) / divisor, with beta_1 ^ ... ^ beta_n = dV; each
/// pointwise top coefficient is the determinant-polarization form of the wedge.
inline double integrate_top(const TorusGrid& g, std::span<const TopFactor> recipe, double divisor = 1.0) {
  int degree = 0;
  for (const auto& f : recipe) degree += f.multiplicity;
  if (degree != g.n()) throw ShapeError("integrate_top: recipe does not have total degree (n, n)");
  std::vector<double> vals(g.size());
  std::vector<CMatrix> mats;
  mats.reserve(static_cast<std::size_t>(degree));
  for (std::size_t p = 0; p < g.size(); ++p) {
    mats.clear();
    for (const auto& f : recipe) {
      const CMatrix m = f.at(p);
      if (m.rows() != g.n()) throw ShapeError("integrate_top: factor dimension does not match grid");
      for (int r = 0; r < f.multiplicity; ++r) mats.push_back(m);
    }
    vals[p] = wedge_top(mats).real();
  }
  return pairwise_sum(vals) * g.cell_volume() / divisor;
}

inline double integrate_top(const TorusGrid& g, std::initializer_list<TopFactor> recipe, double divisor = 1.0) {
  return integrate_top(g, std::span<const TopFactor>(recipe.begin(), recipe.size()), divisor);
}

/// c = [omega].[chi0]^{n-1} / [chi0]^n for constant forms, i.e. (1/n) tr(chi0^{-1} omega).
inline double class_constant_c(const HermitianForm& omega, const HermitianForm& chi0) {
  return trace_pair(chi0, omega) / omega.dim();
}

}  // namespace jflow
