#pragma once

// Pointwise algebra of positive Hermitian (1,1)-form coefficient matrices.
//
// A (1,1)-form (sqrt(-1)/2) a_{i jbar} dz^i ^ dz^jbar is represented by its
// coefficient matrix A with A(i, j) = a_{i jbar}. With this convention
// Lambda_a b = a^{i jbar} b_{i jbar} = tr(A^{-1} B).

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "jflow/error.hpp"

namespace jflow {

inline constexpr int kMaxDim = 6;

using cplx = std::complex<double>;
using CMatrix = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;
using RVector = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;

/// Relative threshold for positivity: smallest eigenvalue must exceed this times the largest.
inline constexpr double kPositivityRatio = 1e-12;
/// Strict inequalities with |margin| at or below this are reported as boundary failures.
inline constexpr double kBoundaryTol = 1e-12;

class HermitianForm {
public:
  HermitianForm() = default;

  /// Validates Hermitian symmetry to `tol` (relative to the largest entry) and
  /// then symmetrizes so that entries(j, i) == conj(entries(i, j)) exactly.
  explicit HermitianForm(const CMatrix& m, double tol = 1e-12) {
    if (m.rows() != m.cols()) throw ShapeError("HermitianForm: matrix is not square");
    if (m.rows() < 1 || m.rows() > kMaxDim) throw ShapeError("HermitianForm: dimension out of range");
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.adjoint()).cwiseAbs().maxCoeff() > tol * scale)
      throw ShapeError("HermitianForm: matrix is not Hermitian");
    m_ = symmetrized(m);
  }

  static HermitianForm from_real(const Eigen::MatrixXd& m) {
    return HermitianForm(CMatrix(m.cast<cplx>()));
  }

  static HermitianForm identity(int n) { return scalar(n, 1.0); }

  static HermitianForm scalar(int n, double s) {
    check_dim(n);
    HermitianForm f;
    f.m_ = CMatrix::Identity(n, n) * s;
    return f;
  }

  static HermitianForm diagonal(std::span<const double> d) {
    check_dim(static_cast<int>(d.size()));
    HermitianForm f;
    f.m_ = CMatrix::Zero(static_cast<Eigen::Index>(d.size()), static_cast<Eigen::Index>(d.size()));
    for (std::size_t i = 0; i < d.size(); ++i) f.m_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = d[i];
    return f;
  }

  static HermitianForm diagonal(std::initializer_list<double> d) {
    return diagonal(std::span<const double>(d.begin(), d.size()));
  }

  /// Skips validation; the input is symmetrized. For matrices that are
  /// Hermitian by construction (grid Hessians, sums of forms).
  static HermitianForm trusted(const CMatrix& m) {
    HermitianForm f;
    f.m_ = symmetrized(m);
    return f;
  }

  int dim() const noexcept { return static_cast<int>(m_.rows()); }
  const CMatrix& matrix() const noexcept { return m_; }
  cplx operator()(int i, int j) const { return m_(i, j); }

  bool is_real() const { return m_.imag().cwiseAbs().maxCoeff() == 0.0; }

  RVector eigenvalues() const {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(m_, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
  }

  /// Positive definite: Cholesky succeeds and the spectrum is not numerically degenerate.
  bool is_positive() const {
    if (dim() == 0) return false;
    Eigen::LLT<CMatrix> llt(m_);
    if (llt.info() != Eigen::Success) return false;
    const RVector ev = eigenvalues();
    return ev(0) > kPositivityRatio * ev(ev.size() - 1) && ev(0) > 0.0;
  }

  double determinant() const { return m_.determinant().real(); }
  double trace() const { return m_.trace().real(); }

  HermitianForm operator+(const HermitianForm& o) const {
    same_dim(o);
    return trusted(m_ + o.m_);
  }
  HermitianForm operator-(const HermitianForm& o) const {
    same_dim(o);
    return trusted(m_ - o.m_);
  }
  HermitianForm operator*(double s) const { return trusted(m_ * s); }
  friend HermitianForm operator*(double s, const HermitianForm& f) { return f * s; }

  bool operator==(const HermitianForm& o) const { return m_ == o.m_; }

  std::string str() const {
    std::ostringstream os;
    os << m_;
    return os.str();
  }

private:
  static CMatrix symmetrized(const CMatrix& m) {
    CMatrix s = (m + m.adjoint()) * 0.5;
    for (Eigen::Index i = 0; i < s.rows(); ++i) s(i, i) = cplx(s(i, i).real(), 0.0);
    return s;
  }
  static void check_dim(int n) {
    if (n < 1 || n > kMaxDim) throw ShapeError("HermitianForm: dimension out of range");
  }
  void same_dim(const HermitianForm& o) const {
    if (o.dim() != dim()) throw ShapeError("HermitianForm: dimension mismatch");
  }

  CMatrix m_;
};

/// Eigenvalues of chi relative to a reference form, and the diagonal of a third
/// form g in the coordinates where the reference is the identity and chi is
/// diagonal. With reference == g the mus are all 1.
struct RelativeSpectrum {
  RVector lambdas;  ///< ascending
  RVector mus;
};

namespace detail {

inline void require_same_dim(const HermitianForm& a, const HermitianForm& b, const char* what) {
  if (a.dim() != b.dim()) throw ShapeError(std::string(what) + ": dimension mismatch");
}

inline void require_positive(const HermitianForm& a, const char* what) {
  if (!a.is_positive()) throw SingularFormError(std::string(what) + ": form is not positive definite");
}

/// tr(a^{-1} b) for a positive; no validation. Returns NaN when a is not positive.
inline double inv_trace(const CMatrix& a, const CMatrix& b) {
  Eigen::LLT<CMatrix> llt(a);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::quiet_NaN();
  return llt.solve(b).trace().real();
}

/// Cholesky factor A = L L^H of a small Hermitian matrix with plain loops
/// (Eigen's dynamic-size paths dominate the per-point cost otherwise). Only the
/// lower triangle of A is read. Returns false unless A is positive definite.
inline bool small_cholesky(const CMatrix& A, CMatrix& L) {
  const Eigen::Index n = A.rows();
  L.setZero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = A(j, j).real();
    for (Eigen::Index k = 0; k < j; ++k) d -= std::norm(L(j, k));
    if (!(d > 0.0)) return false;
    const double ljj = std::sqrt(d);
    L(j, j) = ljj;
    const double inv = 1.0 / ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      cplx s = A(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= L(i, k) * std::conj(L(j, k));
      L(i, j) = s * inv;
    }
  }
  return true;
}

inline double small_det_from_cholesky(const CMatrix& L) {
  double d = 1.0;
  for (Eigen::Index i = 0; i < L.rows(); ++i) d *= L(i, i).real() * L(i, i).real();
  return d;
}

/// A^{-1} = L^{-H} L^{-1} from the Cholesky factor.
inline void small_inverse_from_cholesky(const CMatrix& L, CMatrix& X) {
  const Eigen::Index n = L.rows();
  CMatrix M = CMatrix::Zero(n, n);  // M = L^{-1}, lower triangular
  for (Eigen::Index j = 0; j < n; ++j) {
    M(j, j) = 1.0 / L(j, j).real();
    for (Eigen::Index i = j + 1; i < n; ++i) {
      cplx s = 0.0;
      for (Eigen::Index k = j; k < i; ++k) s -= L(i, k) * M(k, j);
      M(i, j) = s / L(i, i).real();
    }
  }
  X.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i <= j; ++i) {
      cplx s = 0.0;
      for (Eigen::Index k = j; k < n; ++k) s += std::conj(M(k, i)) * M(k, j);
      X(i, j) = s;
      X(j, i) = std::conj(s);
    }
}

/// tr(X W) for square X, W.
inline double small_trace_product(const CMatrix& X, const CMatrix& W) {
  cplx s = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = 0; j < X.cols(); ++j) s += X(i, j) * W(j, i);
  return s.real();
}

/// Largest eigenvalue of a small Hermitian matrix (closed form for n <= 2).
inline double small_max_eigenvalue(const CMatrix& P) {
  const Eigen::Index n = P.rows();
  if (n == 1) return P(0, 0).real();
  if (n == 2) {
    const double a = P(0, 0).real(), d = P(1, 1).real();
    const double half = 0.5 * (a - d);
    return 0.5 * (a + d) + std::sqrt(half * half + std::norm(P(0, 1)));
  }
  CMatrix H = (P + P.adjoint()) * 0.5;
  Eigen::SelfAdjointEigenSolver<CMatrix> es(H, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(n - 1);
}

/// Smallest generalized eigenvalue of (m, ref) given the Cholesky factor of ref.
inline double min_relative_eigenvalue(const Eigen::LLT<CMatrix>& ref_llt, const CMatrix& m) {
  const auto& L = ref_llt.matrixL();
  CMatrix y = L.solve(m);
  CMatrix z = L.solve(y.adjoint()).adjoint();
  z = (z + z.adjoint()).eval() * 0.5;
  Eigen::SelfAdjointEigenSolver<CMatrix> es(z, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

/// Eigenvalues (ascending) of m relative to ref, given the Cholesky factor of ref.
inline RVector relative_eigenvalues(const Eigen::LLT<CMatrix>& ref_llt, const CMatrix& m) {
  const auto& L = ref_llt.matrixL();
  CMatrix y = L.solve(m);
  CMatrix z = L.solve(y.adjoint()).adjoint();
  z = (z + z.adjoint()).eval() * 0.5;
  Eigen::SelfAdjointEigenSolver<CMatrix> es(z, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline int permutation_sign(std::span<const int> p) {
  int inversions = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = i + 1; j < p.size(); ++j)
      if (p[i] > p[j]) ++inversions;
  return (inversions % 2 == 0) ? 1 : -1;
}

/// sum_{sigma,tau} sgn(sigma) sgn(tau) prod_r A_r(I[sigma(r)], I[tau(r)]):
/// the coefficient of beta_{I} in A_1 ^ ... ^ A_m.
inline cplx permutation_wedge(std::span<const CMatrix> factors, std::span<const int> index_set) {
  const int m = static_cast<int>(factors.size());
  std::vector<int> sigma(m);
  std::vector<int> tau(m);
  std::iota(sigma.begin(), sigma.end(), 0);
  cplx total = 0.0;
  do {
    const int s_sigma = permutation_sign(sigma);
    std::iota(tau.begin(), tau.end(), 0);
    do {
      cplx term = static_cast<double>(s_sigma * permutation_sign(tau));
      for (int r = 0; r < m; ++r) term *= factors[r](index_set[sigma[r]], index_set[tau[r]]);
      total += term;
    } while (std::next_permutation(tau.begin(), tau.end()));
  } while (std::next_permutation(sigma.begin(), sigma.end()));
  return total;
}

}  // namespace detail

/// Lambda_a b = a^{i jbar} b_{i jbar} = tr(a^{-1} b).
inline double trace_pair(const HermitianForm& a, const HermitianForm& b) {
  detail::require_same_dim(a, b, "trace_pair");
  detail::require_positive(a, "trace_pair");
  return detail::inv_trace(a.matrix(), b.matrix());
}

/// Simultaneous diagonalization: lambdas are the roots of det(chi - lambda ref) = 0
/// (ascending), mus the diagonal of g in the adapted frame. Cholesky reduction of
/// ref followed by a Hermitian eigensolve.
inline RelativeSpectrum relative_spectrum(const HermitianForm& g, const HermitianForm& chi,
                                          const HermitianForm& reference) {
  detail::require_same_dim(g, chi, "relative_spectrum");
  detail::require_same_dim(g, reference, "relative_spectrum");
  detail::require_positive(reference, "relative_spectrum");
  detail::require_positive(chi, "relative_spectrum");
  detail::require_positive(g, "relative_spectrum");

  Eigen::LLT<CMatrix> llt(reference.matrix());
  const auto& L = llt.matrixL();
  CMatrix y = L.solve(chi.matrix());
  CMatrix z = L.solve(y.adjoint()).adjoint();
  z = (z + z.adjoint()).eval() * 0.5;
  Eigen::SelfAdjointEigenSolver<CMatrix> es(z);

  // Frame T with T^H ref T = I and T^H chi T = diag(lambda).
  CMatrix T = L.adjoint().solve(es.eigenvectors());
  CMatrix g_adapted = T.adjoint() * g.matrix() * T;

  RelativeSpectrum out;
  out.lambdas = es.eigenvalues();
  out.mus = g_adapted.diagonal().real();
  return out;
}

inline RelativeSpectrum relative_spectrum(const HermitianForm& g, const HermitianForm& chi) {
  return relative_spectrum(g, chi, g);
}

enum class Condition { C1, C2, C3 };

inline const char* to_string(Condition c) {
  switch (c) {
    case Condition::C1: return "C1";
    case Condition::C2: return "C2";
    case Condition::C3: return "C3";
  }
  return "?";
}

/// Outcome of a strict pointwise inequality. `margin` is the minimum slack over
/// the quantified index (`index` attains it); |margin| <= kBoundaryTol is a fail
/// with `boundary` set.
struct ConditionVerdict {
  bool holds = false;
  double margin = 0.0;
  bool boundary = false;
  int index = -1;
};

namespace detail {

inline ConditionVerdict verdict_from_margin(double margin, int index) {
  ConditionVerdict v;
  v.margin = margin;
  v.index = index;
  v.boundary = std::abs(margin) <= kBoundaryTol;
  v.holds = margin > kBoundaryTol;
  return v;
}

/// Test-only fault injection for the property suite's sensitivity check.
inline bool& c2_sign_fault() {
  static thread_local bool fault = false;
  return fault;
}

inline ConditionVerdict condition_from_lambdas(const RVector& lambdas, Condition which) {
  const int n = static_cast<int>(lambdas.size());
  RVector inv(n);
  for (int i = 0; i < n; ++i) inv(i) = 1.0 / lambdas(i);

  switch (which) {
    case Condition::C1: {
      Eigen::Index arg = 0;
      const double worst = inv.maxCoeff(&arg);
      return verdict_from_margin(1.0 - worst, static_cast<int>(arg));
    }
    case Condition::C2: {
      if (n == 1) {
        ConditionVerdict v;
        v.holds = true;
        v.margin = std::numeric_limits<double>::infinity();
        v.index = 0;
        return v;
      }
      Eigen::Index arg = 0;
      const double worst = inv.maxCoeff(&arg);
      const double bound = 1.0 / (n - 1);
      const double margin = c2_sign_fault() ? worst - bound : bound - worst;
      return verdict_from_margin(margin, static_cast<int>(arg));
    }
    case Condition::C3: {
      double best = std::numeric_limits<double>::infinity();
      int arg = 0;
      for (int k = 0; k < n; ++k) {
        double partial = 0.0;
        for (int i = 0; i < n; ++i)
          if (i != k) partial += inv(i);
        const double slack = 1.0 - partial;
        if (slack < best) {
          best = slack;
          arg = k;
        }
      }
      return verdict_from_margin(best, arg);
    }
  }
  return {};
}

}  // namespace detail

/// The three pointwise conditions with nc = 1, for lambda the eigenvalues of
/// chi relative to g:
///   C1: 1/lambda_i < 1 for all i
///   C2: 1/lambda_i < 1/(n-1) for all i   (vacuously true for n = 1)
///   C3: sum_{i != k} 1/lambda_i < 1 for all k
inline ConditionVerdict check_condition(const HermitianForm& g, const HermitianForm& chi, Condition which) {
  return detail::condition_from_lambdas(relative_spectrum(g, chi).lambdas, which);
}

/// Diagonal coefficients (divided by (n-1)!) of (chi' - (n-1) omega) ^ chi'^{n-2}
/// in the frame where omega = I and chi' = diag(lambda):
///   prod_{j != k} lambda_j - sum_{i != k} prod_{j != i,k} lambda_j.
inline RVector cone_form_coefficients(const HermitianForm& omega, const HermitianForm& chi_prime) {
  const RVector lambdas = relative_spectrum(omega, chi_prime).lambdas;
  const int n = static_cast<int>(lambdas.size());
  RVector coeff(n);
  for (int k = 0; k < n; ++k) {
    double top = 1.0;
    for (int j = 0; j < n; ++j)
      if (j != k) top *= lambdas(j);
    double lower = 0.0;
    for (int i = 0; i < n; ++i) {
      if (i == k) continue;
      double p = 1.0;
      for (int j = 0; j < n; ++j)
        if (j != k && j != i) p *= lambdas(j);
      lower += p;
    }
    coeff(k) = top - lower;
  }
  return coeff;
}

/// Positivity of the (n-1,n-1)-form (chi' - (n-1) omega) ^ chi'^{n-2} (nc = 1),
/// evaluated from its diagonal coefficients in the adapted frame. The margin is
/// each coefficient normalized by prod_{j != k} lambda_j, i.e. the same slack as
/// C3. For n = 1 the form is chi' itself and the verdict is always positive.
inline ConditionVerdict cone_form_positive(const HermitianForm& omega, const HermitianForm& chi_prime) {
  detail::require_same_dim(omega, chi_prime, "cone_form_positive");
  const int n = omega.dim();
  if (n == 1) {
    detail::require_positive(omega, "cone_form_positive");
    detail::require_positive(chi_prime, "cone_form_positive");
    ConditionVerdict v;
    v.holds = true;
    v.margin = 1.0;
    v.index = 0;
    return v;
  }
  const RVector lambdas = relative_spectrum(omega, chi_prime).lambdas;
  const RVector coeff = cone_form_coefficients(omega, chi_prime);
  double best = std::numeric_limits<double>::infinity();
  int arg = 0;
  for (int k = 0; k < n; ++k) {
    double top = 1.0;
    for (int j = 0; j < n; ++j)
      if (j != k) top *= lambdas(j);
    const double m = coeff(k) / top;
    if (m < best) {
      best = m;
      arg = k;
    }
  }
  return detail::verdict_from_margin(best, arg);
}

/// One factor of a wedge product of (1,1)-forms, repeated `multiplicity` times.
struct WedgeFactor {
  CMatrix form;
  int multiplicity = 1;
};

namespace detail {

inline std::vector<CMatrix> expand_factors(std::span<const WedgeFactor> factors, int& dim) {
  std::vector<CMatrix> out;
  dim = -1;
  for (const auto& f : factors) {
    if (f.form.rows() != f.form.cols()) throw ShapeError("wedge: non-square factor");
    if (dim < 0) dim = static_cast<int>(f.form.rows());
    if (f.form.rows() != dim) throw ShapeError("wedge: factors of different dimension");
    if (f.multiplicity < 0) throw ShapeError("wedge: negative multiplicity");
    for (int r = 0; r < f.multiplicity; ++r) out.push_back(f.form);
  }
  return out;
}

}  // namespace detail

/// Brute-force wedge expansion by explicit summation over pairs of permutations.
///
/// With `excluded` = k the factors must have total degree (n-1, n-1) and the
/// result is the coefficient of beta_1 ^ ... ^ beta_k(omitted) ^ ... ^ beta_n,
/// where beta_i = (sqrt(-1)/2) dz^i ^ dz^ibar. Without `excluded` the total
/// degree must be (n, n) and the result is the top coefficient. For a single
/// form A repeated m times this is m! times the corresponding principal minor.
inline double wedge_oracle(std::span<const WedgeFactor> factors, std::optional<int> excluded) {
  int n = 0;
  const std::vector<CMatrix> expanded = detail::expand_factors(factors, n);
  if (n <= 0) throw ShapeError("wedge_oracle: no factors");
  std::vector<int> index_set;
  for (int i = 0; i < n; ++i)
    if (!excluded || i != *excluded) index_set.push_back(i);
  if (excluded && (*excluded < 0 || *excluded >= n)) throw ShapeError("wedge_oracle: excluded index out of range");
  if (static_cast<int>(expanded.size()) != static_cast<int>(index_set.size()))
    throw ShapeError("wedge_oracle: total degree does not match the requested coefficient");
  if (expanded.empty()) return 1.0;
  return detail::permutation_wedge(expanded, index_set).real();
}

inline double wedge_oracle(std::initializer_list<WedgeFactor> factors, std::optional<int> excluded) {
  return wedge_oracle(std::span<const WedgeFactor>(factors.begin(), factors.size()), excluded);
}

/// Hermitian matrix P of an (n-1,n-1)-form v given as a wedge of (1,1)-forms:
/// P(k,l) is the top coefficient of v ^ E_{kl}. The form is positive (i.e.
/// sqrt(-1) v ^ a ^ conj(a) > 0 for every nonzero (1,0)-form a) iff P is
/// positive definite. P(k,k) equals wedge_oracle(factors, k).
inline CMatrix wedge_pairing_matrix(std::span<const WedgeFactor> factors) {
  int n = 0;
  std::vector<CMatrix> expanded = detail::expand_factors(factors, n);
  if (static_cast<int>(expanded.size()) != n - 1)
    throw ShapeError("wedge_pairing_matrix: factors must have total degree (n-1, n-1)");
  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  expanded.push_back(CMatrix::Zero(n, n));
  CMatrix P(n, n);
  for (int k = 0; k < n; ++k) {
    for (int l = 0; l < n; ++l) {
      expanded.back().setZero();
      expanded.back()(k, l) = 1.0;
      P(k, l) = detail::permutation_wedge(expanded, all);
    }
  }
  return P;
}

/// Top coefficient of A_1 ^ ... ^ A_n by polarization of the determinant:
///   sum_{S subset [n]} (-1)^{n-|S|} det(sum_{r in S} A_r)
/// (n! times the mixed discriminant). Used on hot paths; wedge_oracle is the
/// independent check.
inline cplx wedge_top(std::span<const CMatrix> factors) {
  const int m = static_cast<int>(factors.size());
  if (m == 0) return 1.0;
  const Eigen::Index n = factors[0].rows();
  if (n != m) throw ShapeError("wedge_top: need exactly n factors");
  cplx total = 0.0;
  CMatrix sum(n, n);
  for (std::uint32_t mask = 1; mask < (1u << m); ++mask) {
    sum.setZero();
    int count = 0;
    for (int r = 0; r < m; ++r)
      if (mask & (1u << r)) {
        sum += factors[r];
        ++count;
      }
    const double sign = ((m - count) % 2 == 0) ? 1.0 : -1.0;
    total += sign * sum.determinant();
  }
  return total;
}

}  // namespace jflow
