#pragma once

// Deterministic sample generation for the property suites. Every draw is a
// pure function of (seed, stream, counter), so suites can be replayed sample by
// sample from a reported counterexample index.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "jflow/hermitian.hpp"
#include "jflow/torus.hpp"

namespace jflow {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

class CounterRng {
public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(splitmix64(seed) ^ splitmix64(~stream)) {}

  std::uint64_t next_u64() noexcept { return splitmix64(key_ + 0x632BE59BD9B4E019ull * counter_++); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi) noexcept {
    const auto span = static_cast<std::uint64_t>(hi - lo + 1);
    return lo + static_cast<int>(next_u64() % span);
  }

  /// Standard normal (Box-Muller, one value per call).
  double normal() noexcept {
    double u = uniform();
    while (u <= 0.0) u = uniform();
    const double v = uniform();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * v);
  }

  std::uint64_t counter() const noexcept { return counter_; }

private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// B B^H / n + floor I with Gaussian B (complex unless `real`), multiplied by a
/// log-uniform scale in [scale_lo, scale_hi].
inline HermitianForm random_positive_form(CounterRng& rng, int n, bool real = false, double scale_lo = 1.0,
                                          double scale_hi = 1.0, double floor = 0.05) {
  CMatrix B(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) B(i, j) = cplx(rng.normal(), real ? 0.0 : rng.normal());
  const double scale = std::exp(rng.uniform(std::log(scale_lo), std::log(scale_hi)));
  CMatrix m = (B * B.adjoint() / static_cast<double>(n) + floor * CMatrix::Identity(n, n)) * scale;
  return HermitianForm::trusted((m + m.adjoint()) * 0.5);
}

/// Random pair (g, chi) whose relative eigenvalues straddle the thresholds of
/// the three conditions (roughly 1/2 .. 3n).
inline std::pair<HermitianForm, HermitianForm> random_condition_pair(CounterRng& rng, int n) {
  HermitianForm g = random_positive_form(rng, n);
  CMatrix U = random_positive_form(rng, n).matrix();
  // Random frame: chi = T^H diag(l) T with T^H g T... built from g's Cholesky factor.
  Eigen::LLT<CMatrix> llt(g.matrix());
  CMatrix L = llt.matrixL();
  Eigen::HouseholderQR<CMatrix> qr(U);
  CMatrix Q = qr.householderQ();
  RVector lambdas(n);
  for (int i = 0; i < n; ++i) lambdas(i) = std::exp(rng.uniform(std::log(0.5), std::log(3.0 * n)));
  CMatrix inner = Q * lambdas.cast<cplx>().asDiagonal() * Q.adjoint();
  CMatrix chi = L * inner * L.adjoint();
  return {g, HermitianForm::trusted((chi + chi.adjoint()) * 0.5)};
}

/// Sum of a few random low-frequency cosine modes, rescaled so that the complex
/// Hessian perturbs chi0 by at most `strength` in relative spectral radius.
/// The result is admissible with margin >= 1 - strength.
inline PotentialField random_admissible_potential(CounterRng& rng, const TorusGrid& grid, const HermitianForm& chi0,
                                                  double strength, int modes = 3, int max_wave = 2) {
  std::vector<CosineMode> list;
  for (int m = 0; m < modes; ++m) {
    CosineMode mode;
    mode.wavevector.resize(static_cast<std::size_t>(grid.axes()));
    bool nonzero = false;
    for (auto& k : mode.wavevector) {
      k = rng.uniform_int(-max_wave, max_wave);
      nonzero = nonzero || k != 0;
    }
    if (!nonzero) mode.wavevector[static_cast<std::size_t>(rng.uniform_int(0, grid.axes() - 1))] = 1;
    mode.amplitude = rng.normal();
    mode.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    list.push_back(std::move(mode));
  }
  PotentialField phi = cosine_modes(grid, list);
  const FormField H = complex_hessian(phi);
  Eigen::LLT<CMatrix> llt(chi0.matrix());
  double radius = 0.0;
  for (std::size_t p = 0; p < H.size(); ++p) {
    const RVector ev = detail::relative_eigenvalues(llt, H.at(p));
    radius = std::max({radius, std::abs(ev(0)), std::abs(ev(ev.size() - 1))});
  }
  if (radius > 0.0) phi *= strength / radius;
  return phi;
}

}  // namespace jflow
