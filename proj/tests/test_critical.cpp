#include <gtest/gtest.h>

#include <cmath>

#include "jflow/critical.hpp"
#include "jflow/random.hpp"

using namespace jflow;

namespace {

PotentialField cos_x1(const TorusGrid& g, double amp) {
  return PotentialField::from_function(g, [&](const std::vector<double>& x) { return amp * std::cos(x[0]); });
}

double sup_diff(const PotentialField& a, const PotentialField& b) { return (a + (-1.0) * b).sup_abs(); }

}  // namespace

TEST(Linearized, CosineSymbol) {
  for (int n = 1; n <= 3; ++n) {
    TorusGrid g(n, GridMode::invariant, n == 3 ? 16 : 64);
    const auto I = HermitianForm::identity(n);
    const auto chi = metric_field(I, PotentialField(g));
    const auto v = cos_x1(g, 1.0);
    const auto out = linearized_apply(chi, I, v);
    // fd4 symbol of D^2 at k = 1
    const double h = g.spacing();
    const double d = (8.0 * std::sin(h) - std::sin(2.0 * h)) / (6.0 * h);
    for (std::size_t p = 0; p < g.size(); ++p) EXPECT_NEAR(out[p], -d * d * v[p] / (4.0 * n), 1e-13);
    if (n < 3)
      for (std::size_t p = 0; p < g.size(); ++p) EXPECT_NEAR(out[p], -v[p] / (4.0 * n), 1e-5);
  }
}

TEST(Linearized, ConstantsAndFullMode) {
  TorusGrid g(2, GridMode::full, 8);
  const auto I = HermitianForm::identity(2);
  const auto chi = metric_field(HermitianForm::diagonal({1.0, 2.0}), PotentialField(g));
  EXPECT_EQ(linearized_apply(chi, I, PotentialField::constant(g, 3.0)).sup_abs(), 0.0);
  const auto v = PotentialField::from_function(g, [](const std::vector<double>& x) { return std::cos(x[2]); });
  const auto out = linearized_apply(chi, I, v);
  // d dbar cos(y1) = -cos(y1)/4 in the (1,1) slot; h_11 = 1
  const double h = g.spacing();
  const double d = (8.0 * std::sin(h) - std::sin(2.0 * h)) / (6.0 * h);
  for (std::size_t p = 0; p < g.size(); ++p) EXPECT_NEAR(out[p], -d * d * v[p] / 8.0, 1e-13);
}

TEST(Linearized, SymmetricOnConstantCoefficients) {
  CounterRng rng(51);
  for (int n = 1; n <= 3; ++n) {
    TorusGrid g(n, GridMode::invariant, n == 3 ? 12 : 24);
    const auto chi0 = random_positive_form(rng, n, true);
    const auto w = random_positive_form(rng, n, true);
    const auto chi = metric_field(chi0, PotentialField(g));
    PotentialField u(g), v(g);
    for (std::size_t p = 0; p < g.size(); ++p) {
      u.values[p] = rng.normal();
      v.values[p] = rng.normal();
    }
    const auto Lu = linearized_apply(chi, w, u), Lv = linearized_apply(chi, w, v);
    double a = 0.0, b = 0.0, uu = 0.0;
    for (std::size_t p = 0; p < g.size(); ++p) {
      a += u[p] * Lv[p];
      b += Lu[p] * v[p];
      uu += u[p] * Lu[p];
    }
    EXPECT_LE(std::abs(a - b), 1e-10 * std::max(std::abs(a), std::abs(b))) << a << " " << b;
    EXPECT_LT(uu, 0.0);
  }
}

TEST(Linearized, OperatorIsDerivativeOfResidual) {
  CounterRng rng(52);
  TorusGrid g(2, GridMode::invariant, 16);
  const FlowProblem pb(random_positive_form(rng, 2, true), random_positive_form(rng, 2, true));
  const auto phi = random_admissible_potential(rng, g, pb.chi0, 0.5);
  const auto v = random_admissible_potential(rng, g, pb.chi0, 1.0);
  const double eps = 1e-6;
  const auto rp = evaluate_rhs(pb, phi + eps * v, false).rhs;
  const auto rm = evaluate_rhs(pb, phi + (-eps) * v, false).rhs;
  const auto lin = linearized_apply(metric_field(pb.chi0, phi), pb.omega, v);
  for (std::size_t p = 0; p < g.size(); ++p) EXPECT_NEAR((rp[p] - rm[p]) / (2 * eps), lin[p], 1e-6);
}

TEST(Linearized, InadmissibleThrows) {
  TorusGrid g(1, GridMode::invariant, 16);
  const auto chi = metric_field(HermitianForm::identity(1), cos_x1(g, 8.0));
  EXPECT_THROW(linearized_apply(chi, HermitianForm::identity(1), cos_x1(g, 1.0)), SingularFormError);
}

TEST(LinearSolve, VariableCoefficients) {
  CounterRng rng(53);
  TorusGrid g(2, GridMode::invariant, 16);
  const auto chi0 = random_positive_form(rng, 2, true);
  const auto chi = metric_field(chi0, random_admissible_potential(rng, g, chi0, 0.6));
  const LinearizedOperator op(chi, random_positive_form(rng, 2, true));
  auto xs = random_admissible_potential(rng, g, chi0, 1.0).values;
  project_out(xs, discrete_kernel(g));
  const auto b = op.apply(xs);
  std::vector<double> x;
  const auto rep = solve_linearized(op, b, x, 1e-11, 4000);
  EXPECT_TRUE(rep.converged) << rep.iterations << " " << rep.relative_residual;
  double err = 0.0, scale = 0.0;
  for (std::size_t p = 0; p < x.size(); ++p) {
    err = std::max(err, std::abs(x[p] - xs[p]));
    scale = std::max(scale, std::abs(xs[p]));
  }
  EXPECT_LE(err, 1e-6 * scale);
}

TEST(LinearSolve, KernelHasExpectedDimension) {
  TorusGrid g(2, GridMode::invariant, 8);
  const auto I = HermitianForm::identity(2);
  const auto chi = metric_field(I, PotentialField(g));
  const auto ker = discrete_kernel(g);
  ASSERT_EQ(ker.size(), 4u);
  for (const auto& k : ker) {
    PotentialField f(g);
    f.values = k;
    EXPECT_LE(linearized_apply(chi, I, f).sup_abs(), 1e-12);
  }
}

TEST(Newton, ExactSolutionIsImmediate) {
  TorusGrid g(2, GridMode::invariant, 16);
  const auto res = newton_solve(HermitianForm::identity(2), HermitianForm::scalar(2, 2.0), PotentialField(g));
  EXPECT_TRUE(res.report.converged);
  EXPECT_LE(res.report.iterations, 1);
  EXPECT_EQ(res.phi.sup_abs(), 0.0);
}

TEST(Newton, ConvergesAndResidualDecreases) {
  TorusGrid g(2, GridMode::invariant, 16);
  const auto omega = HermitianForm::identity(2), chi0 = HermitianForm::scalar(2, 2.0);
  const auto res = newton_solve(omega, chi0, cos_x1(g, 0.3));
  ASSERT_TRUE(res.report.converged) << res.report.message;
  const auto& h = res.report.residual_history;
  for (std::size_t k = 1; k < h.size(); ++k) EXPECT_LT(h[k], h[k - 1]);
  EXPECT_LT(res.report.residual, 1e-10);
  EXPECT_NEAR(res.phi.mean(), 0.0, 1e-15);
  // sum of 1/lambda_i = Lambda_chi(omega) = nc = 1 pointwise
  const auto chi = metric_field(chi0, res.phi);
  for (std::size_t p = 0; p < g.size(); p += 7) EXPECT_NEAR(trace_pair(chi.form(p), omega), 1.0, 2e-10);
}

TEST(Newton, UniquenessAcrossSeeds) {
  TorusGrid g(2, GridMode::invariant, 16);
  CounterRng rng(54);
  const auto omega = random_positive_form(rng, 2, false);
  const auto chi0 = random_positive_form(rng, 2, false);
  std::vector<PotentialField> sols;
  NewtonSettings set;
  for (int s = 0; s < 3; ++s) {
    const auto res = newton_solve(omega, chi0, random_admissible_potential(rng, g, chi0, 0.7), set);
    ASSERT_TRUE(res.report.converged) << res.report.message;
    sols.push_back(res.phi);
  }
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b) EXPECT_LE(sup_diff(sols[a], sols[b]), 2 * set.tol);
}

TEST(Newton, RejectsBadInput) {
  TorusGrid g(1, GridMode::invariant, 16);
  const auto I = HermitianForm::identity(1);
  EXPECT_THROW(newton_solve(I, I, cos_x1(g, 8.0)), SingularFormError);
  NewtonSettings bad;
  bad.damping = 0.0;
  EXPECT_THROW(newton_solve(I, I, PotentialField(g), bad), std::invalid_argument);
  NewtonSettings few;
  few.max_iters = 0;
  const auto res = newton_solve(I, HermitianForm::scalar(1, 2.0), cos_x1(g, 0.5), few);
  EXPECT_FALSE(res.report.converged);
}
