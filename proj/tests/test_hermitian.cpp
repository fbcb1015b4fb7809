#include <gtest/gtest.h>

#include <cmath>

#include "jflow/hermitian.hpp"
#include "jflow/random.hpp"

using namespace jflow;

namespace {

HermitianForm diag(std::initializer_list<double> d) { return HermitianForm::diagonal(d); }

}  // namespace

TEST(HermitianForm, ConstructionSymmetrizes) {
  CMatrix m(2, 2);
  m << 2.0, cplx(1.0, 1.0), cplx(1.0, -1.0 + 1e-14), 3.0;
  HermitianForm f(m);
  EXPECT_EQ(f(0, 1), std::conj(f(1, 0)));
  EXPECT_TRUE(f.is_positive());
  EXPECT_FALSE(diag({1.0, -1.0}).is_positive());
  EXPECT_FALSE(diag({1.0, 1e-14}).is_positive());
}

TEST(TracePair, Examples) {
  EXPECT_DOUBLE_EQ(trace_pair(HermitianForm::identity(2), HermitianForm::identity(2)), 2.0);
  EXPECT_DOUBLE_EQ(trace_pair(HermitianForm::scalar(2, 2.0), HermitianForm::identity(2)), 1.0);
  EXPECT_THROW(trace_pair(diag({1.0, -1.0}), HermitianForm::identity(2)), SingularFormError);
  EXPECT_THROW(trace_pair(HermitianForm::identity(2), HermitianForm::identity(3)), ShapeError);
}

TEST(TracePair, MatchesGeneralizedEigenvalues) {
  CounterRng rng(11);
  for (int s = 0; s < 200; ++s) {
    const HermitianForm a = random_positive_form(rng, 3);
    const HermitianForm b = random_positive_form(rng, 3);
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXcd> ges(b.matrix(), a.matrix(), Eigen::EigenvaluesOnly);
    const double expected = ges.eigenvalues().sum();
    EXPECT_NEAR(trace_pair(a, b), expected, 1e-10 * std::abs(expected));
  }
}

TEST(RelativeSpectrum, Examples) {
  auto s = relative_spectrum(HermitianForm::identity(3), diag({3.0, 1.0, 2.0}));
  EXPECT_NEAR(s.lambdas(0), 1.0, 1e-14);
  EXPECT_NEAR(s.lambdas(1), 2.0, 1e-14);
  EXPECT_NEAR(s.lambdas(2), 3.0, 1e-14);
  auto t = relative_spectrum(HermitianForm::scalar(2, 2.0), HermitianForm::identity(2));
  EXPECT_NEAR(t.lambdas(0), 0.5, 1e-15);
  EXPECT_NEAR(t.lambdas(1), 0.5, 1e-15);
  EXPECT_THROW(relative_spectrum(HermitianForm::identity(2), diag({1.0, 0.0})), SingularFormError);
}

TEST(RelativeSpectrum, ConsistencyProperties) {
  CounterRng rng(12);
  for (int n = 1; n <= 5; ++n) {
    for (int s = 0; s < 200; ++s) {
      const HermitianForm g = random_positive_form(rng, n);
      const HermitianForm chi = random_positive_form(rng, n, false, 0.2, 5.0);
      const auto sp = relative_spectrum(g, chi);
      double inv_sum = 0.0, sum = 0.0, prod = 1.0;
      for (int i = 0; i < n; ++i) {
        EXPECT_GT(sp.lambdas(i), 0.0);
        if (i > 0) EXPECT_LE(sp.lambdas(i - 1), sp.lambdas(i));
        EXPECT_GT(sp.mus(i), 0.0);
        inv_sum += 1.0 / sp.lambdas(i);
        sum += sp.lambdas(i);
        prod *= sp.lambdas(i);
      }
      EXPECT_NEAR(inv_sum, trace_pair(chi, g), 1e-10 * inv_sum);
      EXPECT_NEAR(sum, trace_pair(g, chi), 1e-10 * sum);
      const double det_ratio = chi.determinant() / g.determinant();
      EXPECT_NEAR(prod, det_ratio, 1e-10 * det_ratio);

      const double t = rng.uniform(0.1, 10.0);
      const auto scaled = relative_spectrum(g, chi * t);
      for (int i = 0; i < n; ++i) EXPECT_NEAR(scaled.lambdas(i), t * sp.lambdas(i), 1e-10 * t * sp.lambdas(i));
    }
  }
}

TEST(CheckCondition, Examples) {
  const auto g = HermitianForm::identity(3);
  const auto a = diag({3.0, 3.0, 3.0});
  EXPECT_TRUE(check_condition(g, a, Condition::C1).holds);
  EXPECT_TRUE(check_condition(g, a, Condition::C2).holds);
  EXPECT_TRUE(check_condition(g, a, Condition::C3).holds);
  EXPECT_NEAR(check_condition(g, a, Condition::C2).margin, 0.5 - 1.0 / 3.0, 1e-14);

  const auto b = diag({1.2, 10.0, 10.0});
  EXPECT_FALSE(check_condition(g, b, Condition::C2).holds);
  const auto c3 = check_condition(g, b, Condition::C3);
  EXPECT_TRUE(c3.holds);
  EXPECT_NEAR(c3.margin, 1.0 - (1.0 / 1.2 + 0.1), 1e-14);
  EXPECT_TRUE(check_condition(g, b, Condition::C1).holds);

  const auto g2 = HermitianForm::identity(2);
  const auto d = diag({0.9, 5.0});
  EXPECT_FALSE(check_condition(g2, d, Condition::C1).holds);
  EXPECT_FALSE(check_condition(g2, d, Condition::C2).holds);
  EXPECT_FALSE(check_condition(g2, d, Condition::C3).holds);
}

TEST(CheckCondition, DegenerateAndBoundary) {
  const auto g = HermitianForm::identity(1);
  EXPECT_TRUE(check_condition(g, diag({0.5}), Condition::C2).holds);
  EXPECT_FALSE(check_condition(g, diag({0.5}), Condition::C1).holds);

  const auto v = check_condition(HermitianForm::identity(2), diag({1.0, 3.0}), Condition::C1);
  EXPECT_FALSE(v.holds);
  EXPECT_TRUE(v.boundary);
}

TEST(ConeFormPositive, Examples) {
  const auto v = cone_form_positive(HermitianForm::identity(2), diag({3.0, 3.0}));
  EXPECT_TRUE(v.holds);
  EXPECT_NEAR(v.margin, 2.0 / 3.0, 1e-14);

  const auto w = cone_form_positive(HermitianForm::identity(3), diag({2.0, 2.0, 2.0}));
  EXPECT_FALSE(w.holds);
  EXPECT_TRUE(w.boundary);

  EXPECT_TRUE(cone_form_positive(HermitianForm::identity(1), diag({0.01})).holds);
}

TEST(WedgeOracle, Examples) {
  const CMatrix chi = diag({2.0, 7.0}).matrix();
  EXPECT_NEAR(wedge_oracle({{chi, 1}}, 1), 2.0, 1e-15);
  EXPECT_NEAR(wedge_oracle({{chi, 1}}, 0), 7.0, 1e-15);

  const CMatrix id = HermitianForm::identity(3).matrix();
  const CMatrix c3 = diag({2.0, 3.0, 5.0}).matrix();
  EXPECT_NEAR(wedge_oracle({{id, 1}, {c3, 1}}, 0), 8.0, 1e-14);

  EXPECT_THROW(wedge_oracle({{id, 1}}, 0), ShapeError);
  EXPECT_THROW(wedge_oracle({{id, 3}}, 0), ShapeError);
}

TEST(WedgeOracle, RepeatedFormGivesFactorialMinor) {
  CounterRng rng(13);
  const HermitianForm a = random_positive_form(rng, 4);
  // a^3 with k excluded: 3! times the principal minor on the complement of k
  for (int k = 0; k < 4; ++k) {
    std::vector<int> keep;
    for (int i = 0; i < 4; ++i)
      if (i != k) keep.push_back(i);
    CMatrix minor(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) minor(i, j) = a.matrix()(keep[i], keep[j]);
    const double expected = 6.0 * minor.determinant().real();
    EXPECT_NEAR(wedge_oracle({{a.matrix(), 3}}, k), expected, 1e-10 * std::abs(expected));
  }
  EXPECT_NEAR(wedge_oracle({{a.matrix(), 4}}, std::nullopt), 24.0 * a.determinant(), 1e-10 * 24.0 * a.determinant());
}

// Mixed discriminant of (A_1..A_m) on an index set via the permanent-style
// expansion over a single permutation of columns applied to each row choice.
static cplx mixed_by_rows(std::span<const CMatrix> f, std::span<const int> idx) {
  // sum over bijections r -> rows sigma and the determinant of the matrix whose
  // row j is taken from factor assigned to row j.
  const int m = static_cast<int>(f.size());
  std::vector<int> sigma(m);
  std::iota(sigma.begin(), sigma.end(), 0);
  cplx total = 0.0;
  do {
    CMatrix M(m, m);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c) M(sigma[r], c) = f[r](idx[sigma[r]], idx[c]);
    total += M.determinant();
  } while (std::next_permutation(sigma.begin(), sigma.end()));
  return total;
}

TEST(WedgeOracle, MatchesRowwiseDeterminantExpansion) {
  CounterRng rng(14);
  for (int s = 0; s < 50; ++s) {
    std::vector<CMatrix> f;
    for (int r = 0; r < 2; ++r) f.push_back(random_positive_form(rng, 3).matrix());
    std::vector<WedgeFactor> wf{{f[0], 1}, {f[1], 1}};
    for (int k = 0; k < 3; ++k) {
      std::vector<int> idx;
      for (int i = 0; i < 3; ++i)
        if (i != k) idx.push_back(i);
      const double expected = mixed_by_rows(f, idx).real();
      EXPECT_NEAR(wedge_oracle(wf, k), expected, 1e-10 * std::abs(expected));
    }
    f.push_back(random_positive_form(rng, 3).matrix());
    std::vector<int> all{0, 1, 2};
    const double top = mixed_by_rows(f, all).real();
    EXPECT_NEAR(wedge_top(f).real(), top, 1e-10 * std::abs(top));
  }
}

TEST(Conditions, ImplicationChainAndOracleEquivalence) {
  CounterRng rng(15);
  for (int n = 2; n <= 4; ++n) {
    for (int s = 0; s < 500; ++s) {
      auto [omega, chi] = random_condition_pair(rng, n);
      const bool c1 = check_condition(omega, chi, Condition::C1).holds;
      const bool c2 = check_condition(omega, chi, Condition::C2).holds;
      const bool c3 = check_condition(omega, chi, Condition::C3).holds;
      if (c2) EXPECT_TRUE(c3);
      if (c3) EXPECT_TRUE(c1);
      if (n == 2) {
        EXPECT_EQ(c1, c2);
        EXPECT_EQ(c2, c3);
      }
      const bool cone = cone_form_positive(omega, chi).holds;
      EXPECT_EQ(cone, c3);
      CMatrix first = chi.matrix() - static_cast<double>(n - 1) * omega.matrix();
      std::vector<WedgeFactor> wf{{first, 1}, {chi.matrix(), n - 2}};
      Eigen::SelfAdjointEigenSolver<CMatrix> es(wedge_pairing_matrix(wf), Eigen::EigenvaluesOnly);
      EXPECT_EQ(es.eigenvalues()(0) > 0.0, c3);
    }
  }
}

TEST(Conditions, FaultHookFlipsC2) {
  detail::c2_sign_fault() = true;
  const bool faulty = check_condition(HermitianForm::identity(3), diag({3.0, 3.0, 3.0}), Condition::C2).holds;
  detail::c2_sign_fault() = false;
  EXPECT_FALSE(faulty);
}
