#include <gtest/gtest.h>

#include "jflow/cone.hpp"
#include "jflow/random.hpp"

using namespace jflow;

namespace {

RVec cls(std::initializer_list<Rational> v) { return RVec(v); }

RVec random_class(CounterRng& rng, int rank) {
  RVec v(static_cast<std::size_t>(rank));
  for (auto& x : v) x = Rational(static_cast<long long>(rng.uniform_int(-12, 12)), static_cast<long long>(rng.uniform_int(1, 6)));
  return v;
}

}  // namespace

TEST(Rational, ParseAndFormat) {
  EXPECT_EQ(parse_rational("3/6"), Rational(1, 2));
  EXPECT_EQ(parse_rational(" -7 "), Rational(-7));
  EXPECT_EQ(parse_rational("-1.25"), Rational(-5, 4));
  EXPECT_EQ(parse_rational(".5"), Rational(1, 2));
  EXPECT_EQ(to_string(Rational(-6, 4)), "-3/2");
  EXPECT_EQ(to_string(Rational(4, 2)), "2");
  EXPECT_THROW(parse_rational("1/0"), std::invalid_argument);
  EXPECT_THROW(parse_rational("x"), std::invalid_argument);
  EXPECT_THROW(parse_rational("1.2.3"), std::invalid_argument);
}

TEST(Rational, Inertia) {
  const auto in = inertia({{0, 1}, {1, 0}});
  EXPECT_EQ(in.positive, 1);
  EXPECT_EQ(in.negative, 1);
  const auto z = inertia({{1, 1, 0}, {1, 1, 0}, {0, 0, -2}});
  EXPECT_EQ(z.positive, 1);
  EXPECT_EQ(z.negative, 1);
  EXPECT_EQ(z.zero, 1);
  const auto d = inertia({{0, 0}, {0, 0}});
  EXPECT_EQ(d.zero, 2);
}

TEST(Cone, IntersectExamples) {
  const auto lat = lattices::blowup_p2(1);
  const auto H = cls({1, 0}), E = cls({0, 1});
  EXPECT_EQ(intersect(lat, H, H), 1);
  EXPECT_EQ(intersect(lat, H, E), 0);
  EXPECT_EQ(intersect(lat, cls({3, 1}), cls({2, -1})), 7);
  EXPECT_THROW(intersect(lat, cls({1}), H), ShapeError);
}

TEST(Cone, ShippedLatticesSatisfyHodgeIndex) {
  for (const auto& lat : {lattices::blowup_p2(1), lattices::blowup_p2(2), lattices::p1xp1()}) {
    EXPECT_TRUE(lat.hodge_index());
    EXPECT_TRUE(nakai_test(lat, lat.reference_kahler).passes);
  }
}

TEST(Cone, NakaiExamples) {
  const auto lat = lattices::blowup_p2(1);
  EXPECT_TRUE(nakai_test(lat, cls({3, -2})).passes);
  const auto f = nakai_test(lat, cls({3, 1}));
  EXPECT_FALSE(f.passes);
  EXPECT_EQ(f.failure, NakaiFailure::curve);
  EXPECT_EQ(lat.curves[f.curve].name, "E");
  EXPECT_EQ(f.value, -1);
  const auto sq = nakai_test(lat, cls({1, -2}));
  EXPECT_FALSE(sq.passes);
  EXPECT_EQ(sq.failure, NakaiFailure::square);
  EXPECT_EQ(sq.value, -3);
}

TEST(Cone, ClassConditionExamples) {
  const auto lat = lattices::blowup_p2(1);
  const auto w = cls({2, -1});
  const auto same = class_condition(lat, w, w);
  EXPECT_EQ(same.shifted, w);
  EXPECT_TRUE(same.nakai.passes);

  const auto r = class_condition(lat, cls({2, -1}), cls({5, -1}));
  // c = (10 - 1) / (25 - 1) = 3/8
  EXPECT_EQ(r.c, Rational(3, 8));
  EXPECT_EQ(r.shifted, cls({Rational(7, 4), Rational(1, 4)}));
  EXPECT_TRUE(r.identities_hold);
  EXPECT_EQ(r.shifted_square, 3);
  EXPECT_FALSE(r.nakai.passes);
  EXPECT_EQ(lat.curves[r.nakai.curve].name, "E");

  EXPECT_THROW(class_condition(lat, cls({3, 1}), w), std::invalid_argument);
}

TEST(Cone, ClassConditionTriggersSearch) {
  const auto lat = lattices::blowup_p2(1);
  const auto r = class_condition(lat, cls({2, -1}), cls({5, -1}));
  const auto d = divisor_search(lat, r.shifted);
  ASSERT_TRUE(d.certified) << d.message;
  EXPECT_TRUE(certificate_sound(lat, r.shifted, d));
}

TEST(Cone, DivisorSearchBlowupExample) {
  const auto lat = lattices::blowup_p2(1);
  const auto alpha = cls({3, 1});
  const auto d = divisor_search(lat, alpha);
  ASSERT_TRUE(d.certified) << d.message;
  ASSERT_EQ(d.zariski.size(), 1u);
  EXPECT_EQ(d.zariski[0].coefficient, 1);
  EXPECT_EQ(d.margin, 1);
  ASSERT_EQ(d.divisor.size(), 1u);
  EXPECT_EQ(lat.curves[d.divisor[0].curve].name, "E");
  EXPECT_EQ(d.divisor[0].coefficient, 2);
  EXPECT_EQ(d.remainder, cls({3, -1}));
  EXPECT_EQ(intersect(lat, d.remainder, d.remainder), 8);
  EXPECT_EQ(intersect(lat, d.remainder, cls({0, 1})), 1);
  EXPECT_EQ(intersect(lat, d.remainder, cls({1, -1})), 2);
  EXPECT_TRUE(certificate_sound(lat, alpha, d));
  EXPECT_TRUE(divisor_search(lat, d.remainder).divisor.empty());
}

TEST(Cone, DivisorSearchKahlerIsEmpty) {
  const auto lat = lattices::blowup_p2(1);
  const auto d = divisor_search(lat, cls({3, -2}));
  EXPECT_TRUE(d.certified);
  EXPECT_TRUE(d.divisor.empty());
  EXPECT_THROW(divisor_search(lat, cls({1, -2})), std::invalid_argument);
}

TEST(Cone, DivisorSearchRandomTwoPointBlowup) {
  const auto lat = lattices::blowup_p2(2);
  CounterRng rng(61);
  int searched = 0;
  for (int s = 0; s < 400; ++s) {
    const auto alpha = random_class(rng, 3);
    if (!(intersect(lat, alpha, alpha) > 0) || !(intersect(lat, alpha, lat.reference_kahler) > 0)) continue;
    const auto d = divisor_search(lat, alpha);
    ASSERT_TRUE(d.certified) << format_class(lat, alpha) << ": " << d.message;
    EXPECT_TRUE(certificate_sound(lat, alpha, d));
    EXPECT_TRUE(divisor_search(lat, d.remainder).divisor.empty());
    if (!d.divisor.empty()) ++searched;
  }
  EXPECT_GT(searched, 10);
}

TEST(Cone, NoCertificateOnInconsistentCurveList) {
  // two "negative curves" meeting with E1.E2 = 2 in a lattice that breaks the Hodge index
  SurfaceLattice lat;
  lat.rank = 3;
  lat.Q = {{-1, 2, 0}, {2, -1, 0}, {0, 0, 1}};
  lat.basis = {"A", "B", "H"};
  lat.curves = {{"A", {1, 0, 0}, -1}, {"B", {0, 1, 0}, -1}};
  lat.reference_kahler = {0, 0, 1};
  lat.validate();
  EXPECT_FALSE(lat.hodge_index());
  const auto alpha = cls({1, 0, 3});
  ASSERT_FALSE(nakai_test(lat, alpha).passes);
  const auto d = divisor_search(lat, alpha);
  EXPECT_FALSE(d.certified);
  EXPECT_FALSE(d.message.empty());
}

TEST(Cone, ShiftedClassIdentitiesRandom) {
  const auto lat = lattices::blowup_p2(2);
  CounterRng rng(62);
  int checked = 0;
  while (checked < 200) {
    const auto w = random_class(rng, 3), x = random_class(rng, 3);
    if (!nakai_test(lat, w).passes || !nakai_test(lat, x).passes) continue;
    const auto r = class_condition(lat, w, x);
    EXPECT_EQ(r.shifted_square, r.omega_square);
    EXPECT_EQ(r.shifted_dot_chi0, r.omega_dot_chi0);
    ++checked;
  }
}

TEST(Cone, ClassStrings) {
  const auto lat = lattices::blowup_p2(2);
  EXPECT_EQ(parse_class(lat, "3H - 2E1 + 1/2 E2"), cls({3, -2, Rational(1, 2)}));
  EXPECT_EQ(parse_class(lat, "H+E2"), cls({1, 0, 1}));
  EXPECT_EQ(parse_class(lat, "3, -1, 0"), cls({3, -1, 0}));
  EXPECT_THROW(parse_class(lat, "3H + F"), std::invalid_argument);
  EXPECT_THROW(parse_class(lat, "3,1"), std::invalid_argument);
  EXPECT_EQ(format_class(lat, cls({3, -1, 0})), "3H - E1");
  EXPECT_EQ(parse_class(lat, format_class(lat, cls({Rational(5, 2), 0, -1}))), cls({Rational(5, 2), 0, -1}));
}

TEST(Cone, JsonRoundTripAndErrors) {
  const auto lat = lattices::blowup_p2(2);
  const auto back = lattice_from_json(to_json(lat));
  EXPECT_EQ(back.Q, lat.Q);
  EXPECT_EQ(back.curves.size(), lat.curves.size());
  auto j = to_json(lat);
  j["curves"][0]["self_intersection"] = "-2";
  try {
    lattice_from_json(j);
    FAIL();
  } catch (const InputError& e) {
    EXPECT_EQ(e.path(), "curves[0].self_intersection");
  }
  auto k = to_json(lat);
  k["bogus"] = 1;
  EXPECT_THROW(lattice_from_json(k), InputError);
  auto flat = to_json(lattices::blowup_p2(1));
  flat["Q"] = {"1", "0", "0", "-1"};
  EXPECT_EQ(lattice_from_json(flat).Q, lattices::blowup_p2(1).Q);
}
