#pragma once

// Randomized invariant suites driven by the counter-based generator. Reports
// contain no timings, so the same seed and sizes give byte-identical JSON.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "jflow/cone.hpp"
#include "jflow/functionals.hpp"
#include "jflow/hermitian.hpp"
#include "jflow/random.hpp"

namespace jflow {

struct SuiteSizes {
  int condition_samples = 2000;  // per n in 2..4
  int functional_samples = 200;
  int path_samples = 4;
  int cone_samples = 1000;
};

struct SuiteReport {
  std::string name;
  long samples = 0;
  long failures = 0;
  nlohmann::json counters = nlohmann::json::object();
  std::optional<nlohmann::json> counterexample;

  void fail(nlohmann::json ce) {
    ++failures;
    if (!counterexample) counterexample = std::move(ce);
  }
  bool passed() const { return failures == 0; }
};

struct PropertyReport {
  std::uint64_t seed = 0;
  std::vector<SuiteReport> suites;
  bool passed() const {
    for (const auto& s : suites)
      if (!s.passed()) return false;
    return true;
  }
};

inline nlohmann::json matrix_json(const CMatrix& m) {
  nlohmann::json re = nlohmann::json::array(), im = nlohmann::json::array();
  bool complex = false;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json r = nlohmann::json::array(), c = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      r.push_back(m(i, j).real());
      c.push_back(m(i, j).imag());
      complex = complex || m(i, j).imag() != 0.0;
    }
    re.push_back(r);
    im.push_back(c);
  }
  if (!complex) return re;
  return {{"re", re}, {"im", im}};
}

// ---- conditions

struct ConditionSample {
  bool c1 = false, c2 = false, c3 = false, cone = false, pairing = false, adapted = false;
};

inline ConditionSample evaluate_conditions(const HermitianForm& omega, const HermitianForm& chi) {
  const int n = omega.dim();
  ConditionSample s;
  s.c1 = check_condition(omega, chi, Condition::C1).holds;
  s.c2 = check_condition(omega, chi, Condition::C2).holds;
  s.c3 = check_condition(omega, chi, Condition::C3).holds;
  s.cone = cone_form_positive(omega, chi).holds;
  const CMatrix first = chi.matrix() - static_cast<double>(n - 1) * omega.matrix();
  const std::vector<WedgeFactor> wf{{first, 1}, {chi.matrix(), n - 2}};
  Eigen::SelfAdjointEigenSolver<CMatrix> es(wedge_pairing_matrix(wf), Eigen::EigenvaluesOnly);
  const double scale = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
  s.pairing = es.eigenvalues()(0) > kPositivityRatio * scale;
  // every brute-force coefficient in the frame omega = I, chi = diag(lambda)
  const RVector lam = relative_spectrum(omega, chi).lambdas;
  CMatrix D = CMatrix::Zero(n, n);
  for (int i = 0; i < n; ++i) D(i, i) = lam(i);
  const CMatrix first_d = D - static_cast<double>(n - 1) * CMatrix::Identity(n, n);
  s.adapted = true;
  for (int k = 0; k < n; ++k) s.adapted = s.adapted && wedge_oracle({{first_d, 1}, {D, n - 2}}, k) > 0.0;
  return s;
}

inline std::vector<std::string> condition_violations(int n, const ConditionSample& s) {
  std::vector<std::string> out;
  if (s.c2 && !s.c3) out.push_back("C2 does not imply C3");
  if (s.c3 && !s.c1) out.push_back("C3 does not imply C1");
  if (n == 2 && !(s.c1 == s.c2 && s.c2 == s.c3)) out.push_back("n = 2 verdicts differ");
  if (s.cone != s.c3) out.push_back("cone form disagrees with C3");
  if (s.pairing != s.c3) out.push_back("pairing matrix disagrees with C3");
  if (s.adapted != s.c3) out.push_back("wedge coefficients disagree with C3");
  return out;
}

// Shrinks a failing pair: first to the diagonal frame, then to the fewest
// decimal digits of the eigenvalues that still fail.
inline nlohmann::json minimize_condition_counterexample(const HermitianForm& omega, const HermitianForm& chi) {
  const int n = omega.dim();
  nlohmann::json ce{{"n", n}, {"omega", matrix_json(omega.matrix())}, {"chi", matrix_json(chi.matrix())}};
  const RVector lam = relative_spectrum(omega, chi).lambdas;
  auto fails = [&](const std::vector<double>& l) {
    const auto s = evaluate_conditions(HermitianForm::identity(n), HermitianForm::diagonal(l));
    return !condition_violations(n, s).empty();
  };
  std::vector<double> l(lam.data(), lam.data() + n);
  if (!fails(l)) {
    ce["minimized"] = nullptr;
    return ce;
  }
  for (int digits = 0; digits <= 17; ++digits) {
    std::vector<double> r(l.size());
    const double f = std::pow(10.0, digits);
    for (std::size_t i = 0; i < l.size(); ++i) r[i] = std::round(l[i] * f) / f;
    if (std::all_of(r.begin(), r.end(), [](double x) { return x > 0.0; }) && fails(r)) {
      l = r;
      break;
    }
  }
  const auto s = evaluate_conditions(HermitianForm::identity(n), HermitianForm::diagonal(l));
  ce["minimized"] = {{"omega", "identity"}, {"chi_diagonal", l}, {"violations", condition_violations(n, s)}};
  return ce;
}

inline SuiteReport condition_suite(std::uint64_t seed, int samples_per_n, int n_lo = 2, int n_hi = 4) {
  SuiteReport rep;
  rep.name = "conditions";
  for (int n = n_lo; n <= n_hi; ++n) {
    CounterRng rng(seed, 100 + static_cast<std::uint64_t>(n));
    long c1 = 0, c2 = 0, c3 = 0;
    for (int k = 0; k < samples_per_n; ++k) {
      const auto [omega, chi] = random_condition_pair(rng, n);
      const auto s = evaluate_conditions(omega, chi);
      c1 += s.c1;
      c2 += s.c2;
      c3 += s.c3;
      ++rep.samples;
      const auto v = condition_violations(n, s);
      if (!v.empty()) {
        auto ce = minimize_condition_counterexample(omega, chi);
        ce["sample"] = k;
        ce["violations"] = v;
        rep.fail(std::move(ce));
      }
    }
    rep.counters["n" + std::to_string(n)] = {{"C1", c1}, {"C2", c2}, {"C3", c3}};
  }
  return rep;
}

// ---- functionals

struct FunctionalTolerances {
  double aubin_yau_forms = 1e-8;
  double entropy_floor = -1e-6;
  double translation = 1e-8;
  double path = 1e-5;
};

inline SuiteReport functional_suite(std::uint64_t seed, int samples, int path_samples,
                                    const FunctionalTolerances& tol = {}) {
  SuiteReport rep;
  rep.name = "functionals";
  CounterRng rng(seed, 200);
  double worst_forms = 0.0, worst_shift = 0.0, worst_path = 0.0;
  double worst_entropy = std::numeric_limits<double>::infinity();
  long chain = 0;
  for (int k = 0; k < samples; ++k) {
    // at least 16 points per wavelength of the highest mode
    const int n = 1 + k % 3;
    const TorusGrid g(n, GridMode::invariant, n == 3 ? 16 : 48);
    const auto chi0 = random_positive_form(rng, n, true, 0.5, 2.0);
    const double strength = rng.uniform(0.05, 0.8);
    auto phi = random_admissible_potential(rng, g, chi0, strength, 3, n == 3 ? 1 : 2);
    phi += rng.uniform(-1.0, 1.0);
    ++rep.samples;
    const auto ay = eval_IE_JE(chi0, phi);
    const double ent = eval_entropy(chi0, phi);
    const double forms = std::abs(ay.IE - ay.IE_by_parts) / std::max(std::abs(ay.IE), 1e-300);
    worst_forms = std::max(worst_forms, forms);
    worst_entropy = std::min(worst_entropy, ent);
    const bool chain_ok = ay.IE >= 0.0 && ay.JE >= 0.0 && ay.IE / (n + 1) <= ay.JE * (1 + 1e-12) &&
                          ay.JE <= ay.IE * n / (n + 1.0) * (1 + 1e-12);
    chain += !chain_ok;
    std::vector<std::string> why;
    if (!chain_ok) why.push_back("Aubin-Yau chain");
    if (forms > tol.aubin_yau_forms) why.push_back("I^E forms disagree");
    if (ent < tol.entropy_floor) why.push_back("entropy below floor");
    if (!why.empty())
      rep.fail({{"sample", k}, {"n", n}, {"chi0", matrix_json(chi0.matrix())}, {"strength", strength},
                {"IE", ay.IE}, {"JE", ay.JE}, {"IE_by_parts", ay.IE_by_parts}, {"entropy", ent}, {"violations", why}});
  }
  // translation invariance of Jhat and path independence on fewer, finer samples
  for (int k = 0; k < path_samples; ++k) {
    const TorusGrid g(2, GridMode::invariant, 32);
    const auto omega = random_positive_form(rng, 2, true, 0.5, 2.0);
    const auto chi0 = random_positive_form(rng, 2, true, 0.5, 2.0);
    auto phi = random_admissible_potential(rng, g, chi0, rng.uniform(0.1, 0.6));
    phi += rng.uniform(-1.0, 1.0);
    ++rep.samples;
    const auto lin = PathSpec::linear(), quad = PathSpec::quadratic();
    const double j0 = eval_Jhat(omega, chi0, phi, lin).value;
    const double j1 = eval_Jhat(omega, chi0, phi + 7.3, lin).value;
    const double shift = std::abs(j0 - j1) / std::max(std::abs(j0), 1e-300);
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); };
    const double pJ = rel(eval_J(omega, chi0, phi, lin).value, eval_J(omega, chi0, phi, quad).value);
    const double pI = rel(eval_I(chi0, phi, lin).value, eval_I(chi0, phi, quad).value);
    const double pJh = rel(j0, eval_Jhat(omega, chi0, phi, quad).value);
    const double pM = rel(eval_mabuchi(chi0, phi, lin).value, eval_mabuchi(chi0, phi, quad).value);
    const double path = std::max({pJ, pI, pJh, pM});
    worst_shift = std::max(worst_shift, shift);
    worst_path = std::max(worst_path, path);
    std::vector<std::string> why;
    if (shift > tol.translation) why.push_back("Jhat translation");
    if (path > tol.path) why.push_back("path dependence");
    if (!why.empty())
      rep.fail({{"path_sample", k}, {"omega", matrix_json(omega.matrix())}, {"chi0", matrix_json(chi0.matrix())},
                {"shift", shift}, {"J", pJ}, {"I", pI}, {"Jhat", pJh}, {"mabuchi", pM}, {"violations", why}});
  }
  rep.counters = {{"aubin_yau_chain_violations", chain},
                  {"max_IE_form_gap", worst_forms},
                  {"min_entropy", worst_entropy},
                  {"max_jhat_shift", worst_shift},
                  {"max_path_gap", worst_path}};
  return rep;
}

// ---- cone

// aH - sum b_i E_i with 0 < b_i < a, which lands in the Kahler cone of a
// blow-up of P^2 about half the time
inline RVec random_rational_class(CounterRng& rng, int rank, int numer = 12, int denom = 6) {
  RVec v(static_cast<std::size_t>(rank));
  v[0] = Rational(rng.uniform_int(1, numer), rng.uniform_int(1, denom));
  for (int i = 1; i < rank; ++i) v[i] = -v[0] * Rational(rng.uniform_int(1, 2 * numer - 1), 2 * numer);
  return v;
}

inline SuiteReport cone_suite(std::uint64_t seed, int pairs) {
  SuiteReport rep;
  rep.name = "cone";
  CounterRng rng(seed, 300);
  const auto lat = lattices::blowup_p2(2);
  long accepted = 0, drawn = 0, certificates = 0, nonempty = 0;
  while (accepted < pairs && drawn < 200L * pairs) {
    ++drawn;
    const auto w = random_rational_class(rng, lat.rank), x = random_rational_class(rng, lat.rank);
    if (!nakai_test(lat, w).passes || !nakai_test(lat, x).passes) continue;
    ++accepted;
    ++rep.samples;
    const auto r = class_condition(lat, w, x);
    std::vector<std::string> why;
    if (r.shifted_square != r.omega_square) why.push_back("(nc chi0 - omega)^2 != omega^2");
    if (r.shifted_dot_chi0 != r.omega_dot_chi0) why.push_back("(nc chi0 - omega).chi0 != omega.chi0");
    const RVec& alpha = r.shifted;
    if (intersect(lat, alpha, alpha) > 0 && intersect(lat, alpha, lat.reference_kahler) > 0) {
      const auto d = divisor_search(lat, alpha);
      ++certificates;
      if (!d.divisor.empty()) ++nonempty;
      if (!d.certified) why.push_back("no certificate: " + d.message);
      else if (!certificate_sound(lat, alpha, d)) why.push_back("unsound certificate");
      else if (!divisor_search(lat, d.remainder).divisor.empty()) why.push_back("search not idempotent");
    }
    if (!why.empty())
      rep.fail({{"sample", accepted - 1}, {"omega", format_class(lat, w)}, {"chi0", format_class(lat, x)}, {"violations", why}});
  }
  if (accepted < pairs) rep.fail({{"error", "could not draw enough Kahler pairs"}});
  rep.counters = {{"draws", drawn}, {"divisor_searches", certificates}, {"nonempty_divisors", nonempty}};
  return rep;
}

inline PropertyReport property_suite(std::uint64_t seed, const SuiteSizes& sizes = {}) {
  PropertyReport rep;
  rep.seed = seed;
  rep.suites.push_back(condition_suite(seed, sizes.condition_samples));
  rep.suites.push_back(functional_suite(seed, sizes.functional_samples, sizes.path_samples));
  rep.suites.push_back(cone_suite(seed, sizes.cone_samples));
  return rep;
}

inline nlohmann::json to_json(const SuiteReport& s) {
  nlohmann::json j{{"name", s.name}, {"samples", s.samples}, {"failures", s.failures}, {"counters", s.counters}};
  j["counterexample"] = s.counterexample ? *s.counterexample : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json to_json(const PropertyReport& r) {
  nlohmann::json j{{"seed", r.seed}, {"passed", r.passed()}};
  j["suites"] = nlohmann::json::array();
  for (const auto& s : r.suites) j["suites"].push_back(to_json(s));
  return j;
}

}  // namespace jflow
