#pragma once

// Intersection arithmetic on a Kahler surface given by a finite lattice:
// cone membership against a curve list, the class condition for the flow,
// and a constructive search for a negative divisor D with alpha - D Kahler.

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "jflow/error.hpp"
#include "jflow/rational.hpp"

namespace jflow {

struct Curve {
  std::string name;
  RVec cls;
  Rational self_intersection;
  bool negative() const { return self_intersection < 0; }
};

struct SurfaceLattice {
  int rank = 0;
  RMat Q;
  std::vector<std::string> basis;
  std::vector<Curve> curves;
  RVec reference_kahler;

  void require_length(const RVec& x, const char* what) const {
    if (static_cast<int>(x.size()) != rank)
      throw ShapeError(std::string(what) + ": class has length " + std::to_string(x.size()) + ", lattice rank is " +
                       std::to_string(rank));
  }

  // symmetric Q, stored self-intersections match; throws InputError otherwise
  void validate() const {
    if (rank <= 0) throw InputError("rank", "rank must be positive");
    if (static_cast<int>(Q.size()) != rank) throw InputError("Q", "expected " + std::to_string(rank) + " rows");
    for (int i = 0; i < rank; ++i) {
      if (static_cast<int>(Q[i].size()) != rank) throw InputError("Q", "row " + std::to_string(i) + " has wrong length");
      for (int j = 0; j < i; ++j)
        if (Q[i][j] != Q[j][i]) throw InputError("Q", "matrix is not symmetric");
    }
    if (!basis.empty() && static_cast<int>(basis.size()) != rank) throw InputError("basis", "needs one name per generator");
    for (std::size_t k = 0; k < curves.size(); ++k) {
      const auto& c = curves[k];
      const std::string path = "curves[" + std::to_string(k) + "]";
      if (static_cast<int>(c.cls.size()) != rank) throw InputError(path + ".class", "wrong length");
      if (dot(c.cls, Q, c.cls) != c.self_intersection)
        throw InputError(path + ".self_intersection", "stored value " + to_string(c.self_intersection) +
                                                          " differs from C.C = " + to_string(dot(c.cls, Q, c.cls)));
    }
    if (static_cast<int>(reference_kahler.size()) != rank) throw InputError("reference_kahler", "wrong length");
  }

  Inertia signature() const { return inertia(Q); }
  bool hodge_index() const {
    const auto s = signature();
    return s.positive == 1 && s.negative == rank - 1;
  }
};

inline Rational intersect(const SurfaceLattice& lat, const RVec& x, const RVec& y) {
  lat.require_length(x, "intersect");
  lat.require_length(y, "intersect");
  return dot(x, lat.Q, y);
}

inline RVec combine(const RVec& a, const Rational& s, const RVec& b) {
  RVec out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += s * b[i];
  return out;
}

enum class NakaiFailure { none, square, reference, curve };

struct NakaiResult {
  bool passes = true;
  NakaiFailure failure = NakaiFailure::none;
  int curve = -1;
  Rational value = 0;
  std::string witness;
};

// Strict test alpha^2 > 0, alpha.beta > 0, alpha.C > 0 for every listed curve.
// Membership is relative to the supplied curve list.
inline NakaiResult nakai_test(const SurfaceLattice& lat, const RVec& alpha) {
  lat.require_length(alpha, "nakai_test");
  NakaiResult r;
  const Rational sq = dot(alpha, lat.Q, alpha);
  if (sq <= 0) {
    r = {false, NakaiFailure::square, -1, sq, "alpha^2 = " + to_string(sq)};
    return r;
  }
  const Rational ref = dot(alpha, lat.Q, lat.reference_kahler);
  if (ref <= 0) {
    r = {false, NakaiFailure::reference, -1, ref, "alpha.reference = " + to_string(ref)};
    return r;
  }
  for (std::size_t k = 0; k < lat.curves.size(); ++k) {
    const Rational v = dot(alpha, lat.Q, lat.curves[k].cls);
    if (v <= 0) {
      r = {false, NakaiFailure::curve, static_cast<int>(k), v, "alpha." + lat.curves[k].name + " = " + to_string(v)};
      return r;
    }
  }
  return r;
}

struct ClassConditionReport {
  Rational c = 0;
  RVec shifted;  // 2c chi0 - omega
  Rational shifted_square = 0;
  Rational omega_square = 0;
  Rational shifted_dot_chi0 = 0;
  Rational omega_dot_chi0 = 0;
  bool identities_hold = false;
  NakaiResult nakai;
};

inline ClassConditionReport class_condition(const SurfaceLattice& lat, const RVec& omega, const RVec& chi0) {
  if (!nakai_test(lat, omega).passes) throw std::invalid_argument("class_condition: omega is not a Kahler class");
  if (!nakai_test(lat, chi0).passes) throw std::invalid_argument("class_condition: chi0 is not a Kahler class");
  ClassConditionReport r;
  const Rational oc = dot(omega, lat.Q, chi0), cc = dot(chi0, lat.Q, chi0);
  r.c = oc / cc;
  r.shifted = combine(RVec(lat.rank, Rational(0)), 2 * r.c, chi0);
  r.shifted = combine(r.shifted, Rational(-1), omega);
  r.shifted_square = dot(r.shifted, lat.Q, r.shifted);
  r.omega_square = dot(omega, lat.Q, omega);
  r.shifted_dot_chi0 = dot(r.shifted, lat.Q, chi0);
  r.omega_dot_chi0 = oc;
  r.identities_hold = r.shifted_square == r.omega_square && r.shifted_dot_chi0 == r.omega_dot_chi0;
  r.nakai = nakai_test(lat, r.shifted);
  return r;
}

struct DivisorTerm {
  int curve = -1;
  Rational coefficient = 0;
};

struct DivisorSearchResult {
  bool certified = false;
  std::vector<DivisorTerm> divisor;
  RVec remainder;
  // coefficients of the nef part before inflation, and the dyadic margin used
  std::vector<DivisorTerm> zariski;
  Rational margin = 0;
  int zariski_rounds = 0;
  std::string message;
};

inline RVec divisor_class(const SurfaceLattice& lat, const std::vector<DivisorTerm>& D) {
  RVec out(lat.rank, Rational(0));
  for (const auto& t : D) out = combine(out, t.coefficient, lat.curves[t.curve].cls);
  return out;
}

// Independent re-check of a certificate.
inline bool certificate_sound(const SurfaceLattice& lat, const RVec& alpha, const DivisorSearchResult& res) {
  if (!res.certified) return false;
  for (const auto& t : res.divisor) {
    if (t.curve < 0 || t.curve >= static_cast<int>(lat.curves.size())) return false;
    const auto& C = lat.curves[t.curve];
    if (!(dot(C.cls, lat.Q, C.cls) < 0) || !(t.coefficient > 0)) return false;
  }
  const RVec rem = combine(alpha, Rational(-1), divisor_class(lat, res.divisor));
  return rem == res.remainder && nakai_test(lat, rem).passes;
}

inline DivisorSearchResult divisor_search(const SurfaceLattice& lat, const RVec& alpha, int max_margin_exponent = 30) {
  lat.require_length(alpha, "divisor_search");
  if (!(dot(alpha, lat.Q, alpha) > 0) || !(dot(alpha, lat.Q, lat.reference_kahler) > 0))
    throw std::invalid_argument("divisor_search: requires alpha^2 > 0 and alpha.reference > 0");
  DivisorSearchResult res;
  if (nakai_test(lat, alpha).passes) {
    res.certified = true;
    res.remainder = alpha;
    res.message = "alpha is already Kahler";
    return res;
  }

  std::vector<int> S;
  RVec a;
  RVec P = alpha;
  const int ncurves = static_cast<int>(lat.curves.size());
  for (int round = 0; round <= ncurves; ++round) {
    bool grew = false;
    for (int k = 0; k < ncurves; ++k) {
      if (!lat.curves[k].negative() || std::find(S.begin(), S.end(), k) != S.end()) continue;
      if (dot(P, lat.Q, lat.curves[k].cls) <= 0) {
        S.push_back(k);
        grew = true;
      }
    }
    if (!grew) break;
    ++res.zariski_rounds;
    const std::size_t m = S.size();
    RMat G(m, RVec(m));
    RVec rhs(m);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) G[i][j] = dot(lat.curves[S[i]].cls, lat.Q, lat.curves[S[j]].cls);
      rhs[i] = dot(alpha, lat.Q, lat.curves[S[i]].cls);
    }
    const auto in = inertia(G);
    if (in.negative != static_cast<int>(m) || !solve_exact(G, rhs, a)) {
      res.message = "Gram matrix of the negative curves is not negative definite; curve list likely incomplete";
      return res;
    }
    for (std::size_t i = 0; i < m; ++i)
      if (a[i] < 0) {
        res.message = "negative Zariski coefficient on " + lat.curves[S[i]].name + "; curve list likely incomplete";
        return res;
      }
    P = alpha;
    for (std::size_t i = 0; i < m; ++i) P = combine(P, -a[i], lat.curves[S[i]].cls);
  }
  if (S.empty()) {
    res.message = "alpha fails on a curve of non-negative square; no negative curve to subtract";
    return res;
  }
  for (std::size_t i = 0; i < S.size(); ++i) res.zariski.push_back({S[i], a[i]});

  // margins 1, 1/2, 1/4, ...: the first that makes the remainder strictly Kahler
  Rational delta = 1;
  for (int k = 0; k <= max_margin_exponent; ++k, delta /= 2) {
    RVec rem = P;
    for (int idx : S) rem = combine(rem, -delta, lat.curves[idx].cls);
    if (nakai_test(lat, rem).passes) {
      for (std::size_t i = 0; i < S.size(); ++i) res.divisor.push_back({S[i], a[i] + delta});
      res.remainder = rem;
      res.margin = delta;
      res.certified = true;
      res.message = "certificate found";
      return res;
    }
  }
  res.message = "dyadic margin search exhausted; curve list likely incomplete";
  return res;
}

// ---- lattice files and class strings

namespace detail {

inline Rational json_rational(const nlohmann::json& j, const std::string& path) {
  if (j.is_number_integer()) return Rational(j.get<long long>());
  if (j.is_string()) {
    try {
      return parse_rational(j.get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw InputError(path, e.what());
    }
  }
  throw InputError(path, "expected an integer or a \"p/q\" string");
}

inline RVec json_rvec(const nlohmann::json& j, const std::string& path) {
  if (!j.is_array()) throw InputError(path, "expected an array");
  RVec v;
  for (std::size_t i = 0; i < j.size(); ++i) v.push_back(json_rational(j[i], path + "[" + std::to_string(i) + "]"));
  return v;
}

}  // namespace detail

inline SurfaceLattice lattice_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InputError("", "lattice must be a JSON object");
  static const std::vector<std::string> known = {"rank", "Q", "basis", "curves", "reference_kahler", "name"};
  for (const auto& [k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end()) throw InputError(k, "unknown field");
  SurfaceLattice lat;
  if (!j.contains("rank") || !j["rank"].is_number_integer()) throw InputError("rank", "missing or not an integer");
  lat.rank = j["rank"].get<int>();
  if (lat.rank <= 0) throw InputError("rank", "must be positive");
  if (!j.contains("Q")) throw InputError("Q", "missing");
  const auto& q = j["Q"];
  if (q.is_array() && !q.empty() && q[0].is_array()) {
    for (std::size_t i = 0; i < q.size(); ++i) lat.Q.push_back(detail::json_rvec(q[i], "Q[" + std::to_string(i) + "]"));
  } else {
    const RVec flat = detail::json_rvec(q, "Q");
    if (flat.size() != static_cast<std::size_t>(lat.rank * lat.rank)) throw InputError("Q", "expected rank^2 entries");
    for (int i = 0; i < lat.rank; ++i) lat.Q.emplace_back(flat.begin() + i * lat.rank, flat.begin() + (i + 1) * lat.rank);
  }
  if (j.contains("basis")) {
    if (!j["basis"].is_array()) throw InputError("basis", "expected an array of names");
    for (const auto& b : j["basis"]) lat.basis.push_back(b.get<std::string>());
  }
  if (!j.contains("curves") || !j["curves"].is_array()) throw InputError("curves", "missing or not an array");
  for (std::size_t k = 0; k < j["curves"].size(); ++k) {
    const auto& c = j["curves"][k];
    const std::string path = "curves[" + std::to_string(k) + "]";
    if (!c.is_object()) throw InputError(path, "expected an object");
    for (const auto& [key, v] : c.items())
      if (key != "name" && key != "class" && key != "self_intersection") throw InputError(path + "." + key, "unknown field");
    Curve cv;
    cv.name = c.value("name", "C" + std::to_string(k));
    if (!c.contains("class")) throw InputError(path + ".class", "missing");
    cv.cls = detail::json_rvec(c["class"], path + ".class");
    if (!c.contains("self_intersection")) throw InputError(path + ".self_intersection", "missing");
    cv.self_intersection = detail::json_rational(c["self_intersection"], path + ".self_intersection");
    lat.curves.push_back(std::move(cv));
  }
  if (!j.contains("reference_kahler")) throw InputError("reference_kahler", "missing");
  lat.reference_kahler = detail::json_rvec(j["reference_kahler"], "reference_kahler");
  lat.validate();
  return lat;
}

inline SurfaceLattice load_lattice(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("", "cannot open lattice file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("", std::string("lattice is not valid JSON: ") + e.what());
  }
  return lattice_from_json(j);
}

inline nlohmann::json to_json(const RVec& v) {
  auto out = nlohmann::json::array();
  for (const auto& x : v) out.push_back(to_string(x));
  return out;
}

inline nlohmann::json to_json(const SurfaceLattice& lat) {
  nlohmann::json j;
  j["rank"] = lat.rank;
  auto q = nlohmann::json::array();
  for (const auto& row : lat.Q) q.push_back(to_json(row));
  j["Q"] = q;
  if (!lat.basis.empty()) j["basis"] = lat.basis;
  auto cs = nlohmann::json::array();
  for (const auto& c : lat.curves)
    cs.push_back({{"name", c.name}, {"class", to_json(c.cls)}, {"self_intersection", to_string(c.self_intersection)}});
  j["curves"] = cs;
  j["reference_kahler"] = to_json(lat.reference_kahler);
  return j;
}

// "3H+E", "3H - 2E1 + 1/2E2" (basis names) or "3,1" (coordinates)
inline RVec parse_class(const SurfaceLattice& lat, const std::string& text) {
  const std::string s = trim(text);
  const bool symbolic = std::any_of(s.begin(), s.end(), [](char ch) { return std::isalpha(static_cast<unsigned char>(ch)); });
  RVec v(lat.rank, Rational(0));
  if (!symbolic) {
    std::stringstream ss(s);
    std::string item;
    RVec out;
    while (std::getline(ss, item, ',')) out.push_back(parse_rational(item));
    if (static_cast<int>(out.size()) != lat.rank) throw std::invalid_argument("class '" + s + "' does not match the lattice rank");
    return out;
  }
  if (lat.basis.empty()) throw std::invalid_argument("lattice has no basis names; give the class as coordinates");
  std::size_t i = 0;
  bool any = false;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i >= s.size()) break;
    Rational sign = 1;
    if (s[i] == '+' || s[i] == '-') {
      if (s[i] == '-') sign = -1;
      ++i;
      while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    } else if (any) {
      throw std::invalid_argument("expected + or - in class '" + s + "'");
    }
    std::size_t j = i;
    while (j < s.size() && (std::isdigit(static_cast<unsigned char>(s[j])) || s[j] == '/' || s[j] == '.')) ++j;
    const Rational coef = j > i ? parse_rational(s.substr(i, j - i)) : Rational(1);
    while (j < s.size() && (s[j] == '*' || std::isspace(static_cast<unsigned char>(s[j])))) ++j;
    std::size_t k = j;
    while (k < s.size() && (std::isalnum(static_cast<unsigned char>(s[k])) || s[k] == '_')) ++k;
    const std::string name = s.substr(j, k - j);
    const auto it = std::find(lat.basis.begin(), lat.basis.end(), name);
    if (it == lat.basis.end()) throw std::invalid_argument("unknown generator '" + name + "' in class '" + s + "'");
    v[static_cast<std::size_t>(it - lat.basis.begin())] += sign * coef;
    any = true;
    i = k;
  }
  if (!any) throw std::invalid_argument("empty class");
  return v;
}

inline std::string format_class(const SurfaceLattice& lat, const RVec& v) {
  if (lat.basis.empty()) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + to_string(v[i]);
    return out;
  }
  std::string out;
  for (int i = 0; i < lat.rank; ++i) {
    if (v[i] == 0) continue;
    Rational a = v[i];
    if (a < 0) {
      out += out.empty() ? "-" : " - ";
      a = -a;
    } else if (!out.empty()) {
      out += " + ";
    }
    if (a != 1) out += to_string(a) + (boost::multiprecision::denominator(a) != 1 ? " " : "");
    out += lat.basis[i];
  }
  return out.empty() ? "0" : out;
}

// Shipped example lattices.
namespace lattices {

inline SurfaceLattice blowup_p2(int points) {
  if (points < 1 || points > 2) throw std::invalid_argument("blowup_p2: 1 or 2 points supported");
  SurfaceLattice lat;
  lat.rank = points + 1;
  lat.Q.assign(lat.rank, RVec(lat.rank, Rational(0)));
  lat.Q[0][0] = 1;
  for (int i = 1; i <= points; ++i) lat.Q[i][i] = -1;
  lat.basis.push_back("H");
  auto e = [&](int i) {
    RVec v(lat.rank, Rational(0));
    v[i] = 1;
    return v;
  };
  if (points == 1) {
    lat.basis.push_back("E");
    lat.curves.push_back({"E", e(1), -1});
    lat.curves.push_back({"H-E", {1, -1}, 0});
  } else {
    lat.basis.push_back("E1");
    lat.basis.push_back("E2");
    lat.curves.push_back({"E1", e(1), -1});
    lat.curves.push_back({"E2", e(2), -1});
    lat.curves.push_back({"H-E1-E2", {1, -1, -1}, -1});
  }
  lat.reference_kahler = RVec(lat.rank, Rational(0));
  lat.reference_kahler[0] = 3;
  for (int i = 1; i <= points; ++i) lat.reference_kahler[i] = -1;
  lat.validate();
  return lat;
}

inline SurfaceLattice p1xp1() {
  SurfaceLattice lat;
  lat.rank = 2;
  lat.Q = {{0, 1}, {1, 0}};
  lat.basis = {"F1", "F2"};
  lat.curves = {{"F1", {1, 0}, 0}, {"F2", {0, 1}, 0}};
  lat.reference_kahler = {1, 1};
  lat.validate();
  return lat;
}

}  // namespace lattices

}  // namespace jflow
