#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cctype>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace jflow {

using Rational = boost::multiprecision::cpp_rational;
using RVec = std::vector<Rational>;
using RMat = std::vector<RVec>;

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

// "p/q", "p" or a finite decimal like "-1.25"
inline Rational parse_rational(std::string_view text) {
  const std::string s = trim(text);
  auto is_int = [](const std::string& t) {
    std::size_t i = (!t.empty() && (t[0] == '-' || t[0] == '+')) ? 1 : 0;
    if (i >= t.size()) return false;
    for (; i < t.size(); ++i)
      if (!std::isdigit(static_cast<unsigned char>(t[i]))) return false;
    return true;
  };
  auto to_int = [](std::string t) {
    if (!t.empty() && t[0] == '+') t.erase(0, 1);
    return boost::multiprecision::cpp_int(t);
  };
  const auto slash = s.find('/');
  if (slash != std::string::npos) {
    const std::string p = trim(s.substr(0, slash)), q = trim(s.substr(slash + 1));
    if (!is_int(p) || !is_int(q)) throw std::invalid_argument("not a rational: '" + s + "'");
    const auto den = to_int(q);
    if (den == 0) throw std::invalid_argument("zero denominator: '" + s + "'");
    return Rational(to_int(p), den);
  }
  const auto dot = s.find('.');
  if (dot != std::string::npos) {
    std::string whole = s.substr(0, dot), frac = s.substr(dot + 1);
    const bool neg = !whole.empty() && whole[0] == '-';
    if (whole.empty() || whole == "-" || whole == "+") whole += "0";
    if (!is_int(whole) || (!frac.empty() && !is_int(frac)) || (!frac.empty() && !std::isdigit(static_cast<unsigned char>(frac[0]))))
      throw std::invalid_argument("not a rational: '" + s + "'");
    boost::multiprecision::cpp_int scale = 1;
    for (std::size_t i = 0; i < frac.size(); ++i) scale *= 10;
    Rational r = Rational(to_int(whole));
    const Rational f = frac.empty() ? Rational(0) : Rational(to_int(frac), scale);
    return neg ? Rational(r - f) : Rational(r + f);
  }
  if (!is_int(s)) throw std::invalid_argument("not a rational: '" + s + "'");
  return Rational(to_int(s));
}

inline std::string to_string(const Rational& r) {
  const auto num = boost::multiprecision::numerator(r), den = boost::multiprecision::denominator(r);
  if (den == 1) return num.str();
  return num.str() + "/" + den.str();
}

inline Rational dot(const RVec& x, const RMat& Q, const RVec& y) {
  Rational acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] == 0) continue;
    Rational row = 0;
    for (std::size_t j = 0; j < y.size(); ++j) row += Q[i][j] * y[j];
    acc += x[i] * row;
  }
  return acc;
}

struct Inertia {
  int positive = 0;
  int negative = 0;
  int zero = 0;
};

// Sylvester inertia by exact symmetric elimination (congruence transforms only).
inline Inertia inertia(RMat A) {
  const std::size_t r = A.size();
  Inertia out;
  std::size_t k = 0;
  while (k < r) {
    std::size_t piv = r;
    for (std::size_t i = k; i < r; ++i)
      if (A[i][i] != 0) {
        piv = i;
        break;
      }
    if (piv == r) {
      // zero diagonal: fold a row with a nonzero off-diagonal entry into row k
      std::size_t a = r, b = r;
      for (std::size_t i = k; i < r && a == r; ++i)
        for (std::size_t j = i + 1; j < r; ++j)
          if (A[i][j] != 0) {
            a = i;
            b = j;
            break;
          }
      if (a == r) {
        out.zero += static_cast<int>(r - k);
        break;
      }
      for (std::size_t j = 0; j < r; ++j) A[a][j] += A[b][j];
      for (std::size_t i = 0; i < r; ++i) A[i][a] += A[i][b];
      piv = a;
    }
    std::swap(A[k], A[piv]);
    for (auto& row : A) std::swap(row[k], row[piv]);
    const Rational d = A[k][k];
    (d > 0 ? out.positive : out.negative) += 1;
    for (std::size_t i = k + 1; i < r; ++i) {
      if (A[i][k] == 0) continue;
      const Rational f = A[i][k] / d;
      for (std::size_t j = k; j < r; ++j) A[i][j] -= f * A[k][j];
    }
    for (std::size_t i = k + 1; i < r; ++i) A[k][i] = 0;
    for (std::size_t i = k + 1; i < r; ++i) A[i][k] = 0;
    ++k;
  }
  return out;
}

// Solves A x = b exactly; returns false when A is singular.
inline bool solve_exact(RMat A, RVec b, RVec& x) {
  const std::size_t m = A.size();
  for (std::size_t k = 0; k < m; ++k) {
    std::size_t piv = k;
    while (piv < m && A[piv][k] == 0) ++piv;
    if (piv == m) return false;
    std::swap(A[k], A[piv]);
    std::swap(b[k], b[piv]);
    for (std::size_t i = k + 1; i < m; ++i) {
      if (A[i][k] == 0) continue;
      const Rational f = A[i][k] / A[k][k];
      for (std::size_t j = k; j < m; ++j) A[i][j] -= f * A[k][j];
      b[i] -= f * b[k];
    }
  }
  x.assign(m, Rational(0));
  for (std::size_t k = m; k-- > 0;) {
    Rational s = b[k];
    for (std::size_t j = k + 1; j < m; ++j) s -= A[k][j] * x[j];
    x[k] = s / A[k][k];
  }
  return true;
}

}  // namespace jflow
