#pragma once

// Field snapshots: flat little-endian binary and CSV.
//
// binary layout: "JFLW" | u32 version=1 | u32 n | u32 N | u32 mode (0 invariant, 1 full)
//                | u64 count | count x f64, row-major with axis 0 slowest

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "jflow/error.hpp"
#include "jflow/flow.hpp"
#include "jflow/torus.hpp"

namespace jflow {

inline constexpr char kFieldMagic[4] = {'J', 'F', 'L', 'W'};
inline constexpr std::uint32_t kFieldVersion = 1;

namespace detail {

template <class T>
void put_le(std::ostream& os, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(std::istream& is, const std::string& what) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw InputError(what, "field file is truncated");
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

}  // namespace detail

inline void write_field(std::ostream& os, const GridFunction& f) {
  os.write(kFieldMagic, 4);
  detail::put_le<std::uint32_t>(os, kFieldVersion);
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(f.grid.n()));
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(f.grid.points_per_axis()));
  detail::put_le<std::uint32_t>(os, f.grid.mode() == GridMode::invariant ? 0u : 1u);
  detail::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(f.size()));
  for (double v : f.values) detail::put_le<double>(os, v);
}

inline void write_field(const std::string& path, const GridFunction& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write field file " + path);
  write_field(os, f);
}

inline GridFunction read_field(std::istream& is, Stencil stencil = Stencil::fd4, const std::string& what = "field") {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kFieldMagic, 4) != 0) throw InputError(what, "not a field file (bad magic)");
  const auto version = detail::get_le<std::uint32_t>(is, what);
  if (version != kFieldVersion) throw InputError(what, "unsupported field file version " + std::to_string(version));
  const auto n = detail::get_le<std::uint32_t>(is, what);
  const auto N = detail::get_le<std::uint32_t>(is, what);
  const auto mode = detail::get_le<std::uint32_t>(is, what);
  const auto count = detail::get_le<std::uint64_t>(is, what);
  if (mode > 1) throw InputError(what, "unknown grid mode " + std::to_string(mode));
  TorusGrid g;
  try {
    g = TorusGrid(static_cast<int>(n), mode == 0 ? GridMode::invariant : GridMode::full, static_cast<int>(N), stencil);
  } catch (const ShapeError& e) {
    throw InputError(what, e.what());
  }
  if (count != g.size()) throw InputError(what, "value count does not match the grid header");
  GridFunction f(g);
  for (auto& v : f.values) v = detail::get_le<double>(is, what);
  return f;
}

inline GridFunction read_field(const std::string& path, Stencil stencil = Stencil::fd4, const std::string& what = "field") {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError(what, "cannot open field file " + path);
  return read_field(is, stencil, what);
}

// one row per grid point: axis coordinates then the value
inline void write_field_csv(std::ostream& os, const GridFunction& f) {
  const auto& g = f.grid;
  for (int a = 0; a < g.axes(); ++a) {
    if (g.mode() == GridMode::full && a >= g.n())
      os << "y" << a - g.n() << ",";
    else
      os << "x" << a << ",";
  }
  os << "value\n";
  for (std::size_t p = 0; p < f.size(); ++p) {
    for (int a = 0; a < g.axes(); ++a) os << format_g17(g.coordinate(g.index_along(p, a))) << ",";
    os << format_g17(f[p]) << "\n";
  }
}

}  // namespace jflow
