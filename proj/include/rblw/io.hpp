#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "rblw/grid.hpp"
#include "rblw/radial.hpp"

namespace rblw {

static_assert(std::endian::native == std::endian::little, "snapshot I/O assumes a little-endian host");

namespace detail {
template <class T>
void put(std::ostream& os, T x) {
  os.write(reinterpret_cast<const char*>(&x), sizeof(T));
}
template <class T>
T get(std::istream& is) {
  T x{};
  is.read(reinterpret_cast<char*>(&x), sizeof(T));
  if (!is) throw Error(ErrorKind::Io, "truncated binary file");
  return x;
}
}  // namespace detail

inline void write_snapshot(const std::string& path, const ComplexField& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::Io, "cannot open " + path + " for writing");
  os.write("RBLW", 4);
  detail::put<std::uint32_t>(os, 1);
  detail::put<std::uint32_t>(os, std::uint32_t(f.grid.nr));
  detail::put<std::uint32_t>(os, std::uint32_t(f.grid.nz));
  detail::put<double>(os, f.grid.r_max);
  detail::put<double>(os, f.grid.z_half);
  os.write(reinterpret_cast<const char*>(f.v.data()), std::streamsize(f.v.size() * sizeof(cplx)));
  if (!os) throw Error(ErrorKind::Io, "write failed for " + path);
}

inline ComplexField read_snapshot(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::Io, "cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "RBLW", 4) != 0) throw Error(ErrorKind::Io, path + " is not an RBLW snapshot");
  if (detail::get<std::uint32_t>(is) != 1) throw Error(ErrorKind::Io, "unsupported snapshot version");
  const auto nr = detail::get<std::uint32_t>(is);
  const auto nz = detail::get<std::uint32_t>(is);
  const double rm = detail::get<double>(is), zh = detail::get<double>(is);
  ComplexField f(Grid(nr, nz, rm, zh));
  is.read(reinterpret_cast<char*>(f.v.data()), std::streamsize(f.v.size() * sizeof(cplx)));
  if (!is) throw Error(ErrorKind::Io, "truncated snapshot " + path);
  return f;
}

// RBLP: magic, version, n, drho, then interleaved (re, im).
inline void write_profile(const std::string& path, const RadialProfile& p) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::Io, "cannot open " + path + " for writing");
  os.write("RBLP", 4);
  detail::put<std::uint32_t>(os, 1);
  detail::put<std::uint32_t>(os, std::uint32_t(p.n()));
  detail::put<double>(os, p.drho);
  os.write(reinterpret_cast<const char*>(p.v.data()), std::streamsize(p.v.size() * sizeof(cplx)));
}

inline RadialProfile read_profile(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::Io, "cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "RBLP", 4) != 0) throw Error(ErrorKind::Io, path + " is not an RBLP profile");
  if (detail::get<std::uint32_t>(is) != 1) throw Error(ErrorKind::Io, "unsupported profile version");
  const auto n = detail::get<std::uint32_t>(is);
  RadialProfile p(n, detail::get<double>(is));
  is.read(reinterpret_cast<char*>(p.v.data()), std::streamsize(p.v.size() * sizeof(cplx)));
  if (!is) throw Error(ErrorKind::Io, "truncated profile " + path);
  return p;
}

inline void write_profile_csv(const std::string& path, const RadialProfile& p) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::Io, "cannot open " + path + " for writing");
  os << "rho,re,im\n" << std::setprecision(17);
  for (std::size_t j = 0; j < p.n(); ++j) os << p.rho(j) << ',' << p[j].real() << ',' << p[j].imag() << '\n';
}

}  // namespace rblw
