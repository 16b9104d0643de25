#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "rblw/error.hpp"

namespace rblw {

using cplx = std::complex<double>;
constexpr double kPi = 3.14159265358979323846;

inline bool is_pow2(std::size_t n) { return n >= 2 && (n & (n - 1)) == 0; }

// Half-plane grid in (r,z); r cell-centered so no sample sits on the axis.
struct Grid {
  std::size_t nr = 0;
  std::size_t nz = 0;
  double r_max = 2.0;
  double z_half = 1.0;
  double dr = 0.0;
  double dz = 0.0;

  Grid() = default;
  Grid(std::size_t nr_, std::size_t nz_, double r_max_ = 2.0, double z_half_ = 1.0)
      : nr(nr_), nz(nz_), r_max(r_max_), z_half(z_half_) {
    if (!is_pow2(nr) || !is_pow2(nz))
      throw Error(ErrorKind::Validation, "grid sizes must be powers of two");
    if (!(r_max >= 2.0) || !(z_half >= 1.0))
      throw Error(ErrorKind::Validation, "grid requires r_max >= 2 and z_half >= 1");
    dr = r_max / double(nr);
    dz = 2.0 * z_half / double(nz);
  }

  std::size_t size() const { return nr * nz; }
  std::size_t idx(std::size_t j, std::size_t k) const { return j * nz + k; }
  double r(std::size_t j) const { return (double(j) + 0.5) * dr; }
  double z(std::size_t k) const { return -z_half + double(k) * dz; }
  double cell() const { return dr * dz; }

  bool operator==(const Grid& o) const {
    return nr == o.nr && nz == o.nz && r_max == o.r_max && z_half == o.z_half;
  }
};

template <class T>
struct Field {
  Grid grid;
  std::vector<T> v;

  Field() = default;
  explicit Field(const Grid& g, T fill = T{}) : grid(g), v(g.size(), fill) {}

  T& operator()(std::size_t j, std::size_t k) { return v[j * grid.nz + k]; }
  const T& operator()(std::size_t j, std::size_t k) const { return v[j * grid.nz + k]; }
  std::size_t size() const { return v.size(); }

  template <class F>
  static Field from(const Grid& g, F&& fn) {
    Field f(g);
    for (std::size_t j = 0; j < g.nr; ++j)
      for (std::size_t k = 0; k < g.nz; ++k) f(j, k) = fn(g.r(j), g.z(k));
    return f;
  }
};

using ComplexField = Field<cplx>;
using RealField = Field<double>;

inline bool all_finite(const ComplexField& f) {
  for (const auto& x : f.v)
    if (!std::isfinite(x.real()) || !std::isfinite(x.imag())) return false;
  return true;
}

inline void require_finite(const ComplexField& f, const char* where) {
  if (!all_finite(f)) throw Error(ErrorKind::NumericalBlowup, std::string("non-finite values in ") + where);
}

inline void require_same_grid(const Grid& a, const Grid& b) {
  if (!(a == b)) throw Error(ErrorKind::Validation, "fields live on different grids");
}

inline ComplexField operator*(const RealField& a, const ComplexField& b) {
  require_same_grid(a.grid, b.grid);
  ComplexField out(b.grid);
  for (std::size_t i = 0; i < b.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

inline ComplexField conj(const ComplexField& f) {
  ComplexField out(f.grid);
  for (std::size_t i = 0; i < f.size(); ++i) out.v[i] = std::conj(f.v[i]);
  return out;
}

}  // namespace rblw
