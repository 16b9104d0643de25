#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "rblw/cutoff.hpp"
#include "rblw/grid.hpp"
#include "rblw/spectral.hpp"

namespace rblw {

inline ComplexField to_w(const ComplexField& u) {
  ComplexField w(u.grid);
  const Grid& g = u.grid;
  for (std::size_t j = 0; j < g.nr; ++j) {
    const double s = std::sqrt(2.0 * kPi * g.r(j));
    for (std::size_t k = 0; k < g.nz; ++k) w(j, k) = s * u(j, k);
  }
  return w;
}

inline ComplexField from_w(const ComplexField& w) {
  ComplexField u(w.grid);
  const Grid& g = w.grid;
  for (std::size_t j = 0; j < g.nr; ++j) {
    const double s = 1.0 / std::sqrt(2.0 * kPi * g.r(j));
    for (std::size_t k = 0; k < g.nz; ++k) u(j, k) = s * w(j, k);
  }
  return u;
}

namespace detail {

inline std::vector<cplx> coefficients(const ComplexField& w) {
  std::vector<cplx> c(w.size());
  spectral_for(w.grid).forward(w.v.data(), c.data());
  return c;
}

// d/dr of the sine series, returned on the grid.
inline ComplexField dr_from_coef(const Grid& g, const std::vector<cplx>& c) {
  Spectral& sp = spectral_for(g);
  std::vector<cplx> d(c.size(), cplx(0.0));
  for (std::size_t k = 1; k < g.nr; ++k) {
    const double kk = sp.kr(k - 1);
    for (std::size_t m = 0; m < g.nz; ++m) d[k * g.nz + m] = kk * c[(k - 1) * g.nz + m];
  }
  ComplexField out(g);
  sp.inverse_cosine(d.data(), out.v.data());
  return out;
}

inline ComplexField dz_from_coef(const Grid& g, const std::vector<cplx>& c) {
  Spectral& sp = spectral_for(g);
  std::vector<cplx> d(c.size());
  for (std::size_t k = 0; k < g.nr; ++k)
    for (std::size_t m = 0; m < g.nz; ++m) d[k * g.nz + m] = cplx(0.0, sp.kz_odd(m)) * c[k * g.nz + m];
  ComplexField out(g);
  sp.inverse_sine(d.data(), out.v.data());
  return out;
}

}  // namespace detail

// (d_r^2 + d_z^2 + 1/(4 r^2)) w, the cylindrical Laplacian in the w variable.
inline ComplexField apply_L_w(const ComplexField& w) {
  const Grid& g = w.grid;
  Spectral& sp = spectral_for(g);
  auto c = detail::coefficients(w);
  for (std::size_t k = 0; k < g.nr; ++k)
    for (std::size_t m = 0; m < g.nz; ++m) c[k * g.nz + m] *= -sp.k2(k, m);
  ComplexField out(g);
  sp.inverse_sine(c.data(), out.v.data());
  for (std::size_t j = 0; j < g.nr; ++j) {
    const double r = g.r(j), v = 1.0 / (4.0 * r * r);
    for (std::size_t k = 0; k < g.nz; ++k) out(j, k) += v * w(j, k);
  }
  return out;
}

inline ComplexField laplacian_cyl(const ComplexField& f) {
  require_finite(f, "laplacian_cyl input");
  ComplexField out = from_w(apply_L_w(to_w(f)));
  require_finite(out, "laplacian_cyl");
  return out;
}

// sqrt(2 pi r) times (u_r, u_z), from w.
inline std::pair<ComplexField, ComplexField> grad_w(const ComplexField& w) {
  const Grid& g = w.grid;
  auto c = detail::coefficients(w);
  ComplexField gr = detail::dr_from_coef(g, c);
  ComplexField gz = detail::dz_from_coef(g, c);
  for (std::size_t j = 0; j < g.nr; ++j) {
    const double h = 0.5 / g.r(j);
    for (std::size_t k = 0; k < g.nz; ++k) gr(j, k) -= h * w(j, k);
  }
  return {std::move(gr), std::move(gz)};
}

inline std::pair<ComplexField, ComplexField> gradient(const ComplexField& f) {
  auto [gr, gz] = grad_w(to_w(f));
  return {from_w(gr), from_w(gz)};
}

inline double sum_abs2(const ComplexField& f) {
  double s = 0.0;
  for (const auto& x : f.v) s += std::norm(x);
  return s;
}

inline double mass_w(const ComplexField& w) { return sum_abs2(w) * w.grid.cell(); }

inline double mass(const ComplexField& f) {
  const Grid& g = f.grid;
  double s = 0.0;
  for (std::size_t j = 0; j < g.nr; ++j) {
    double row = 0.0;
    for (std::size_t k = 0; k < g.nz; ++k) row += std::norm(f(j, k));
    s += 2.0 * kPi * g.r(j) * row;
  }
  return s * g.cell();
}

inline double grad_norm2_w(const ComplexField& w) {
  auto [gr, gz] = grad_w(w);
  return (sum_abs2(gr) + sum_abs2(gz)) * w.grid.cell();
}

inline double quartic_w(const ComplexField& w) {
  const Grid& g = w.grid;
  double s = 0.0;
  for (std::size_t j = 0; j < g.nr; ++j) {
    const double c = 1.0 / (2.0 * kPi * g.r(j));
    double row = 0.0;
    for (std::size_t k = 0; k < g.nz; ++k) {
      const double a = std::norm(w(j, k));
      row += a * a;
    }
    s += c * row;
  }
  return s * g.cell();
}

inline double energy_w(const ComplexField& w) { return grad_norm2_w(w) - 0.5 * quartic_w(w); }
inline double energy(const ComplexField& f) { return energy_w(to_w(f)); }

inline double momentum_z_w(const ComplexField& w) {
  auto [gr, gz] = grad_w(w);
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += std::imag(std::conj(w.v[i]) * gz.v[i]);
  return s * w.grid.cell();
}
inline double momentum_z(const ComplexField& f) { return momentum_z_w(to_w(f)); }

inline double momentum_localized(const ComplexField& f, const CutoffSet& cuts) {
  require_same_grid(f.grid, cuts.psi_x.grid);
  ComplexField w = to_w(f);
  auto [gr, gz] = grad_w(w);
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i)
    s += std::imag((cuts.dpsi_dr.v[i] * gr.v[i] + cuts.dpsi_dz.v[i] * gz.v[i]) * std::conj(w.v[i]));
  return s * f.grid.cell();
}

// H^s norm of the axisymmetric 3D extension. Integer s uses the exact cylindrical
// derivatives; fractional s uses the flat multiplier (1+|xi|^2)^s on w.
inline double sobolev_norm(const ComplexField& f, double s) {
  if (!(s >= 0.0) || s > 3.0) throw Error(ErrorKind::Unsupported, "sobolev_norm needs s in [0,3]");
  const Grid& g = f.grid;
  ComplexField w = to_w(f);
  const double m0 = mass_w(w);
  const double si = std::round(s);
  if (std::abs(s - si) < 1e-12) {
    const int n = int(si);
    if (n == 0) {
      Spectral& sp = spectral_for(g);
      auto c = detail::coefficients(w);
      double t = 0.0;
      for (std::size_t k = 0; k < g.nr; ++k) {
        double row = 0.0;
        for (std::size_t m = 0; m < g.nz; ++m) row += std::norm(c[k * g.nz + m]);
        t += sp.parseval_weight(k) * row;
      }
      return std::sqrt(t * g.cell());
    }
    const double g1 = grad_norm2_w(w);
    if (n == 1) return std::sqrt(m0 + g1);
    ComplexField lw = apply_L_w(w);
    const double g2 = mass_w(lw);
    if (n == 2) return std::sqrt(m0 + 2.0 * g1 + g2);
    const double g3 = grad_norm2_w(lw);
    return std::sqrt(m0 + 3.0 * g1 + 3.0 * g2 + g3);
  }
  Spectral& sp = spectral_for(g);
  auto c = detail::coefficients(w);
  double t = 0.0;
  for (std::size_t k = 0; k < g.nr; ++k)
    for (std::size_t m = 0; m < g.nz; ++m)
      t += sp.parseval_weight(k) * std::pow(1.0 + sp.k2(k, m), s) * std::norm(c[k * g.nz + m]);
  return std::sqrt(t * g.cell());
}

inline double localized_norm(const ComplexField& f, const RealField& cut, double s) {
  return sobolev_norm(cut * f, s);
}

// 2 pi r weighted inner product <f,g> = int f conj(g) dx.
inline cplx inner(const ComplexField& f, const ComplexField& h) {
  require_same_grid(f.grid, h.grid);
  const Grid& g = f.grid;
  cplx s = 0.0;
  for (std::size_t j = 0; j < g.nr; ++j) {
    cplx row = 0.0;
    for (std::size_t k = 0; k < g.nz; ++k) row += f(j, k) * std::conj(h(j, k));
    s += 2.0 * kPi * g.r(j) * row;
  }
  return s * g.cell();
}

}  // namespace rblw
