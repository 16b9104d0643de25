#pragma once

#include <Eigen/SparseLU>

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <sstream>
#include <vector>

#include "rblw/cutoff.hpp"
#include "rblw/ground_state.hpp"
#include "rblw/radial.hpp"

namespace rblw {

struct ProfileParams {
  double b = 0.2;
  double eta = 0.05;
  double a = 0.6;

  double R() const { return 2.0 / b * std::sqrt(1.0 - eta); }
  double Rm() const { return R() * std::sqrt(1.0 - eta); }
  double A() const { return std::exp(a * kPi / b); }
};

namespace detail {

// 8-point Lagrange on samples at j*h; parity +1 (even) or -1 (odd) reflection at 0.
template <class T>
T lagrange8(const std::vector<T>& v, double h, double x, int parity) {
  const double sgn = x < 0 ? double(parity) : 1.0;
  x = std::abs(x) / h;
  const long n = long(v.size());
  long i0 = std::min(long(std::floor(x)) - 3, n - 8);
  T s = 0.0;
  for (long i = i0; i < i0 + 8; ++i) {
    double w = 1.0;
    for (long m = i0; m < i0 + 8; ++m)
      if (m != i) w *= (x - double(m)) / double(i - m);
    const T val = i < 0 ? double(parity) * v[std::size_t(-i)] : v[std::size_t(i)];
    s += w * val;
  }
  return sgn * s;
}

// Decaying branch at infinity of z'' + z'/r - z + ib(z + r z') = 0:
// g = sum a_n r^(sigma - 2n), sigma = -1 - i/b, summed while terms shrink.
struct Asym {
  cplx g, dg, d2g;
};
inline Asym asym_branch(double b, double rho) {
  const cplx sigma(-1.0, -1.0 / b), I(0.0, 1.0);
  cplx a = 1.0;
  Asym out{0.0, 0.0, 0.0};
  double prev = 1e300;
  const double lr = std::log(rho);
  for (int n = 0; n < 200; ++n) {
    const cplx m = sigma - 2.0 * double(n);
    const cplx t = a * std::exp(m * lr);
    if (std::abs(t) > prev) break;
    out.g += t;
    out.dg += m * t / rho;
    out.d2g += m * (m - 1.0) * t / (rho * rho);
    prev = std::abs(t);
    if (prev < 1e-18 * std::abs(out.g)) break;
    const cplx mn = sigma - 2.0 * double(n + 1) + 2.0;
    a = a * mn * mn / (2.0 * I * b * double(n + 1));
  }
  return out;
}

}  // namespace detail

namespace detail {

// Cutoff phi = 1 - S((r - Rm)/(R - Rm)) and its r-derivatives.
struct Cut {
  double f, d1, d2;
};
inline Cut cut(double r, double Rm, double R) {
  const double w = R - Rm, t = (r - Rm) / w;
  return {1.0 - smoothstep(t), -smoothstep_d1(t) / w, -smoothstep_d2(t) / (w * w)};
}

struct Composed {
  cplx Qt, dQt, d2Qt;
};
// Q_tilde = phi P e^{-i b r^2/4} and two r-derivatives from P, P', P''.
inline Composed compose(double b, const Cut& c, double r, double P, double dP, double d2P) {
  const cplx g = std::exp(cplx(0.0, -b * r * r / 4.0));
  const double f = c.f * P, df = c.d1 * P + c.f * dP, d2f = c.d2 * P + 2 * c.d1 * dP + c.f * d2P;
  return {f * g, cplx(df, -b * r / 2.0 * f) * g,
          (cplx(d2f, 0.0) - cplx(0.0, b * r) * df + cplx(-b * b * r * r / 4.0, -b / 2.0) * f) * g};
}

// P'' from the P_b equation; at the axis P'' = (P - P^3)/2.
inline double P_second(double b, double r, double P, double dP) {
  const double rhs = (1.0 - b * b * r * r / 4.0) * P - P * P * P;
  return r < 1e-12 ? 0.5 * rhs : rhs - dP / r;
}

}  // namespace detail

// Q_b through the real gauge P_b = Q_b e^{i b rho^2/4}, solved on [0, R_b] with P(R_b) = 0.
// Pext/dPext optionally continue P past R_b along its ODE, so neighbouring b can be interpolated.
struct QbProfile {
  ProfileParams p;
  double h = 0.0;
  std::vector<double> P, dP;
  std::vector<double> Pext, dPext;
  double residual = 0.0;
  int newton_iters = 0;

  double R() const { return p.R(); }
  double P_raw(double r) const { return Pext.empty() ? detail::lagrange8(P, h, r, +1) : detail::lagrange8(Pext, h, r, +1); }
  double dP_raw(double r) const { return Pext.empty() ? detail::lagrange8(dP, h, r, -1) : detail::lagrange8(dPext, h, r, -1); }
  double raw_end() const { return double((Pext.empty() ? P.size() : Pext.size()) - 1) * h; }
  double P_at(double r) const { return r >= R() ? 0.0 : P_raw(r); }
  double dP_at(double r) const { return r >= R() ? 0.0 : dP_raw(r); }
  double d2P_at(double r) const { return r >= R() ? 0.0 : detail::P_second(p.b, r, P_at(r), dP_at(r)); }
  cplx gauge(double r) const { return std::exp(cplx(0.0, -p.b * r * r / 4.0)); }

  detail::Cut cut(double r) const { return detail::cut(r, p.Rm(), R()); }
  double phi(double r) const { return cut(r).f; }
  double dphi(double r) const { return cut(r).d1; }
  double d2phi(double r) const { return cut(r).d2; }

  cplx Qb(double r) const { return P_at(r) * gauge(r); }
  cplx dQb(double r) const { return cplx(dP_at(r), -p.b * r / 2.0 * P_at(r)) * gauge(r); }

  detail::Composed composed(double r) const {
    if (r >= R()) return {0.0, 0.0, 0.0};
    const double P0 = P_at(r), P1 = dP_at(r);
    return detail::compose(p.b, cut(r), r, P0, P1, detail::P_second(p.b, r, P0, P1));
  }
  cplx Qt(double r) const { return r >= R() ? cplx(0.0) : phi(r) * Qb(r); }
  cplx dQt(double r) const { return composed(r).dQt; }
  cplx d2Qt(double r) const { return composed(r).d2Qt; }
  cplx LambdaQt(double r) const { return Qt(r) + r * dQt(r); }
  cplx Lambda2Qt(double r) const {
    const auto c = composed(r);
    return c.Qt + 3.0 * r * c.dQt + r * r * c.d2Qt;
  }

  // -Psi_b = Q_b Delta(phi) + 2 phi' Q_b' + i b Q_b rho phi' + (phi^3 - phi) Q_b |Q_b|^2.
  cplx Psi(double r) const {
    if (r <= p.Rm() || r >= R()) return 0.0;
    const double ph = phi(r), dph = dphi(r), lap = d2phi(r) + dph / r;
    const cplx q = Qb(r), dq = dQb(r);
    const cplx m = q * lap + 2.0 * dph * dq + cplx(0.0, p.b * r * dph) * q + (ph * ph * ph - ph) * q * std::norm(q);
    return -m;
  }

  // Sample onto rho_j = j * drho, j < n.
  template <class F>
  RadialProfile sample(F&& fn, double drho, std::size_t n) const {
    RadialProfile out(n, drho);
    for (std::size_t j = 0; j < n; ++j) out[j] = fn(double(j) * drho);
    return out;
  }
  RadialProfile sample_Qt(double drho, std::size_t n) const { return sample([&](double r) { return Qt(r); }, drho, n); }
  RadialProfile sample_Qb(double drho, std::size_t n) const { return sample([&](double r) { return Qb(r); }, drho, n); }
  RadialProfile sample_Psi(double drho, std::size_t n) const { return sample([&](double r) { return Psi(r); }, drho, n); }
};

// Newton on the sixth-order finite-difference discretisation of
// P'' + P'/rho - P + (b^2 rho^2/4) P + P^3 = 0, P(R_b) = 0, seeded by Q (1 - (rho/R)^2).
inline QbProfile solve_Qb(const ProfileParams& prm, const RadialProfile& Q, double tol = 1e-10, double h_target = 0.01) {
  if (!(tol <= 1e-8)) throw Error(ErrorKind::Validation, "solve_Qb requires tol <= 1e-8");
  if (!(prm.b > 0.0)) throw Error(ErrorKind::Validation, "solve_Qb requires b > 0");
  if (!(prm.eta > 0.0 && prm.eta < 1.0)) throw Error(ErrorKind::Validation, "eta must lie in (0,1)");
  QbProfile out;
  out.p = prm;
  const double R = prm.R();
  const std::size_t n = std::size_t(std::ceil(R / h_target)) + 1;
  const double h = R / double(n - 1);
  out.h = h;
  Eigen::VectorXd P(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double r = double(j) * h;
    P[j] = Q.at(r).real() * (1.0 - (r / R) * (r / R));
  }
  P[n - 1] = 0.0;
  RadialOps ops(n, h);
  const Eigen::SparseMatrix<double> L = ops.laplacian();
  Eigen::VectorXd pot(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double r = double(j) * h;
    pot[j] = -1.0 + prm.b * prm.b * r * r / 4.0;
  }
  auto residual = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd F = L * x + pot.cwiseProduct(x) + x.cwiseProduct(x).cwiseProduct(x);
    F[n - 1] = x[n - 1];
    return F;
  };
  bool converged = false;
  for (int it = 0; it < 60; ++it) {
    Eigen::VectorXd F = residual(P);
    std::vector<Eigen::Triplet<double>> t;
    for (int k = 0; k < L.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator e(L, k); e; ++e)
        if (std::size_t(e.row()) != n - 1) t.emplace_back(e.row(), e.col(), e.value());
    for (std::size_t j = 0; j + 1 < n; ++j) t.emplace_back(j, j, pot[j] + 3.0 * P[j] * P[j]);
    t.emplace_back(n - 1, n - 1, 1.0);
    Eigen::SparseMatrix<double> J(n, n);
    J.setFromTriplets(t.begin(), t.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(J);
    if (lu.info() != Eigen::Success) throw Error(ErrorKind::ConvergenceFailure, "Q_b Newton Jacobian is singular");
    Eigen::VectorXd dP = lu.solve(F);
    // Damped step: never let the iterate leave the positive cone by more than half.
    double lam = 1.0;
    const double F0 = F.cwiseAbs().maxCoeff();
    for (int k = 0; k < 20; ++k) {
      Eigen::VectorXd trial = P - lam * dP;
      const double Ft = residual(trial).cwiseAbs().maxCoeff();
      if (Ft < F0 || Ft < 1e-9 || k == 19) {
        P = trial;
        break;
      }
      lam *= 0.5;
    }
    out.newton_iters = it + 1;
    if (!std::isfinite(P.sum())) break;
    if (lam * dP.cwiseAbs().maxCoeff() < 1e-10) {
      converged = true;
      break;
    }
  }
  out.residual = residual(P).cwiseAbs().maxCoeff();
  bool positive = P[0] > 1e-3;
  // Far tails sit at round-off (e^{-R} underflows for small b); judge the sign relative to P(0).
  for (std::size_t j = 0; j + 1 < n; ++j) positive = positive && P[j] > -1e-13 * P[0];
  if (!converged || !positive || !(out.residual < tol)) {
    std::ostringstream os;
    os << "no positive P_b found at b=" << prm.b << " (residual " << out.residual << ", positive=" << positive << ")";
    throw Error(ErrorKind::ProfileOutOfRange, os.str());
  }
  out.P.assign(P.data(), P.data() + n);
  Eigen::VectorXd d = ops.D1 * P;
  out.dP.assign(d.data(), d.data() + n);
  out.dP[0] = 0.0;
  return out;
}

// Continue P past R_b along its ODE (RK4, four substeps per grid cell) up to r_end.
inline void extend_P(QbProfile& q, double r_end) {
  q.Pext = q.P, q.dPext = q.dP;
  const double b = q.p.b, h = q.h / 4;
  double r = double(q.P.size() - 1) * q.h, y = q.P.back(), v = q.dP.back();
  auto f = [&](double rr, double yy, double vv) { return std::pair<double, double>{vv, detail::P_second(b, rr, yy, vv)}; };
  while (r < r_end) {
    for (int s = 0; s < 4; ++s) {
      auto [k1y, k1v] = f(r, y, v);
      auto [k2y, k2v] = f(r + h / 2, y + h / 2 * k1y, v + h / 2 * k1v);
      auto [k3y, k3v] = f(r + h / 2, y + h / 2 * k2y, v + h / 2 * k2v);
      auto [k4y, k4v] = f(r + h, y + h * k3y, v + h * k3v);
      y += h / 6 * (k1y + 2 * k2y + 2 * k3y + k4y);
      v += h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v);
      r += h;
    }
    q.Pext.push_back(y), q.dPext.push_back(v);
  }
}

// Truncated profile and its error, sampled on a uniform grid.
struct Truncation {
  RadialProfile Qt, Psi;
};
inline Truncation truncate_Qb(const QbProfile& qb, double drho = 0.01) {
  const std::size_t n = std::size_t(std::ceil(qb.R() / drho)) + 9;
  return {qb.sample_Qt(drho, n), qb.sample_Psi(drho, n)};
}

// zeta_b: finite differences on [0, rho1] closed by a Robin condition matching the
// decaying asymptotic branch, continued analytically as c * g(rho) beyond rho1.
struct Radiation {
  double b = 0.0;
  double rho1 = 0.0;
  RadialProfile near;
  cplx c = 0.0;
  double residual = 0.0;

  cplx value(double r) const {
    if (r <= rho1) return near.at(r);
    return c * detail::asym_branch(b, r).g;
  }
  cplx deriv(double r) const {
    if (r <= rho1) return near_deriv(r);
    return c * detail::asym_branch(b, r).dg;
  }
  cplx deriv2(double r) const { return c * detail::asym_branch(b, r).d2g; }
  double gamma() const { return std::norm(c); }

  std::vector<cplx> dnear;
  cplx near_deriv(double r) const { return detail::lagrange8(dnear, near.drho, r, -1); }
};

inline double default_rho1(const ProfileParams& p, double mult = 1.0) {
  return mult * std::max(4.0 * p.R(), 6.0 * std::pow(p.b, -1.5));
}

template <class PsiFn>
Radiation solve_zeta_fn(double b, PsiFn&& psi, double tol = 1e-8, double rho1 = 0.0, double h = 0.01) {
  Radiation z;
  z.b = b;
  const std::size_t n = std::size_t(std::llround(rho1 / h)) + 1;
  z.rho1 = double(n - 1) * h;
  RadialOps ops(n, h);
  using SpC = Eigen::SparseMatrix<cplx>;
  const cplx I(0.0, 1.0);
  std::vector<Eigen::Triplet<cplx>> t;
  for (int k = 0; k < ops.D2.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator e(ops.D2, k); e; ++e) {
      const std::size_t row = std::size_t(e.row());
      if (row == n - 1) continue;
      t.emplace_back(e.row(), e.col(), (row == 0 ? 2.0 : 1.0) * e.value());
    }
    for (Eigen::SparseMatrix<double>::InnerIterator e(ops.D1, k); e; ++e) {
      const std::size_t row = std::size_t(e.row());
      if (row == 0) continue;
      const double r = double(row) * h;
      if (row == n - 1) t.emplace_back(e.row(), e.col(), cplx(e.value()));
      else t.emplace_back(e.row(), e.col(), e.value() / r + I * b * r * e.value());
    }
  }
  for (std::size_t j = 0; j + 1 < n; ++j) t.emplace_back(j, j, cplx(-1.0, b));
  const auto as = detail::asym_branch(b, z.rho1);
  t.emplace_back(n - 1, n - 1, -as.dg / as.g);
  SpC A(n, n);
  A.setFromTriplets(t.begin(), t.end());
  A.makeCompressed();
  Eigen::VectorXcd rhs(n);
  for (std::size_t j = 0; j < n; ++j) rhs[j] = psi(double(j) * h);
  rhs[n - 1] = 0.0;
  Eigen::SparseLU<SpC> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) throw Error(ErrorKind::ConvergenceFailure, "radiation system is singular");
  Eigen::VectorXcd x = lu.solve(rhs);
  const double scale = std::max(rhs.cwiseAbs().maxCoeff(), 1e-300);
  z.residual = (A * x - rhs).cwiseAbs().maxCoeff() / scale;
  if (!(z.residual < tol)) throw Error(ErrorKind::ConvergenceFailure, "radiation solve residual above tolerance");
  z.near = RadialProfile(n, h);
  for (std::size_t j = 0; j < n; ++j) z.near[j] = x[j];
  Eigen::VectorXcd d = ops.D1.cast<cplx>() * x;
  z.dnear.assign(d.data(), d.data() + n);
  z.dnear[0] = 0.0;
  z.c = x[n - 1] / as.g;
  return z;
}

// Psi_b is only C^1 at the band edges, so the step shrinks with the band width R - R^-.
inline Radiation solve_zeta(const QbProfile& qb, double tol = 1e-8, double mult = 1.0, double h = 0.01) {
  const double hz = h * std::min(1.0, qb.R() - qb.p.Rm());
  return solve_zeta_fn(qb.p.b, [&](double r) { return qb.Psi(r); }, tol, default_rho1(qb.p, mult), hz);
}

// Plateau of rho^power |zeta|^2 over the last decade of the sampled range.
struct Plateau {
  double value = 0.0, variation = 0.0;
};
inline Plateau gamma_plateau(const std::vector<double>& rho, const std::vector<cplx>& zeta, double power = 2.0) {
  const double rmax = rho.back();
  double lo = 1e300, hi = -1e300, s = 0.0, wsum = 0.0;
  for (std::size_t j = 1; j < rho.size(); ++j) {
    if (rho[j] < rmax / 10.0) continue;
    const double v = std::pow(rho[j], power) * std::norm(zeta[j]);
    const double w = std::log(rho[j] / rho[j - 1]);
    lo = std::min(lo, v), hi = std::max(hi, v);
    s += w * v, wsum += w;
  }
  Plateau p;
  if (!(wsum > 0.0)) throw Error(ErrorKind::Unsupported, "no samples in the last decade");
  p.value = s / wsum;
  p.variation = (hi - lo) / std::max(p.value, 1e-300);
  if (!(p.value > 0.0) || p.variation > 0.5) {
    std::ostringstream os;
    os << "no plateau for rho^" << power << "|zeta|^2: relative variation " << p.variation;
    throw Error(ErrorKind::Unsupported, os.str());
  }
  return p;
}

// The decaying branch behaves like rho^(-1 - i/b), so the default weight is rho^2.
inline Plateau gamma_b(const RadialProfile& zeta, double power = 2.0) {
  std::vector<double> r(zeta.n());
  for (std::size_t j = 0; j < zeta.n(); ++j) r[j] = zeta.rho(j);
  return gamma_plateau(r, zeta.v, power);
}

// Log-spaced samples of the hybrid radiation over [rho_end/10, rho_end].
inline Plateau gamma_b(const Radiation& z, double rho_end, double power = 2.0) {
  std::vector<double> r;
  std::vector<cplx> v;
  const int m = 400;
  for (int i = 0; i <= m; ++i) {
    const double x = rho_end / 10.0 * std::pow(10.0, double(i) / m);
    r.push_back(x), v.push_back(z.value(x));
  }
  return gamma_plateau(r, v, power);
}

// zeta_tilde = phi_A zeta, phi_A = 1 on rho <= A and 0 on rho >= 2A.
struct RadiationTrunc {
  const Radiation* z = nullptr;
  double A = 0.0;
  double phiA(double r) const { return 1.0 - ramp(r, A, 2 * A); }
  double dphiA(double r) const { return -ramp_d1(r, A, 2 * A); }
  double d2phiA(double r) const { return -smoothstep_d2((r - A) / A) / (A * A); }
  cplx value(double r) const { return r >= 2 * A ? cplx(0.0) : phiA(r) * z->value(r); }
  cplx deriv(double r) const { return r >= 2 * A ? cplx(0.0) : dphiA(r) * z->value(r) + phiA(r) * z->deriv(r); }
  // F = zeta Delta(phi_A) + 2 phi_A' zeta' + i b zeta rho phi_A'.
  cplx F(double r) const {
    if (r <= A || r >= 2 * A) return 0.0;
    const cplx zz = z->value(r), dz = z->deriv(r);
    const double d1 = dphiA(r), lap = d2phiA(r) + d1 / r;
    return zz * lap + 2.0 * d1 * dz + cplx(0.0, z->b * r * d1) * zz;
  }
};
inline RadiationTrunc truncate_zeta(const Radiation& z, const ProfileParams& p) { return {&z, p.A()}; }

// Gauss-Legendre 8 nodes on [-1,1].
inline const std::array<std::pair<double, double>, 8>& gl8() {
  static const std::array<std::pair<double, double>, 8> n = {{{-0.9602898564975363, 0.1012285362903763},
                                                              {-0.7966664774136267, 0.2223810344533745},
                                                              {-0.5255324099163290, 0.3137066458778873},
                                                              {-0.1834346424956498, 0.3626837833783620},
                                                              {0.1834346424956498, 0.3626837833783620},
                                                              {0.5255324099163290, 0.3137066458778873},
                                                              {0.7966664774136267, 0.2223810344533745},
                                                              {0.9602898564975363, 0.1012285362903763}}};
  return n;
}

template <class F>
double gl_integrate(F&& f, double lo, double hi, int panels) {
  double s = 0.0;
  const double w = (hi - lo) / panels;
  for (int p = 0; p < panels; ++p) {
    const double c = lo + (p + 0.5) * w;
    for (const auto& [x, wt] : gl8()) s += wt * 0.5 * w * f(c + 0.5 * w * x);
  }
  return s;
}

// Flat 2D energy of Q_tilde_b through the Pohozaev identity for P_b,
// E_P = pi R^2 P'(R)^2, plus the correction supported on the cutoff band.
inline double energy_Qt(const QbProfile& qb) {
  const double R = qb.R(), Rm = qb.p.Rm(), b = qb.p.b;
  const double dPR = qb.dP.back();
  const double EP = kPi * R * R * dPR * dPR;
  auto band = [&](double r) {
    const double P = qb.P_at(r), dP = qb.dP_at(r), ph = qb.phi(r), dph = qb.dphi(r);
    const double fp = dph * P + ph * dP;
    return 2 * kPi * r * (fp * fp - dP * dP + b * b / 4 * r * r * (ph * ph - 1) * P * P - 0.5 * (ph * ph * ph * ph - 1) * P * P * P * P);
  };
  return EP + gl_integrate(band, Rm, R, 64);
}

// Direct quadrature of the same energy, used as a cross-check at moderate b.
inline double energy_Qt_direct(const QbProfile& qb) {
  const double R = qb.R(), b = qb.p.b;
  auto dens = [&](double r) {
    const double P = qb.P_at(r), ph = qb.phi(r), fp = qb.dphi(r) * P + ph * qb.dP_at(r), f = ph * P;
    return 2 * kPi * r * (fp * fp + b * b / 4 * r * r * f * f - 0.5 * f * f * f * f);
  };
  return gl_integrate(dens, 0.0, R, std::max(200, int(R / 0.02)));
}

inline double mass_Qt(const QbProfile& qb) {
  auto dens = [&](double r) {
    const double f = qb.phi(r) * qb.P_at(r);
    return 2 * kPi * r * f * f;
  };
  return gl_integrate(dens, 0.0, qb.R(), std::max(200, int(qb.R() / 0.02)));
}

// |y Q_tilde_b|^2 in L^2(R^2).
inline double ymoment2_Qt(const QbProfile& qb) {
  auto dens = [&](double r) {
    const double f = qb.phi(r) * qb.P_at(r);
    return 2 * kPi * r * r * r * f * f;
  };
  return gl_integrate(dens, 0.0, qb.R(), std::max(200, int(qb.R() / 0.02)));
}

// (1/2) Im int y . grad(zeta_tilde) conj(zeta_tilde) over R^2.
inline double zeta_virial(const Radiation& z, const RadiationTrunc& zt) {
  auto dens = [&](double r) { return 2 * kPi * r * 0.5 * std::imag(r * zt.deriv(r) * std::conj(zt.value(r))); };
  double s = gl_integrate(dens, 0.0, z.rho1, std::max(200, int(z.rho1 / 0.02)));
  // Log-spaced panels out to 2A.
  const double L0 = std::log(z.rho1), L1 = std::log(2 * zt.A);
  if (L1 > L0)
    s += gl_integrate([&](double u) { const double r = std::exp(u); return r * dens(r); }, L0, L1, 400);
  return s;
}

// int |grad zeta|^2 over R^2: quadrature on the sampled part, log-spaced panels beyond.
inline double zeta_grad_norm2(const Radiation& z) {
  auto dens = [&](double r) { return 2 * kPi * r * std::norm(z.deriv(r)); };
  double s = gl_integrate(dens, 0.0, z.rho1, std::max(200, int(z.rho1 / 0.02)));
  const double L0 = std::log(z.rho1);
  s += gl_integrate([&](double u) { const double r = std::exp(u); return r * dens(r); }, L0, L0 + 30.0, 600);
  return s;
}

struct ProfileBundle {
  ProfileParams params;
  std::shared_ptr<QbProfile> qb;
  std::shared_ptr<Radiation> zeta;
  RadiationTrunc zeta_trunc;
  double Gamma = 0.0;
  double mass_excess = 0.0;
  double energy = 0.0;
  double ymoment2 = 0.0;
  double f1_tilde = 0.0;
  double psi_sup = 0.0;
  double rho2_psi_sup = 0.0;
};

struct BundleOptions {
  double h = 0.01;
  double zeta_mult = 1.0;
  bool with_zeta = true;
};

inline ProfileBundle build_bundle(const ProfileParams& p, const RadialProfile& Q, double Q_mass, const BundleOptions& o = {}) {
  ProfileBundle B;
  B.params = p;
  B.qb = std::make_shared<QbProfile>(solve_Qb(p, Q, 1e-10, o.h));
  B.mass_excess = mass_Qt(*B.qb) - Q_mass;
  B.energy = energy_Qt(*B.qb);
  B.ymoment2 = ymoment2_Qt(*B.qb);
  for (double r = p.Rm(); r <= p.R(); r += 0.001) {
    const double a = std::abs(B.qb->Psi(r));
    B.psi_sup = std::max(B.psi_sup, a);
    B.rho2_psi_sup = std::max(B.rho2_psi_sup, r * r * a);
  }
  if (o.with_zeta) {
    B.zeta = std::make_shared<Radiation>(solve_zeta(*B.qb, 1e-8, o.zeta_mult, o.h));
    B.Gamma = B.zeta->gamma();
    B.zeta_trunc = truncate_zeta(*B.zeta, p);
    B.f1_tilde = p.b / 4.0 * B.ymoment2 + zeta_virial(*B.zeta, B.zeta_trunc);
  } else {
    B.f1_tilde = p.b / 4.0 * B.ymoment2;
  }
  return B;
}

// Largest b on an upward scan before solve_Qb first fails; the operational b*(eta).
inline double probe_b_star(const RadialProfile& Q, const ProfileParams& base = {}, double b_start = 0.35, double step = 0.05,
                           double b_cap = 4.0) {
  double last = 0.0;
  for (double b = b_start; b <= b_cap + 1e-12; b += step) {
    ProfileParams p = base;
    p.b = b;
    try {
      solve_Qb(p, Q);
      last = b;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::ProfileOutOfRange) throw;
      break;
    }
  }
  return last;
}

inline double estimate_d0(double b1, double b2, const RadialProfile& Q, double Q_mass, const ProfileParams& base = {},
                          double h = 0.01) {
  ProfileParams p1 = base, p2 = base;
  p1.b = b1, p2.b = b2;
  const double m1 = mass_Qt(solve_Qb(p1, Q, 1e-10, h)) - Q_mass;
  const double m2 = mass_Qt(solve_Qb(p2, Q, 1e-10, h)) - Q_mass;
  return (m2 - m1) / (b2 * b2 - b1 * b1);
}

// Least-squares slope of y against x.
inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = double(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) sx += x[i], sy += y[i], sxx += x[i] * x[i], sxy += x[i] * y[i];
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// log Gamma_b = -(1 + C_eta) pi / b + const, read off the ladder slope.
inline double operational_C_eta(const std::vector<double>& b, const std::vector<double>& gamma) {
  std::vector<double> x, y;
  for (std::size_t i = 0; i < b.size(); ++i) x.push_back(1.0 / b[i]), y.push_back(std::log(gamma[i]));
  return -fit_slope(x, y) / kPi - 1.0;
}

struct ProfileReport {
  double b = 0, R = 0, Rm = 0, log_A = 0;
  double Qb0 = 0, mass_excess = 0, energy = 0, energy_exponent = 0;
  double Gamma = 0, log_Gamma = 0;
  bool A_in_window = false;
  double dbQ_sup = 0, momentum = 0;
  double psi_sup = 0, rho2_psi_sup = 0;
  double zeta_grad2 = 0, F_sup = 0, F_scaled = 0, f1_tilde = 0;
};

inline ProfileReport profile_report(const ProfileBundle& B, const RadialProfile& Q) {
  ProfileReport r;
  const auto& p = B.params;
  r.b = p.b, r.R = p.R(), r.Rm = p.Rm(), r.log_A = p.a * kPi / p.b;
  r.Qb0 = B.qb->P[0];
  r.mass_excess = B.mass_excess;
  r.energy = B.energy;
  // |E| = exp(-kappa pi / b); kappa is the bound exponent.
  r.energy_exponent = -std::log(std::abs(B.energy)) * p.b / kPi;
  r.psi_sup = B.psi_sup, r.rho2_psi_sup = B.rho2_psi_sup;
  r.f1_tilde = B.f1_tilde;
  if (B.zeta) {
    r.Gamma = B.Gamma;
    r.log_Gamma = std::log(B.Gamma);
    r.A_in_window = -p.a / 2 * r.log_Gamma <= r.log_A && r.log_A <= -1.5 * p.a * r.log_Gamma;
    r.zeta_grad2 = zeta_grad_norm2(*B.zeta);
    const double A = p.A();
    for (int i = 0; i <= 2000; ++i) r.F_sup = std::max(r.F_sup, std::abs(B.zeta_trunc.F(A * (1.0 + i / 2000.0))));
    r.F_scaled = r.F_sup * A / std::sqrt(B.Gamma);
  }
  // Central difference in b against the first-order prediction -i rho^2/4 Q.
  const double db = 1e-3 * p.b;
  ProfileParams pm = p, pp = p;
  pm.b -= db, pp.b += db;
  const QbProfile qm = solve_Qb(pm, Q, 1e-10, B.qb->h), qp = solve_Qb(pp, Q, 1e-10, B.qb->h);
  for (double x = 0.0; x <= 5.0; x += 0.01) {
    const cplx d = (qp.Qt(x) - qm.Qt(x)) / (2 * db) + cplx(0.0, x * x / 4.0) * Q.at(x);
    r.dbQ_sup = std::max(r.dbQ_sup, std::abs(d));
  }
  // Im int grad(Qt) conj(Qt) dy: the radial integrand times the angular integral of the unit vector.
  double radial = gl_integrate([&](double x) { return x * std::imag(B.qb->dQt(x) * std::conj(B.qb->Qt(x))); }, 0.0, p.R(), 400);
  double cx = 0.0, cy = 0.0;
  for (int k = 0; k < 64; ++k) cx += std::cos(2 * kPi * k / 64) * 2 * kPi / 64, cy += std::sin(2 * kPi * k / 64) * 2 * kPi / 64;
  r.momentum = std::abs(radial) * std::hypot(cx, cy);
  return r;
}

// Q_tilde_b on a uniform b-ladder. P_b (continued past R_b) is interpolated cubically in b;
// the cutoff and the gauge factor are exact at the requested b.
class QbLadder {
 public:
  QbLadder() = default;
  QbLadder(const RadialProfile& Q, double b_lo, double b_hi, double db = 0.005, ProfileParams base = {}, double h = 0.01)
      : base_(base), db_(db) {
    if (!(b_lo > 0 && b_hi > b_lo)) throw Error(ErrorKind::Validation, "ladder needs 0 < b_lo < b_hi");
    b0_ = b_lo - db;
    if (b0_ <= 0.0) throw Error(ErrorKind::Validation, "ladder b_lo must exceed the step");
    const int n = int(std::ceil((b_hi - b0_) / db)) + 3;
    for (int i = 0; i < n; ++i) {
      ProfileParams p = base;
      p.b = b0_ + i * db;
      auto q = std::make_shared<QbProfile>(solve_Qb(p, Q, 1e-10, h));
      // Reach the largest R among the lower neighbours used by the stencil.
      ProfileParams lo = p;
      lo.b = std::max(p.b - 3 * db, 0.5 * p.b);
      extend_P(*q, lo.R() + 10 * h);
      nodes_.push_back(q);
    }
  }
  const ProfileParams& params() const { return base_; }
  double b_min() const { return b0_ + db_; }
  double b_max() const { return b0_ + (double(nodes_.size()) - 2) * db_; }
  std::size_t size() const { return nodes_.size(); }
  const QbProfile& node(std::size_t i) const { return *nodes_[i]; }
  double R_at(double b) const {
    ProfileParams p = base_;
    p.b = b;
    return p.R();
  }

  cplx Qt(double b, double rho) const { return composed(b, rho).Qt; }
  cplx dQt(double b, double rho) const { return composed(b, rho).dQt; }
  cplx LambdaQt(double b, double rho) const {
    const auto c = composed(b, rho);
    return c.Qt + rho * c.dQt;
  }
  cplx Lambda2Qt(double b, double rho) const {
    const auto c = composed(b, rho);
    return c.Qt + 3.0 * rho * c.dQt + rho * rho * c.d2Qt;
  }
  // d/db of Q_tilde_b at fixed rho.
  cplx dQt_db(double b, double rho) const {
    ProfileParams p = base_;
    p.b = b;
    const double R = p.R(), Rm = p.Rm();
    check(b);
    if (rho >= R) return 0.0;
    double P, dP, Pb;
    interp(b, rho, P, dP, &Pb);
    const double w = R - Rm, t = (rho - Rm) / w;
    const double phi = 1.0 - smoothstep(t), dphi_db = -smoothstep_d1(t) * rho / (w * b);
    const cplx g = std::exp(cplx(0.0, -b * rho * rho / 4.0));
    return (dphi_db * P + phi * Pb + cplx(0.0, -rho * rho / 4.0) * phi * P) * g;
  }

 private:
  void check(double b) const {
    if (!(b >= b_min() - 1e-12 && b <= b_max() + 1e-12)) {
      std::ostringstream os;
      os << "b=" << b << " outside the profile ladder [" << b_min() << ", " << b_max() << "]";
      throw Error(ErrorKind::ProfileOutOfRange, os.str());
    }
  }
  void interp(double b, double rho, double& P, double& dP, double* Pb) const {
    check(b);
    const double x = (b - b0_) / db_;
    const long i0 = std::clamp(long(std::floor(x)) - 1, 0L, long(nodes_.size()) - 4);
    const double t = x - double(i0);
    P = dP = 0.0;
    if (Pb) *Pb = 0.0;
    for (int i = 0; i < 4; ++i) {
      double w = 1.0, den = 1.0, dw = 0.0;
      for (int m = 0; m < 4; ++m) {
        if (m == i) continue;
        den *= double(i - m);
        w *= t - m;
        double prod = 1.0;
        for (int k = 0; k < 4; ++k)
          if (k != i && k != m) prod *= t - k;
        dw += prod;
      }
      const QbProfile& q = *nodes_[std::size_t(i0 + i)];
      const double pv = q.P_raw(rho);
      P += w / den * pv;
      dP += w / den * q.dP_raw(rho);
      if (Pb) *Pb += dw / den / db_ * pv;
    }
  }
  detail::Composed composed(double b, double rho) const {
    ProfileParams p = base_;
    p.b = b;
    check(b);
    if (rho >= p.R()) return {0.0, 0.0, 0.0};
    double P, dP;
    interp(b, rho, P, dP, nullptr);
    return detail::compose(b, detail::cut(rho, p.Rm(), p.R()), rho, P, dP, detail::P_second(b, rho, P, dP));
  }
  ProfileParams base_;
  double b0_ = 0.0, db_ = 0.005;
  std::vector<std::shared_ptr<QbProfile>> nodes_;
};

}  // namespace rblw
