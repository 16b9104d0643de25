#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "rblw/cutoff.hpp"
#include "rblw/field_ops.hpp"
#include "rblw/profiles.hpp"

namespace rblw {

struct DataParams {
  double alpha_star = 0.3;
  double b0 = 0.2;
  double lambda0 = 0.05;
  double r0 = 1.0, z0 = 0.0;
  double gamma0 = 0.0;
  double nu = 0.0;
  ProfileParams profile() const {
    ProfileParams p;
    p.b = b0;
    return p;
  }
};

namespace detail {

// Gauss-Legendre nodes/weights on [-1,1], Newton on P_n.
inline std::vector<std::pair<double, double>> gauss_legendre(int n) {
  std::vector<std::pair<double, double>> out(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5)), dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1, p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    out[i] = {x, 2.0 / ((1 - x * x) * dp * dp)};
  }
  return out;
}

// Polynomial in s with coefficients c[k] s^k.
struct Poly {
  std::vector<double> c;
  double operator()(double s) const {
    double v = 0.0;
    for (std::size_t k = c.size(); k-- > 0;) v = v * s + c[k];
    return v;
  }
  Poly deriv() const {
    Poly d;
    for (std::size_t k = 1; k < c.size(); ++k) d.c.push_back(double(k) * c[k]);
    if (d.c.empty()) d.c.push_back(0.0);
    return d;
  }
};
inline Poly operator*(const Poly& a, const Poly& b) {
  Poly p;
  p.c.assign(a.c.size() + b.c.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.c.size(); ++i)
    for (std::size_t j = 0; j < b.c.size(); ++j) p.c[i + j] += a.c[i] * b.c[j];
  return p;
}
inline Poly operator+(Poly a, const Poly& b) {
  if (b.c.size() > a.c.size()) a.c.resize(b.c.size(), 0.0);
  for (std::size_t i = 0; i < b.c.size(); ++i) a.c[i] += b.c[i];
  return a;
}
inline Poly scaled(Poly a, double s) {
  for (auto& v : a.c) v *= s;
  return a;
}

}  // namespace detail

// Radial f(rho) = p(rho^2) on rho <= 2, zero beyond; p vanishes to sixth order at s = 4.
struct PerturbationF {
  detail::Poly p;  // expanded form, used for quadrature
  detail::Poly q;  // p = q(s) (1 - s/4)^6, used for pointwise values
  double h3_norm = 0.0;
  double fQ = 0.0;
  // Smallest H^3 norm with <f,Q> = 1 alone in the seed span, and the four constraint residuals.
  double h3_min_fQ_only = 0.0;
  double res_y2 = 0.0, res_L2 = 0.0, res_L1 = 0.0;
  int seeds = 0;

  double value(double rho) const {
    if (rho >= 2.0) return 0.0;
    const double s = rho * rho;
    return q(s) * std::pow(1.0 - s / 4.0, 6);
  }
  double deriv(double rho) const {
    if (rho >= 2.0) return 0.0;
    const double s = rho * rho, t = 1.0 - s / 4.0;
    return 2.0 * rho * std::pow(t, 5) * (q.deriv()(s) * t - 1.5 * q(s));
  }
  RadialProfile sample(double drho, std::size_t n) const {
    RadialProfile out(n, drho);
    for (std::size_t j = 0; j < n; ++j) out[j] = value(out.rho(j));
    return out;
  }
};

namespace detail {

// int_{R^2} g(|y|^2) dy over |y| <= 2 equals pi int_0^4 g(s) ds.
template <class F>
double disc_integral(F&& g, int n = 48) {
  static const auto gl = gauss_legendre(n);
  double s = 0.0;
  for (const auto& [x, w] : gl) s += w * 2.0 * g(2.0 + 2.0 * x);
  return kPi * s;
}

// H^3 inner product of two radial polynomial-in-s functions vanishing to high order at s = 4:
// <f,g> + 3<grad f, grad g> + 3<Lap f, Lap g> + <grad Lap f, grad Lap g>.
inline double h3_inner(const Poly& a, const Poly& b) {
  auto lap = [](const Poly& p) { return scaled(p.deriv(), 4.0) + scaled(Poly{{0.0, 1.0}} * p.deriv().deriv(), 4.0); };
  const Poly la = lap(a), lb = lap(b), da = a.deriv(), db = b.deriv(), dla = la.deriv(), dlb = lb.deriv();
  return disc_integral([&](double s) {
    return a(s) * b(s) + 3.0 * 4.0 * s * da(s) * db(s) + 3.0 * la(s) * lb(s) + 4.0 * s * dla(s) * dlb(s);
  });
}

}  // namespace detail

// Minimum-H^3-norm radial f supported in |y| <= 2 with <f,Q> = 1 and
// Re<f,|y|^2 Qt> = Im<f, Lambda^2 Qt> = Im<f, Lambda Qt> = 0 (Re<f, y Qt> = 0 by symmetry).
inline PerturbationF construct_f(const RadialProfile& Q, const QbProfile& qb, int n_seeds = 8) {
  using detail::Poly;
  if (n_seeds < 4) throw Error(ErrorKind::Validation, "construct_f needs at least four seeds for four constraints");
  Poly bump{{1.0}};
  for (int i = 0; i < 6; ++i) bump = bump * Poly{{1.0, -0.25}};
  std::vector<Poly> seed;
  for (int i = 0; i < n_seeds; ++i) {
    Poly m;
    m.c.assign(std::size_t(i) + 1, 0.0);
    m.c[std::size_t(i)] = 1.0;
    seed.push_back(m * bump);
  }
  const int n = n_seeds;
  Eigen::MatrixXd G(n, n), C(n, 4);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) G(i, j) = G(j, i) = detail::h3_inner(seed[i], seed[j]);
  for (int i = 0; i < n; ++i) {
    const Poly& s = seed[i];
    C(i, 0) = detail::disc_integral([&](double x) { return s(x) * Q.at(std::sqrt(x)).real(); });
    C(i, 1) = detail::disc_integral([&](double x) { return s(x) * x * qb.Qt(std::sqrt(x)).real(); });
    C(i, 2) = -detail::disc_integral([&](double x) { return s(x) * qb.Lambda2Qt(std::sqrt(x)).imag(); });
    C(i, 3) = -detail::disc_integral([&](double x) { return s(x) * qb.LambdaQt(std::sqrt(x)).imag(); });
  }
  Eigen::LDLT<Eigen::MatrixXd> Gf(G);
  if (Gf.info() != Eigen::Success) throw Error(ErrorKind::ConvergenceFailure, "seed Gram matrix is not positive definite");
  const Eigen::MatrixXd GiC = Gf.solve(C);
  const Eigen::MatrixXd S = C.transpose() * GiC;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(S);
  const auto sv = svd.singularValues();
  if (!(sv(sv.size() - 1) > 1e-13 * sv(0))) throw Error(ErrorKind::ConvergenceFailure, "degenerate constraint Gram matrix");
  Eigen::Vector4d d(1.0, 0.0, 0.0, 0.0);
  const auto Sf = S.fullPivLu();
  Eigen::VectorXd a = GiC * Sf.solve(d);
  a += GiC * Sf.solve(d - C.transpose() * a);  // one refinement step
  PerturbationF f;
  f.seeds = n;
  f.p.c.assign(1, 0.0);
  f.q.c.assign(std::size_t(n), 0.0);
  for (int i = 0; i < n; ++i) f.p = f.p + detail::scaled(seed[i], a(i)), f.q.c[std::size_t(i)] = a(i);
  f.h3_norm = std::sqrt(std::max(0.0, double(a.transpose() * G * a)));
  const Eigen::VectorXd r = C.transpose() * a;
  f.fQ = r(0), f.res_y2 = r(1), f.res_L2 = r(2), f.res_L1 = r(3);
  const Eigen::VectorXd c0 = C.col(0);
  f.h3_min_fQ_only = 1.0 / std::sqrt(double(c0.transpose() * Gf.solve(c0)));
  return f;
}

// Flat 2D energy (1/2)int|grad v|^2 - (1/4)int|v|^4 of v = Qt + nu f as a quartic in nu.
struct EnergyQuartic {
  double c[5] = {0, 0, 0, 0, 0};
  double operator()(double nu) const { return c[0] + nu * (c[1] + nu * (c[2] + nu * (c[3] + nu * c[4]))); }
};

inline EnergyQuartic energy_quartic(const QbProfile& qb, const PerturbationF& f) {
  EnergyQuartic e;
  e.c[0] = 0.5 * energy_Qt(qb);
  const detail::Poly dp = f.p.deriv();
  // Integrands in s = rho^2 on the support of f.
  auto q = [&](double s) { return qb.Qt(std::sqrt(s)); };
  auto dq = [&](double s) { return qb.dQt(std::sqrt(s)); };
  e.c[1] = detail::disc_integral([&](double s) {
    const double fr = 2.0 * std::sqrt(s) * dp(s);
    return dq(s).real() * fr - std::norm(q(s)) * q(s).real() * f.p(s);
  });
  e.c[2] = detail::disc_integral([&](double s) {
    const double fr = 2.0 * std::sqrt(s) * dp(s), fv = f.p(s), re = q(s).real();
    return 0.5 * fr * fr - fv * fv * re * re - 0.5 * std::norm(q(s)) * fv * fv;
  });
  e.c[3] = -detail::disc_integral([&](double s) { return std::pow(f.p(s), 3) * q(s).real(); });
  e.c[4] = -0.25 * detail::disc_integral([&](double s) { return std::pow(f.p(s), 4); });
  return e;
}

struct NuResult {
  double nu = 0.0, energy = 0.0, energy_at_zero = 0.0, slope_at_zero = 0.0;
  int iterations = 0;
};

// Root of the flat energy in nu, bracketed from the first-order guess -E(0)/E'(0).
inline NuResult tune_nu(const QbProfile& qb, const PerturbationF& f) {
  const EnergyQuartic e = energy_quartic(qb, f);
  NuResult out;
  out.energy_at_zero = e(0.0);
  out.slope_at_zero = e.c[1];
  if (e(0.0) == 0.0) return out;
  const double guess = -e.c[0] / e.c[1];
  double lo = 0.0, hi = 2.0 * guess;
  int k = 0;
  while (std::signbit(e(lo)) == std::signbit(e(hi)) && k < 60) hi *= 2.0, ++k;
  if (std::signbit(e(lo)) == std::signbit(e(hi))) throw Error(ErrorKind::ConvergenceFailure, "no sign change of the flat energy in nu");
  const bool lo_neg = e(lo) < 0.0;
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    ((e(mid) < 0.0) == lo_neg ? lo : hi) = mid;
    out.iterations = it + 1;
  }
  out.nu = std::abs(e(lo)) < std::abs(e(hi)) ? lo : hi;
  out.energy = e(out.nu);
  if (!(std::abs(out.energy) < 1e-12)) throw Error(ErrorKind::ConvergenceFailure, "flat energy not zeroed to 1e-12");
  return out;
}

// u0 = (1/lambda0)(Qt + nu f)(((r,z) - (r0,z0))/lambda0) e^{-i gamma0}.
inline ComplexField assemble_u0(const DataParams& p, const QbProfile& qb, const PerturbationF* f, const Grid& g,
                                bool profile_part = true) {
  const double R = qb.R(), lam = p.lambda0;
  const double h = std::max(g.dr, g.dz);
  if (lam < 4.0 * h * R) {
    std::ostringstream os;
    os << "profile under-resolved: lambda0=" << lam << " needs max(dr,dz) <= " << lam / (4.0 * R) << " (have " << h << ")";
    throw Error(ErrorKind::Unsupported, os.str());
  }
  if (p.r0 - lam * R <= 0.0 || p.r0 + lam * R >= g.r_max || std::abs(p.z0) + lam * R >= g.z_half)
    throw Error(ErrorKind::Unsupported, "rescaled profile support leaves the computational box");
  ComplexField u(g);
  const cplx ph = std::exp(cplx(0.0, -p.gamma0));
  for (std::size_t j = 0; j < g.nr; ++j)
    for (std::size_t k = 0; k < g.nz; ++k) {
      const double rho = std::hypot(g.r(j) - p.r0, g.z(k) - p.z0) / lam;
      if (rho >= R) continue;
      cplx v = profile_part ? qb.Qt(rho) : cplx(0.0);
      if (f) v += p.nu * f->value(rho);
      u(j, k) = v * ph / lam;
    }
  return u;
}

struct Check {
  std::string name;
  double value = 0.0, threshold = 0.0;
  bool pass = false;
  std::string mode;  // "verbatim" or "desk-scale"
  std::string note;
};

struct AdmissibilityReport {
  std::vector<Check> checks;
  std::string regime;  // "paper-faithful" or "desk-scale"
  bool desk_ok = false;
  const Check* find(const std::string& n) const {
    for (const auto& c : checks)
      if (c.name == n) return &c;
    return nullptr;
  }
};

// Evaluates C1.1-C2.3. Verbatim forms where computable; C1.3 and C1.4 also get desk-scale forms.
inline AdmissibilityReport verify_P(const ComplexField& u0, const DataParams& p, const ProfileBundle& B,
                                    const PerturbationF* f, const CutoffSet& cuts) {
  AdmissibilityReport rep;
  const QbProfile& qb = *B.qb;
  const double lam = p.lambda0, b = p.b0, G = B.Gamma;
  auto add = [&](std::string n, double v, double t, bool pass, std::string mode, std::string note = "") {
    rep.checks.push_back({std::move(n), v, t, pass, std::move(mode), std::move(note)});
  };
  const double drz = std::hypot(p.r0 - 1.0, p.z0);
  add("C1.1 |(r0,z0)-(1,0)|", drz, p.alpha_star, drz < p.alpha_star, "verbatim");

  // ||u_tilde0||_{L^2(R^3)}: the perturbation part alone, rasterised on the grid.
  double ut = 0.0;
  if (f) ut = std::sqrt(mass(assemble_u0(p, qb, f, u0.grid, false)));
  add("C1.2 b0+||u~0||", b + ut, p.alpha_star, b + ut > 0.0 && b + ut < p.alpha_star, "verbatim");
  double orth = 0.0;
  if (f) orth = std::abs(p.nu) * std::max({std::abs(f->res_y2), std::abs(f->res_L2), std::abs(f->res_L1)});
  add("C1.2 orthogonality", orth, 1e-10, orth < 1e-10, "verbatim");
  double eps_small = 0.0;
  if (f) {
    // mu = 2 pi (lambda0 y1 + r0); the y1 part integrates to zero against radial data.
    const double grad2 = detail::disc_integral([&](double s) {
      const double d = 2.0 * std::sqrt(s) * f->p.deriv()(s);
      return d * d;
    });
    const double wmass = detail::disc_integral([&](double s) { return std::pow(f->p(s), 2) * std::exp(-std::sqrt(s)); });
    eps_small = p.nu * p.nu * (2 * kPi * p.r0 * grad2 + wmass);
  }
  add("C1.2 eps smallness", eps_small, std::pow(G, 6.0 / 7.0), eps_small < std::pow(G, 6.0 / 7.0), "verbatim");

  // C1.3 in log-log form: pi/(2 b0) < log(-log lambda0) < 2 pi / b0.
  const double ll = std::log(-std::log(lam));
  add("C1.3 log|log lambda0|", ll, kPi / (2 * b), ll > kPi / (2 * b) && ll < 2 * kPi / b, "verbatim",
      "needs lambda0 < exp(-exp(pi/(2 b0)))");
  const double hmax = std::max(u0.grid.dr, u0.grid.dz);
  const bool desk13 = lam >= 4.0 * hmax * qb.R() && lam <= 0.1 && b >= 0.1 && b <= 0.3;
  add("C1.3 desk window", lam, 4.0 * hmax * qb.R(), desk13, "desk-scale", "lambda0 in [4 max(dr,dz) R_b, 0.1], b0 in [0.1,0.3]");

  // C1.4 verbatim: lambda0^2 |E0| + lambda0 |Im int grad psi . grad u0 conj u0| < Gamma^10.
  const double E0 = 0.5 * energy(u0);
  const double mom = momentum_localized(u0, cuts);
  const double lhs = lam * lam * std::abs(E0) + lam * std::abs(mom);
  add("C1.4 energy+momentum", lhs, std::pow(G, 10.0), lhs < std::pow(G, 10.0), "verbatim");
  // Desk-scale: the flat energy of Qt + nu f against Gamma^2, and the momentum against the part
  // carried by the focusing phase -b|x-x0|^2/(4 lambda0^2), which no choice of f removes.
  double eflat = 0.5 * energy_Qt(qb);
  if (f) eflat = energy_quartic(qb, *f)(p.nu);
  add("C1.4 flat energy", std::abs(eflat), G * G, std::abs(eflat) < G * G, "desk-scale");
  double mom_ref = 0.0;
  {
    const Grid& g = u0.grid;
    for (std::size_t j = 0; j < g.nr; ++j)
      for (std::size_t k = 0; k < g.nz; ++k) {
        const std::size_t i = g.idx(j, k);
        const double proj = cuts.dpsi_dr.v[i] * (g.r(j) - p.r0) + cuts.dpsi_dz.v[i] * (g.z(k) - p.z0);
        mom_ref += 2 * kPi * g.r(j) * std::norm(u0.v[i]) * proj;
      }
    mom_ref *= -b / (2 * lam * lam) * g.cell();
  }
  const double ratio = mom_ref != 0.0 ? mom / mom_ref : 0.0;
  add("C1.4 momentum / focusing phase", ratio, 0.1, std::abs(ratio - 1.0) < 0.1, "desk-scale",
      "leading value 2 pi lambda0 (b0/4)|yQt|^2 when the cutoff is flat on the support");
  // C2.1 with C = 2 sqrt(2 pi r0) |Qt|_{H^3(R^2)} and the exponent 3 of the H^3 scaling.
  const double qt_h3 = [&] {
    const double m = mass_Qt(qb);
    auto lapQ = [&](double r) { const auto c = qb.composed(r); return r > 0 ? c.d2Qt + c.dQt / r : 2.0 * c.d2Qt; };
    const double g1 = gl_integrate([&](double r) { return 2 * kPi * r * std::norm(qb.dQt(r)); }, 0.0, qb.R(), 400);
    const double g2 = gl_integrate([&](double r) { return 2 * kPi * r * std::norm(lapQ(r)); }, 0.0, qb.R(), 400);
    const double dr = 1e-4;
    const double g3 = gl_integrate([&](double r) { return 2 * kPi * r * std::norm((lapQ(r + dr) - lapQ(std::abs(r - dr))) / (2 * dr)); },
                                   0.0, qb.R(), 400);
    return std::sqrt(m + 3 * g1 + 3 * g2 + g3);
  }();
  const double CQ = 2.0 * std::sqrt(2 * kPi * p.r0) * qt_h3;
  const double h3 = sobolev_norm(u0, 3.0);
  add("C2.1 ||u0||_H3", h3, CQ / std::pow(lam, 3.0), h3 < CQ / std::pow(lam, 3.0), "verbatim", "C = 2 sqrt(2 pi r0) ||Qt||_H3");
  const ComplexField cu = cuts.chi0 * u0;
  for (double kappa : {0.5, 1.0, 1.5}) {
    const double v = sobolev_norm(cu, 3.0 - kappa), t = std::pow(lam, -(3.0 - 2.0 * kappa));
    std::ostringstream n;
    n << "C2.2 ||chi0 u0||_H" << 3.0 - kappa;
    add(n.str(), v, t, v < t, "verbatim");
  }
  const double h1 = sobolev_norm(cu, 1.0);
  add("C2.3 ||chi0 u0||_H1", h1, std::sqrt(p.alpha_star), h1 < std::sqrt(p.alpha_star), "verbatim");

  bool verbatim = true, desk = true;
  for (const auto& c : rep.checks) {
    if (c.mode == "verbatim") verbatim = verbatim && c.pass;
    const bool replaced = c.name.rfind("C1.3", 0) == 0 || c.name.rfind("C1.4", 0) == 0;
    if (c.mode == "desk-scale" || !replaced) desk = desk && c.pass;
  }
  rep.regime = verbatim ? "paper-faithful" : "desk-scale";
  rep.desk_ok = desk;
  return rep;
}

}  // namespace rblw
