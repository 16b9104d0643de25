#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rblw/diagnostics.hpp"
#include "rblw/evolver.hpp"
#include "rblw/field_ops.hpp"
#include "rblw/ground_state.hpp"
#include "rblw/init_data.hpp"
#include "rblw/modulation.hpp"
#include "rblw/profiles.hpp"

namespace rblw {

struct SelfCheck {
  std::string name;
  bool pass = false;
  double value = 0.0, threshold = 0.0;
  std::string error;
};

namespace detail {

inline double st_bump(double d, double a, double b) {
  if (d <= a) return 1.0;
  if (d >= b) return 0.0;
  const double t = (d - a) / (b - a);
  const double e1 = std::exp(-1.0 / (1.0 - t)), e0 = std::exp(-1.0 / t);
  return e1 / (e1 + e0);
}

inline ComplexField st_ring(const Grid& g, double a, cplx amp = 1.0) {
  return ComplexField::from(g, [&](double r, double z) { return amp * std::exp(-a * ((r - 1) * (r - 1) + z * z)); });
}

inline double st_l2(const ComplexField& a) {
  double s = 0.0;
  for (const auto& v : a.v) s += std::norm(v);
  return std::sqrt(s);
}

}  // namespace detail

// The closed-form and symmetry checks, on small grids. Each check reports the measured
// value against its threshold; a thrown exception counts as a failure.
inline std::vector<SelfCheck> run_selftest(const std::function<void(const SelfCheck&)>& on_check = {}) {
  using namespace detail;
  std::vector<SelfCheck> out;
  auto check = [&](const std::string& name, double thr, const std::function<double()>& fn) {
    SelfCheck c;
    c.name = name, c.threshold = thr;
    try {
      c.value = fn();
      c.pass = std::isfinite(c.value) && c.value <= thr;
    } catch (const std::exception& e) {
      c.error = e.what();
    }
    out.push_back(c);
    if (on_check) on_check(out.back());
  };

  // core field
  check("laplacian: constant annihilated in the interior", 1e-6, [] {
    Grid g(512, 512);
    auto f = ComplexField::from(g, [](double r, double z) { return cplx(3.0 * st_bump(std::hypot(r - 1, z), 0.3, 0.8)); });
    const auto lf = laplacian_cyl(f);
    double err = 0.0;
    for (std::size_t j = 0; j < g.nr; ++j)
      for (std::size_t k = 0; k < g.nz; ++k)
        if (std::hypot(g.r(j) - 1, g.z(k)) < 0.25) err = std::max(err, std::abs(lf(j, k)));
    return err;
  });
  check("laplacian: r^2 gives 4", 2e-4, [] {
    Grid g(512, 512);
    auto f = ComplexField::from(g, [](double r, double z) { return cplx(r * r * st_bump(std::hypot(r, z), 0.5, 0.95)); });
    const auto lf = laplacian_cyl(f);
    double err = 0.0;
    for (std::size_t j = 0; j < g.nr; ++j)
      for (std::size_t k = 0; k < g.nz; ++k)
        if (std::hypot(g.r(j), g.z(k)) < 0.45 && g.r(j) > 0.1) err = std::max(err, std::abs(lf(j, k) - 4.0));
    return err;
  });
  check("mass and energy of the zero field", 0.0, [] {
    Grid g(64, 64);
    return std::abs(mass(ComplexField(g))) + std::abs(energy(ComplexField(g)));
  });
  check("mass of the smoothed box r<1, 0<z<1 against pi", 2e-2, [] {
    Grid g(1024, 1024);
    const double d = 0.002;
    auto box = ComplexField::from(g, [&](double r, double z) {
      const double a = 0.5 * (1 - std::tanh((r - 1) / d));
      const double b = 0.25 * (1 + std::tanh(z / d)) * (1 - std::tanh((z - 1 + 1e-9) / d));
      return cplx(std::sqrt(a * b));
    });
    return std::abs(mass(box) - kPi) / kPi;
  });
  check("momentum: real and pure-phase fields", 1e-12, [] {
    Grid g(128, 128);
    CutoffSet cuts(g);
    auto f = st_ring(g, 20.0);
    auto h = f;
    for (auto& x : h.v) x *= std::exp(cplx(0, 0.77));
    return std::abs(momentum_localized(f, cuts)) + std::abs(momentum_localized(h, cuts)) + std::abs(momentum_z(h));
  });
  check("sobolev: order 0 is the L2 norm", 1e-10, [] {
    Grid g(256, 128);
    auto f = ComplexField::from(g, [](double r, double z) {
      return std::exp(-15.0 * ((r - 0.8) * (r - 0.8) + z * z)) * cplx(std::cos(4 * z), r);
    });
    return std::abs(sobolev_norm(f, 0.0) - std::sqrt(mass(f))) / std::sqrt(mass(f));
  });
  check("sobolev: axial mode k adds k^2 mass to H1", 1e-8, [] {
    Grid g(256, 256);
    const double k = 3.0 * kPi;
    auto prof = [](double r) { return std::exp(-20.0 * (r - 1) * (r - 1)) * st_bump(r, 1.4, 1.8); };
    auto f0 = ComplexField::from(g, [&](double r, double) { return cplx(prof(r)); });
    auto fk = ComplexField::from(g, [&](double r, double z) { return prof(r) * std::exp(cplx(0, k * z)); });
    const double h0 = sobolev_norm(f0, 1.0), hk = sobolev_norm(fk, 1.0), l2 = sobolev_norm(fk, 0.0);
    return std::abs(hk * hk - h0 * h0 - k * k * l2 * l2) / (hk * hk);
  });
  check("localized norm: zero field, unit cut", 0.0, [] {
    Grid g(128, 128);
    RealField one(g, 1.0);
    auto f = st_ring(g, 20.0);
    return localized_norm(ComplexField(g), one, 1.0) + std::abs(localized_norm(f, one, 1.0) - sobolev_norm(f, 1.0));
  });

  // ground state and radial operators
  check("decay slope of exp(-rho)", 1e-6, [] {
    RadialProfile e(2001, 0.01);
    for (std::size_t j = 0; j < e.n(); ++j) e[j] = std::exp(-e.rho(j));
    return std::abs(decay_check(e) + 1.0);
  });
  check("Lambda(rho^2) = 3 rho^2", 1e-6, [] {
    RadialProfile f(2001, 0.01);
    for (std::size_t j = 0; j < f.n(); ++j) f[j] = f.rho(j) * f.rho(j);
    const RadialProfile L = lambda_op(f);
    double err = 0.0;
    for (std::size_t j = 0; j < 1500; ++j) err = std::max(err, std::abs(L[j] - 3.0 * f[j]));
    return err;
  });
  const GroundState gs = solve_Q(1e-10);
  check("<Lambda Q, Q> = 0", 1e-8, [&] { return std::abs(radial_inner(lambda_op(gs.Q), gs.Q)); });

  // profiles
  ProfileParams p2;
  p2.b = 0.2;
  const QbProfile qb = solve_Qb(p2, gs.Q);
  check("Q_b vanishes at R_b and Psi_b below R_b^-", 1e-10, [&] {
    double m = std::abs(qb.Qt(qb.R()));
    for (double x = 0.0; x < qb.p.Rm(); x += 0.01) m = std::max(m, std::abs(qb.Psi(x)));
    return m;
  });
  check("zeta for Psi = 0 is zero", 0.0, [] {
    const Radiation z = solve_zeta_fn(0.2, [](double) { return cplx(0.0); }, 1e-8, 40.0);
    double m = z.gamma();
    for (const auto& v : z.near.v) m = std::max(m, std::abs(v));
    return m;
  });
  check("Gamma of a synthetic c/rho tail", 1e-10, [] {
    RadialProfile z(5001, 0.1);
    for (std::size_t j = 0; j < z.n(); ++j) z[j] = j ? std::sqrt(0.37 / z.rho(j)) * std::exp(cplx(0, 0.3 * z.rho(j))) : cplx(0);
    return std::abs(gamma_b(z, 1.0).value - 0.37);
  });

  // initial data
  const PerturbationF f = construct_f(gs.Q, qb);
  check("f: <f,Q> = 1 and the projections vanish", 1e-10,
        [&] { return std::abs(f.fQ - 1.0) + std::abs(f.res_y2) + std::abs(f.res_L2) + std::abs(f.res_L1); });
  check("u0 with gamma0 = pi is the negative field", 1e-12, [&] {
    Grid g(1024, 1024);
    DataParams d;
    d.b0 = 0.2, d.lambda0 = 0.1, d.nu = 1e-3;
    const ComplexField u = assemble_u0(d, qb, &f, g);
    d.gamma0 = kPi;
    const ComplexField v = assemble_u0(d, qb, &f, g);
    double m = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) m = std::max(m, std::abs(u.v[i] + v.v[i]));
    return m;
  });

  // evolver
  check("zero field stays zero", 0.0, [] {
    Grid g(64, 64);
    return st_l2(step(ComplexField(g), 1e-3));
  });
  check("step dt then -dt returns the field", 1e-10, [] {
    Grid g(128, 128);
    const ComplexField u0 = st_ring(g, 50.0, 2.0);
    Stepper s(u0);
    s.step(1e-4);
    s.step(-1e-4);
    ComplexField d = s.u();
    for (std::size_t i = 0; i < d.size(); ++i) d.v[i] -= u0.v[i];
    return st_l2(d) / st_l2(u0);
  });
  check("absurd dt0 reports numerical blowup", 0.0, [] {
    Grid g(64, 64);
    EvolverConfig c;
    c.dt0 = 10.0, c.t_max = 100.0, c.snapshot_stride = 1;
    const auto tr = run(st_ring(g, 50.0, 2.0), c);
    return tr.stop == StopReason::NumericalBlowup && tr.blowup_lo < tr.blowup_hi ? 0.0 : 1.0;
  });
  check("z-momentum of z-symmetric data stays zero", 1e-10, [] {
    Grid g(128, 128);
    EvolverConfig c;
    c.dt0 = 1e-3, c.t_max = 0.02, c.snapshot_stride = 5;
    const auto tr = run(st_ring(g, 30.0, 1.5), c);
    double m = 0.0;
    for (const auto& r : tr.records) m = std::max(m, std::abs(r.momentum_z));
    return m;
  });

  // modulation
  const QbLadder ladder(gs.Q, 0.15, 0.26);
  const Decomposer dec(ladder, gs.Q);
  ModState truth;
  truth.lambda = 0.07, truth.b = 0.2, truth.r = 1.03, truth.z = -0.02, truth.gamma = 0.4;
  auto synth = [&](const ModState& s, double th) -> FieldFn {
    return [s, th, &ladder](double r, double z) -> cplx {
      const double rho = std::hypot(r - s.r, z - s.z) / s.lambda;
      if (rho >= ladder.R_at(s.b)) return 0.0;
      return ladder.Qt(s.b, rho) * std::exp(cplx(0.0, th - s.gamma)) / s.lambda;
    };
  };
  auto nudged = [](ModState s, double d) {
    s.lambda *= 1 + d, s.b *= 1 - d, s.r += d * s.lambda, s.z -= d * s.lambda, s.gamma += d;
    return s;
  };
  check("exact profile: parameters recovered", 1e-8, [&] {
    const auto d = dec.decompose(synth(truth, 0.0), nudged(truth, 0.02));
    const ModState& s = d.state;
    return std::max({std::abs(s.lambda / truth.lambda - 1), std::abs(s.b / truth.b - 1), std::abs(s.r / truth.r - 1),
                     std::abs(s.z - truth.z) / truth.lambda, std::abs(s.gamma - truth.gamma)});
  });
  check("phase rotation shifts gamma by -theta", 1e-8, [&] {
    const double th = 0.9;
    ModState t1 = truth;
    t1.gamma -= th;
    const auto d = dec.decompose(synth(truth, th), nudged(t1, 0.01));
    return std::abs(d.state.gamma - t1.gamma) + std::abs(d.state.lambda - truth.lambda) / truth.lambda;
  });
  check("manufactured lambda = l0 exp(-b s): law residual", 1e-6, [] {
    const double l0 = 0.05, b = 0.2;
    std::vector<std::pair<double, ModState>> v;
    for (int i = 0; i <= 2000; ++i) {
      const double s = 0.01 * i;
      ModState m;
      m.lambda = l0 * std::exp(-b * s), m.b = b, m.r = 1.0, m.gamma = -s;
      v.push_back({l0 * l0 * (1 - std::exp(-2 * b * s)) / (2 * b), m});
    }
    const auto rep = param_dynamics(v);
    double worst = 0.0;
    for (const auto& r : rep.rows) worst = std::max(worst, r.law_residual);
    return worst;
  });
  check("eps norm of zero eps", 0.0, [&] {
    Decomposition d;
    d.state = truth;
    d.eps_x = ComplexField(Grid(128, 128));
    return eps_norm(d);
  });

  // diagnostics
  check("H(0,0) = 0", 0.0, [&] { return std::abs(quadratic_form_H(YField(64, 12.0), gs.Q).value); });
  check("H of high-frequency eps against its gradient term", 0.05, [&] {
    YField e(256, 12.0);
    for (std::size_t i = 0; i < e.n; ++i)
      for (std::size_t j = 0; j < e.n; ++j) {
        const double r = std::hypot(e.y(i), e.y(j));
        e(i, j) = cplx(1.0, 0.5) * std::exp(-r * r / 8) * std::cos(25.0 * e.y(i));
      }
    const auto h = quadratic_form_H(e, gs.Q);
    return std::abs(h.value - h.grad2) / h.grad2;
  });
  check("E3 of the zero field", 0.0, [] { return std::abs(third_order_energy(ComplexField(Grid(64, 64))).E3); });
  check("rate fit on log-log data: T error and trend", 1e-4, [] {
    const double T = 0.25;
    std::vector<std::pair<double, double>> ll;
    for (int i = 0; i < 60; ++i) {
      const double tau = 0.05 * std::pow(1e-4, i / 59.0);
      ll.push_back({T - tau, std::sqrt(tau / std::log(std::abs(std::log(tau))))});
    }
    const auto a = rate_fit(ll);
    return std::max(std::abs(a.T_est - T), std::abs(a.trend_slope) > 0.02 ? 1.0 : 0.0);
  });
  check("H1.5 flags a threefold rise", 0.0, [] {
    return (h15_monotony({0.1, 0.2, 0.05, 0.12, 0.01}).pass && !h15_monotony({0.1, 0.05, 0.16}).pass) ? 0.0 : 1.0;
  });
  check("mass flux terms of zero eps", 1e-14, [&] {
    Decomposition d;
    d.state = truth;
    d.eps_x = ComplexField(Grid(256, 256));
    const auto m = mass_flux_terms(d, std::exp(-kPi / truth.b), 0.6);
    return std::abs(m.F) + std::abs(m.annulus);
  });
  return out;
}

}  // namespace rblw
