#include <gtest/gtest.h>

#include <fftw3.h>

#include <cmath>
#include <functional>

#include "rblw/init_data.hpp"

using namespace rblw;

namespace {

struct Fixture {
  GroundState gs;
  double qmass = 0.0;
  ProfileBundle B;
  PerturbationF f;
  NuResult nu;
};

const Fixture& fx() {
  static Fixture F = [] {
    Fixture x;
    x.gs = solve_Q(1e-10);
    x.qmass = radial_norm2(x.gs.Q);
    ProfileParams p;
    p.b = 0.2;
    x.B = build_bundle(p, x.gs.Q, x.qmass);
    x.f = construct_f(x.gs.Q, *x.B.qb);
    x.nu = tune_nu(*x.B.qb, x.f);
    return x;
  }();
  return F;
}

DataParams data(double nu) {
  DataParams d;
  d.b0 = 0.2;
  d.lambda0 = 0.1;
  d.nu = nu;
  return d;
}

const Grid& grid() {
  static Grid g(1024, 1024);
  return g;
}

// Flat H^3 norm of a radial function rasterised on a periodic square.
double flat_h3(const std::function<double(double)>& fn, int n = 256, double L = 8.0) {
  fftw_complex* a = fftw_alloc_complex(n * n);
  fftw_plan fw = fftw_plan_dft_2d(n, n, a, a, FFTW_FORWARD, FFTW_ESTIMATE);
  const double h = L / n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      a[i * n + j][0] = fn(std::hypot(-L / 2 + i * h, -L / 2 + j * h));
      a[i * n + j][1] = 0.0;
    }
  fftw_execute(fw);
  double s = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double kx = 2 * kPi / L * (i < n / 2 ? i : i - n), ky = 2 * kPi / L * (j < n / 2 ? j : j - n);
      s += std::pow(1 + kx * kx + ky * ky, 3) * (a[i * n + j][0] * a[i * n + j][0] + a[i * n + j][1] * a[i * n + j][1]);
    }
  fftw_destroy_plan(fw);
  fftw_free(a);
  return std::sqrt(s * h * h / double(n * n));
}

}  // namespace

TEST(ConstructF, ConstraintsHoldToRoundoff) {
  const auto& F = fx();
  EXPECT_NEAR(F.f.fQ, 1.0, 1e-12);
  EXPECT_LT(std::abs(F.f.res_y2), 1e-10);
  EXPECT_LT(std::abs(F.f.res_L2), 1e-10);
  EXPECT_LT(std::abs(F.f.res_L1), 1e-10);
  EXPECT_EQ(F.f.value(2.0), 0.0);
  EXPECT_LT(std::abs(F.f.value(1.999)), 1e-12);
}

TEST(ConstructF, ConstraintsByIndependentTrapezoid) {
  // Plain trapezoid in rho on the tabulated profiles.
  const auto& F = fx();
  const auto& qb = *F.B.qb;
  const int n = 40000;
  const double h = 2.0 / n;
  double fq = 0, y2 = 0, l1 = 0;
  for (int j = 0; j <= n; ++j) {
    const double r = j * h, w = (j == 0 || j == n ? 0.5 : 1.0) * 2 * kPi * r * h;
    const double fv = F.f.value(r);
    fq += w * fv * F.gs.Q.at(r).real();
    y2 += w * fv * r * r * qb.Qt(r).real();
    l1 += w * fv * qb.LambdaQt(r).imag();
  }
  EXPECT_NEAR(fq, 1.0, 1e-6);
  EXPECT_LT(std::abs(y2), 1e-6);
  EXPECT_LT(std::abs(l1), 1e-6);
}

TEST(ConstructF, H3NormMatchesFlatFourierOracle) {
  const auto& F = fx();
  const double o = flat_h3([&](double r) { return F.f.value(r); });
  EXPECT_NEAR(F.f.h3_norm, o, 1e-4 * o);
  // A unit H^3 ball cannot reach <f,Q> = 1 in this span.
  EXPECT_GT(F.f.h3_min_fQ_only, 1.0);
  EXPECT_GE(F.f.h3_norm, F.f.h3_min_fQ_only * (1 - 1e-12));
}

TEST(ConstructF, TooFewSeedsRejected) {
  EXPECT_THROW(construct_f(fx().gs.Q, *fx().B.qb, 3), Error);
}

TEST(TuneNu, ZeroesTheFlatEnergy) {
  const auto& F = fx();
  EXPECT_NE(F.nu.nu, 0.0);
  EXPECT_LT(std::abs(F.nu.energy), 1e-12);
  EXPECT_GT(std::abs(F.nu.energy_at_zero), 1e-6);
  // Independent check: direct quadrature of the flat energy of Qt + nu f.
  const auto& qb = *F.B.qb;
  const double nu = F.nu.nu;
  auto dens = [&](double r) {
    const cplx v = qb.Qt(r) + nu * F.f.value(r), dv = qb.dQt(r) + nu * F.f.deriv(r);
    return 2 * kPi * r * (0.5 * std::norm(dv) - 0.25 * std::norm(v) * std::norm(v));
  };
  const double E = gl_integrate(dens, 0.0, 2.0, 400) + gl_integrate(dens, 2.0, qb.R(), 2000);
  EXPECT_LT(std::abs(E), 1e-8);
}

TEST(TuneNu, DoublingFHalvesNu) {
  const auto& F = fx();
  PerturbationF g = F.f;
  g.p = detail::scaled(g.p, 2.0);
  g.q = detail::scaled(g.q, 2.0);
  const NuResult r = tune_nu(*F.B.qb, g);
  // The quartic root moves exactly to nu/2.
  EXPECT_NEAR(r.nu, 0.5 * F.nu.nu, 1e-9 * std::abs(F.nu.nu));
}

TEST(AssembleU0, PhaseRotationNegates) {
  const auto& F = fx();
  auto d = data(F.nu.nu);
  const ComplexField u = assemble_u0(d, *F.B.qb, &F.f, grid());
  d.gamma0 = kPi;
  const ComplexField v = assemble_u0(d, *F.B.qb, &F.f, grid());
  double m = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) m = std::max(m, std::abs(u.v[i] + v.v[i]));
  EXPECT_LT(m, 1e-12);
}

TEST(AssembleU0, RingNormalizedMassExcess) {
  const auto& F = fx();
  const auto d = data(F.nu.nu);
  const ComplexField u = assemble_u0(d, *F.B.qb, &F.f, grid());
  // M(u0) / (2 pi r0) approximates the flat mass of Qt + nu f; the lambda0 y1 weight integrates out.
  const double ex = mass(u) / (2 * kPi * d.r0) - F.qmass;
  EXPECT_GT(ex, 0.0);
  EXPECT_LT(ex, d.alpha_star);
  EXPECT_NEAR(ex, F.B.mass_excess, 0.02);
}

TEST(AssembleU0, UnderResolvedOrOutsideRejected) {
  const auto& F = fx();
  auto d = data(F.nu.nu);
  Grid coarse(256, 256);
  EXPECT_THROW(assemble_u0(d, *F.B.qb, &F.f, coarse), Error);
  d.lambda0 = 0.2;
  EXPECT_THROW(assemble_u0(d, *F.B.qb, &F.f, grid()), Error);
}

TEST(VerifyP, TunedDataPassesDeskScaleUntunedFails) {
  const auto& F = fx();
  CutoffSet cuts(grid());
  const auto d = data(F.nu.nu);
  const ComplexField u = assemble_u0(d, *F.B.qb, &F.f, grid());
  const auto rep = verify_P(u, d, F.B, &F.f, cuts);
  for (const auto& c : rep.checks) std::printf("%-34s %-10s %12.4e %12.4e %s\n", c.name.c_str(), c.mode.c_str(), c.value, c.threshold, c.pass ? "pass" : "FAIL");
  EXPECT_EQ(rep.regime, "desk-scale");
  EXPECT_TRUE(rep.find("C1.4 flat energy")->pass);
  EXPECT_TRUE(rep.find("C1.4 momentum / focusing phase")->pass);
  EXPECT_FALSE(rep.find("C1.3 log|log lambda0|")->pass);
  EXPECT_TRUE(rep.find("C1.1 |(r0,z0)-(1,0)|")->pass);
  EXPECT_TRUE(rep.find("C1.2 orthogonality")->pass);
  EXPECT_TRUE(rep.find("C2.1 ||u0||_H3")->pass);

  auto d0 = data(0.0);
  const ComplexField u0 = assemble_u0(d0, *F.B.qb, nullptr, grid());
  const auto rep0 = verify_P(u0, d0, F.B, nullptr, cuts);
  EXPECT_FALSE(rep0.find("C1.4 flat energy")->pass);
  EXPECT_FALSE(rep0.desk_ok);
}
