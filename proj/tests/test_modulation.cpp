#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "rblw/init_data.hpp"
#include "rblw/modulation.hpp"

using namespace rblw;

namespace {

struct Fixture {
  GroundState gs;
  double qmass = 0.0;
  std::unique_ptr<QbLadder> ladder;
  std::unique_ptr<Decomposer> dec;
  std::shared_ptr<QbProfile> qb;  // b = 0.2 profile
  PerturbationF f;
};

const Fixture& fx() {
  static Fixture F = [] {
    Fixture x;
    x.gs = solve_Q(1e-10);
    x.qmass = radial_norm2(x.gs.Q);
    x.ladder = std::make_unique<QbLadder>(x.gs.Q, 0.15, 0.26);
    x.dec = std::make_unique<Decomposer>(*x.ladder, x.gs.Q);
    ProfileParams p;
    p.b = 0.2;
    x.qb = std::make_shared<QbProfile>(solve_Qb(p, x.gs.Q));
    x.f = construct_f(x.gs.Q, *x.qb);
    return x;
  }();
  return F;
}

// (1/lambda)(Qt_b + nu f)((x - x0)/lambda) e^{-i gamma}, evaluated from the ladder.
FieldFn synth(const ModState& s, double nu = 0.0) {
  const Fixture& F = fx();
  return [s, nu, &F](double r, double z) -> cplx {
    const double rho = std::hypot(r - s.r, z - s.z) / s.lambda;
    if (rho >= F.ladder->R_at(s.b)) return 0.0;
    return (F.ladder->Qt(s.b, rho) + nu * F.f.value(rho)) * std::exp(cplx(0.0, -s.gamma)) / s.lambda;
  };
}

ModState truth() {
  ModState s;
  s.lambda = 0.07, s.b = 0.2, s.r = 1.03, s.z = -0.02, s.gamma = 0.4;
  return s;
}

void expect_close(const ModState& a, const ModState& b, double rel) {
  EXPECT_NEAR(a.lambda, b.lambda, rel * b.lambda);
  EXPECT_NEAR(a.b, b.b, rel * b.b);
  EXPECT_NEAR(a.r, b.r, rel * b.r);
  EXPECT_NEAR(a.z, b.z, rel * std::max(std::abs(b.z), b.lambda));
  EXPECT_NEAR(a.gamma, b.gamma, rel * std::max(std::abs(b.gamma), 1.0));
}

ModState nudged(const ModState& s, double d) {
  ModState g = s;
  g.lambda *= 1 + d, g.b *= 1 - d, g.r += d * s.lambda, g.z -= d * s.lambda, g.gamma += d;
  return g;
}

}  // namespace

TEST(Decompose, ExactProfileRecovered) {
  const auto& F = fx();
  const ModState t = truth();
  const auto d = F.dec->decompose(synth(t), nudged(t, 0.02));
  expect_close(d.state, t, 1e-8);
  EXPECT_TRUE(d.converged);
  EXPECT_GT(d.jacobian_cond, 1.0);
  EXPECT_LT(d.jacobian_cond, 1e8);
  for (double r : d.residuals) EXPECT_LT(std::abs(r), 1e-11);
}

TEST(Decompose, PerturbationRoundTrip) {
  const auto& F = fx();
  const ModState t = truth();
  const double nu = 2e-3;
  const FieldFn u = synth(t, nu);
  const auto d = F.dec->decompose(u, nudged(t, 0.02));
  expect_close(d.state, t, 1e-6);
  // eps on the support of f against nu f, in L^2(dy).
  double err = 0.0, ref = 0.0;
  for (int i = 0; i < 400; ++i) {
    const double rho = 2.0 * (i + 0.5) / 400;
    for (int k = 0; k < 16; ++k) {
      const double th = 2 * kPi * (k + 0.5) / 16;
      const auto& s = d.state;
      const cplx e = s.lambda * std::exp(cplx(0.0, s.gamma)) * u(s.r + s.lambda * rho * std::cos(th), s.z + s.lambda * rho * std::sin(th)) -
                     F.ladder->Qt(s.b, rho);
      const double w = rho * (2.0 / 400) * (2 * kPi / 16);
      err += w * std::norm(e - nu * F.f.value(rho));
      ref += w * std::norm(nu * F.f.value(rho));
    }
  }
  EXPECT_LT(std::sqrt(err), 1e-6);
  EXPECT_GT(std::sqrt(ref), 1e-4);
}

TEST(Decompose, PhaseAndScalingEquivariance) {
  const auto& F = fx();
  const ModState t = truth();
  const FieldFn u = synth(t, 1e-3);
  const auto d0 = F.dec->decompose(u, nudged(t, 0.01));
  const double th = 0.9;
  ModState tr = t;
  tr.gamma -= th;
  const auto d1 = F.dec->decompose([&](double r, double z) { return std::exp(cplx(0.0, th)) * u(r, z); }, nudged(tr, 0.01));
  EXPECT_NEAR(d1.state.gamma, d0.state.gamma - th, 1e-8);
  EXPECT_NEAR(d1.state.lambda, d0.state.lambda, 1e-8 * t.lambda);
  // (1/l) u(x/l) has lambda, r, z multiplied by l.
  const double l = 0.8;
  ModState ts = t;
  ts.lambda *= l, ts.r *= l, ts.z *= l;
  const auto d2 = F.dec->decompose([&](double r, double z) { return u(r / l, z / l) / l; }, nudged(ts, 0.01));
  EXPECT_NEAR(d2.state.lambda, l * d0.state.lambda, 1e-6 * t.lambda);
  EXPECT_NEAR(d2.state.r, l * d0.state.r, 1e-6);
  EXPECT_NEAR(d2.state.b, d0.state.b, 1e-6 * t.b);
}

TEST(Decompose, GridFieldTranslationAndEps) {
  const auto& F = fx();
  Grid g(1024, 1024);
  ModState t = truth();
  t.lambda = 0.1;
  t.r = 1.0, t.z = 0.0;
  const FieldFn u = synth(t, 1e-3);
  ComplexField ug(g);
  for (std::size_t j = 0; j < g.nr; ++j)
    for (std::size_t k = 0; k < g.nz; ++k) ug(j, k) = u(g.r(j), g.z(k));
  const auto d = F.dec->decompose(ug, nudged(t, 0.01));
  // 8-point interpolation of a profile resolved by about 50 points per lambda.
  expect_close(d.state, t, 1e-5);
  ASSERT_TRUE(d.eps_x.has_value());
  // Shift by 16 cells in z: z moves by exactly 16 dz.
  ComplexField us(g);
  for (std::size_t j = 0; j < g.nr; ++j)
    for (std::size_t k = 0; k < g.nz; ++k) us(j, (k + 16) % g.nz) = ug(j, k);
  const auto ds = F.dec->decompose(us, d.state);
  EXPECT_NEAR(ds.state.z, d.state.z + 16 * g.dz, 1e-9);
  EXPECT_NEAR(ds.state.lambda, d.state.lambda, 1e-9);
}

TEST(Decompose, OutsideLadderOrDivergentThrows) {
  const auto& F = fx();
  ModState t = truth();
  t.b = 0.5;
  EXPECT_THROW(F.dec->decompose(synth(truth()), t), Error);
  // Pure noise has no profile to lock onto.
  const FieldFn junk = [](double r, double z) { return cplx(std::sin(40 * r), std::cos(37 * z)) * 1e-3; };
  EXPECT_THROW(F.dec->decompose(junk, truth()), Error);
}

TEST(Decompose, PerturbedGuessesConverge) {
  const auto& F = fx();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  int ok = 0;
  const int n = 20;
  for (int i = 0; i < n; ++i) {
    ModState t;
    t.lambda = 0.02 + 0.18 * (0.5 + 0.5 * U(rng));
    t.b = 0.2 + 0.03 * U(rng);
    t.r = 1 + 0.05 * U(rng), t.z = 0.05 * U(rng), t.gamma = kPi * U(rng);
    const double G5 = std::exp(-kPi / (5 * t.b));  // Gamma_b^{1/5} with Gamma_b ~ e^{-pi/b}
    ModState g = t;
    g.lambda *= 1 + G5 * U(rng), g.b *= 1 + G5 * U(rng) * 0.5;
    g.r += G5 * t.lambda * U(rng), g.z += G5 * t.lambda * U(rng), g.gamma += G5 * U(rng);
    g.b = std::clamp(g.b, F.ladder->b_min(), F.ladder->b_max());
    try {
      const auto d = F.dec->decompose(synth(t, 1e-4), g);
      ok += std::abs(d.state.lambda / t.lambda - 1) < 1e-6 && std::abs(d.state.b / t.b - 1) < 1e-6;
    } catch (const Error&) {
    }
  }
  EXPECT_GE(ok, n - 1);
}

TEST(EpsNorm, ZeroAndQuadratureOracle) {
  const auto& F = fx();
  Grid g(1024, 1024);
  ModState t = truth();
  t.lambda = 0.1, t.r = 1.0, t.z = 0.0;
  Decomposition d;
  d.state = t;
  d.eps_x = ComplexField(g);
  EXPECT_EQ(eps_norm(d), 0.0);
  const double nu = 1e-3;
  ComplexField e(g);
  for (std::size_t j = 0; j < g.nr; ++j)
    for (std::size_t k = 0; k < g.nz; ++k) {
      const double rho = std::hypot(g.r(j) - t.r, g.z(k) - t.z) / t.lambda;
      e(j, k) = nu * F.f.value(rho) * std::exp(cplx(0.0, -t.gamma)) / t.lambda;
    }
  d.eps_x = e;
  // Oracle: 2 pi r nu^2 int |f'|^2 dy + nu^2 int f^2 e^{-rho} dy by Gauss-Legendre in rho.
  const double g1 = gl_integrate([&](double r) { return 2 * kPi * r * std::pow(F.f.deriv(r), 2); }, 0.0, 2.0, 64);
  const double g2 = gl_integrate([&](double r) { return 2 * kPi * r * std::pow(F.f.value(r), 2) * std::exp(-r); }, 0.0, 2.0, 64);
  const double oracle = nu * nu * (2 * kPi * t.r * g1 + g2);
  EXPECT_NEAR(eps_norm(d), oracle, 1e-6 * oracle);
}

TEST(ParamDynamics, ManufacturedExponentialLaw) {
  const double l0 = 0.05, b = 0.2;
  std::vector<std::pair<double, ModState>> v;
  for (int i = 0; i <= 2000; ++i) {
    const double s = 0.01 * i;
    ModState m;
    m.lambda = l0 * std::exp(-b * s), m.b = b, m.r = 1.0, m.z = 0.0, m.gamma = -s;
    v.push_back({l0 * l0 * (1 - std::exp(-2 * b * s)) / (2 * b), m});
  }
  const auto rep = param_dynamics(v, [](double bb) { return std::exp(-kPi / bb); });
  double worst = 0.0;
  for (const auto& r : rep.rows) worst = std::max(worst, r.law_residual);
  EXPECT_LT(worst, 1e-6);
  EXPECT_NEAR(rep.s.back(), 20.0, 1e-4);
  // Constant r, z up to the conditioning of the stencil.
  EXPECT_LT(rep.max_speed, 1e-7);
  // s is rebuilt by the trapezoid rule in t, so d gamma / ds carries its O(ds^2) error.
  EXPECT_NEAR(rep.rows[1000].gamma_tilde_s, 0.0, 1e-5);
  EXPECT_LT(rep.mean_rel_law, 1e-5);
  auto bad = v;
  std::swap(bad[3], bad[4]);
  EXPECT_THROW(param_dynamics(bad), Error);
}
