#include <gtest/gtest.h>

#include <cmath>

#include <map>

#include "rblw/io.hpp"
#include "rblw/profiles.hpp"

using namespace rblw;

namespace {

const GroundState& gs() {
  static GroundState g = solve_Q(1e-10);
  return g;
}
double Qmass() { return radial_norm2(gs().Q); }

ProfileParams at(double b) {
  ProfileParams p;
  p.b = b;
  return p;
}

const ProfileBundle& bundle(double b) {
  static std::map<double, ProfileBundle> cache;
  auto it = cache.find(b);
  if (it == cache.end()) it = cache.emplace(b, build_bundle(at(b), gs().Q, Qmass())).first;
  return it->second;
}

// Outward RK4 for z'' = -z'/r + z - i b (z + r z') + psi(r), started from the axis series.
struct Shot {
  cplx z, dz;
};
template <class Psi>
Shot rk4_out(double b, cplx z0, Psi&& psi, double rho_end, double h) {
  const cplx I(0.0, 1.0);
  auto f = [&](double r, cplx z, cplx p) { return std::pair<cplx, cplx>{p, -p / r + z - I * b * (z + r * p) + psi(r)}; };
  // At the axis z'' = (z - i b z + psi(0)) / 2 with z' = 0.
  const double r0 = 1e-4;
  const cplx c2 = (z0 - I * b * z0 + psi(0.0)) / 4.0;
  cplx z = z0 + c2 * r0 * r0, p = 2.0 * c2 * r0;
  double r = r0;
  const int steps = int(std::llround((rho_end - r0) / h));
  const double hh = (rho_end - r0) / steps;
  for (int s = 0; s < steps; ++s) {
    auto [k1z, k1p] = f(r, z, p);
    auto [k2z, k2p] = f(r + hh / 2, z + hh / 2 * k1z, p + hh / 2 * k1p);
    auto [k3z, k3p] = f(r + hh / 2, z + hh / 2 * k2z, p + hh / 2 * k2p);
    auto [k4z, k4p] = f(r + hh, z + hh * k3z, p + hh * k3p);
    z += hh / 6 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z);
    p += hh / 6 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
    r += hh;
  }
  return {z, p};
}

}  // namespace

TEST(Qb, SmallBMatchesGroundState) {
  const QbProfile q = solve_Qb(at(1e-3), gs().Q);
  double err = 0.0;
  for (double x = 0.0; x <= 10.0; x += 0.01) err = std::max(err, std::abs(q.Qb(x) - gs().Q.at(x)));
  EXPECT_LT(err, 1e-3);
}

TEST(Qb, AxisValueApproachesQMonotonically) {
  double prev = 1e9;
  for (double b : {0.3, 0.2, 0.1, 0.05}) {
    const double d = std::abs(solve_Qb(at(b), gs().Q).P[0] - gs().Q[0].real());
    EXPECT_LT(d, prev) << "b=" << b;
    prev = d;
  }
}

TEST(Qb, GaugeRealPositiveAndBoundary) {
  const QbProfile q = solve_Qb(at(0.2), gs().Q);
  EXPECT_LT(q.residual, 1e-10);
  EXPECT_EQ(q.P.back(), 0.0);
  for (double x = 0.0; x < q.R() - 1e-9; x += 0.05) {
    const cplx g = q.Qb(x) * std::exp(cplx(0.0, 0.2 * x * x / 4));
    EXPECT_LT(std::abs(g.imag()), 1e-8);
    EXPECT_GT(g.real(), 0.0);
  }
  EXPECT_THROW(solve_Qb(at(0.2), gs().Q, 1e-6), Error);
}

TEST(Qb, LargestWorkingBIsReported) {
  const double bstar = probe_b_star(gs().Q, {}, 0.35, 0.25);
  EXPECT_GE(bstar, 0.35);
  ProfileParams p = at(bstar + 3.0);
  EXPECT_THROW(solve_Qb(p, gs().Q), Error);
}

TEST(Truncation, PsiSupportedOnBand) {
  const QbProfile q = solve_Qb(at(0.25), gs().Q);
  for (double x = 0.0; x < q.p.Rm(); x += 0.01) ASSERT_EQ(q.Psi(x), cplx(0.0));
  for (double x = q.R(); x < q.R() + 3; x += 0.01) ASSERT_EQ(q.Psi(x), cplx(0.0));
  for (double x = q.R(); x < q.R() + 3; x += 0.01) ASSERT_EQ(q.Qt(x), cplx(0.0));
  double band = 0.0;
  for (double x = q.p.Rm(); x < q.R(); x += 0.01) band = std::max(band, std::abs(q.Psi(x)));
  EXPECT_GT(band, 0.0);
  const Truncation t = truncate_Qb(q);
  for (std::size_t j = 0; j < t.Qt.n(); ++j) {
    if (t.Qt.rho(j) >= q.R()) {
      ASSERT_EQ(t.Qt[j], cplx(0.0));
    }
  }
}

TEST(Truncation, DefiningIdentityByProductRule) {
  // Independent route: eighth-order differences of the smooth Q_b samples, analytic cutoff derivatives.
  for (double b : {0.35, 0.2}) {
    const QbProfile q = solve_Qb(at(b), gs().Q);
    const std::size_t n = q.P.size();
    RadialOps ops(n, q.h, 4);
    Eigen::VectorXcd Qb(n);
    for (std::size_t j = 0; j < n; ++j) Qb[j] = q.Qb(double(j) * q.h);
    Eigen::VectorXcd d1 = ops.D1.cast<cplx>() * Qb, lap = ops.laplacian().cast<cplx>() * Qb;
    double sup = 0.0;
    for (std::size_t j = 1; j + 1 < n; ++j) {
      const double r = double(j) * q.h;
      const double ph = q.phi(r), dph = q.dphi(r), lph = q.d2phi(r) + dph / r;
      const cplx Qt = ph * Qb[j];
      const cplx dQt = dph * Qb[j] + ph * d1[j];
      const cplx lapQt = ph * lap[j] + 2.0 * dph * d1[j] + lph * Qb[j];
      const cplx res = lapQt - Qt + cplx(0, b) * (Qt + r * dQt) + Qt * std::norm(Qt) + q.Psi(r);
      sup = std::max(sup, std::abs(res));
    }
    EXPECT_LT(sup, 1e-6) << "b=" << b;
  }
}

TEST(Truncation, WeightedPsiDecreasesWithB) {
  std::vector<double> x, y;
  for (double b : {0.3, 0.2, 0.15}) {
    const QbProfile q = solve_Qb(at(b), gs().Q);
    double s = 0.0;
    for (double r = q.p.Rm(); r <= q.R(); r += 0.001) s = std::max(s, r * r * std::abs(q.Psi(r)));
    x.push_back(1.0 / b), y.push_back(std::log(s));
  }
  EXPECT_LT(fit_slope(x, y), 0.0);
}

TEST(Radiation, AsymptoticBranchSolvesHomogeneousEquation) {
  for (double b : {0.35, 0.15}) {
    for (double r : {40.0, 200.0}) {
      // Centred differences at two steps, Richardson-combined to fourth order.
      auto residual = [&](double d) {
        const cplx gm = detail::asym_branch(b, r - d).g, g0 = detail::asym_branch(b, r).g, gp = detail::asym_branch(b, r + d).g;
        const cplx d1 = (gp - gm) / (2 * d), d2 = (gp - 2.0 * g0 + gm) / (d * d);
        return d2 + d1 / r - g0 + cplx(0, b) * (g0 + r * d1);
      };
      const cplx res = (4.0 * residual(5e-3 * r) - residual(1e-2 * r)) / 3.0;
      const double g = std::abs(detail::asym_branch(b, r).g);
      // The individual terms are of size |g|; they cancel to the series truncation.
      EXPECT_LT(std::abs(res), 1e-7 * g) << b << " " << r;
    }
    // First correction to rho^2 |g|^2 = 1 is |sigma|^2 / (b rho^2) in size.
    const double r = 400.0, sig2 = 1.0 + 1.0 / (b * b);
    EXPECT_NEAR(r * r * std::norm(detail::asym_branch(b, r).g), 1.0, 2 * sig2 / (b * r * r));
  }
}

TEST(Radiation, HomogeneousProblemGivesZero) {
  const Radiation z = solve_zeta_fn(0.2, [](double) { return cplx(0.0); }, 1e-8, 40.0);
  for (const auto& v : z.near.v) ASSERT_EQ(v, cplx(0.0));
  EXPECT_EQ(z.gamma(), 0.0);
}

TEST(Radiation, MatchesIndependentShootingOracle) {
  for (double b : {0.35, 0.25}) {
    const ProfileBundle& B = bundle(b);
    const QbProfile& q = *B.qb;
    const double r1 = B.zeta->rho1;
    auto psi = [&](double r) { return q.Psi(r); };
    auto zero = [](double) { return cplx(0.0); };
    const Shot p = rk4_out(b, 0.0, psi, r1, 1e-3), h = rk4_out(b, 1.0, zero, r1, 1e-3);
    const auto as = detail::asym_branch(b, r1);
    const cplx kappa = as.dg / as.g;
    const cplx alpha = -(p.dz - kappa * p.z) / (h.dz - kappa * h.z);
    const cplx zr1 = p.z + alpha * h.z;
    const double gamma = std::norm(zr1 / as.g);
    EXPECT_NEAR(B.Gamma, gamma, 1e-4 * gamma) << "b=" << b;
    const cplx z5 = rk4_out(b, alpha, psi, 5.0, 1e-3).z;
    EXPECT_LT(std::abs(B.zeta->value(5.0) - z5), 1e-4 * std::abs(z5));
  }
}

TEST(Radiation, GradientEnergyBound) {
  const ProfileBundle& B = bundle(0.2);
  EXPECT_LE(zeta_grad_norm2(*B.zeta), std::pow(B.Gamma, 1.0 - 0.3));
}

TEST(Radiation, PlateauFromRbSquaredToFar) {
  const ProfileBundle& B = bundle(0.2);
  const double lo = B.params.R() * B.params.R(), hi = 4 * B.params.A();
  double mn = 1e300, mx = 0.0;
  for (int i = 0; i <= 500; ++i) {
    const double r = lo * std::pow(hi / lo, i / 500.0);
    const double v = r * r * std::norm(B.zeta->value(r));
    mn = std::min(mn, v), mx = std::max(mx, v);
  }
  EXPECT_LT((mx - mn) / mx, 0.2);
  const Plateau p = gamma_b(*B.zeta, hi);
  EXPECT_NEAR(p.value, B.Gamma, 1e-3 * B.Gamma);
}

TEST(Radiation, GammaSyntheticPlateaus) {
  RadialProfile z(5001, 0.1);
  for (std::size_t j = 0; j < z.n(); ++j) z[j] = j ? std::sqrt(0.37 / z.rho(j)) * std::exp(cplx(0, 0.3 * z.rho(j))) : cplx(0);
  EXPECT_NEAR(gamma_b(z, 1.0).value, 0.37, 1e-10);
  RadialProfile w(5001, 0.1);
  for (std::size_t j = 0; j < w.n(); ++j) w[j] = j ? cplx(0.37 / w.rho(j)) : cplx(0);
  EXPECT_NEAR(gamma_b(w).value, 0.37 * 0.37, 1e-10);
  try {
    gamma_b(z, 2.0);
    ADD_FAILURE() << "expected Unsupported";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Unsupported);
  }
}

TEST(Radiation, GammaSlopeAgainstInverseB) {
  std::vector<double> x, y;
  for (double b : {0.35, 0.25, 0.2, 0.15}) x.push_back(1 / b), y.push_back(std::log(bundle(b).Gamma));
  const double s = fit_slope(x, y);
  EXPECT_GE(s, -1.3 * kPi);
  EXPECT_LE(s, -0.7 * kPi);
}

TEST(Radiation, OuterExtentAndResolution) {
  const ProfileBundle& B = bundle(0.2);
  BundleOptions wide;
  wide.zeta_mult = 2.0;
  EXPECT_LT(std::abs(build_bundle(at(0.2), gs().Q, Qmass(), wide).Gamma / B.Gamma - 1), 0.05);
  BundleOptions fine;
  fine.h = 0.005;
  EXPECT_LT(std::abs(build_bundle(at(0.2), gs().Q, Qmass(), fine).Gamma / B.Gamma - 1), 0.02);
}

TEST(RadiationTrunc, FSupportBoundAndIdentity) {
  for (double b : {0.2, 0.15}) {
    const ProfileBundle& B = bundle(b);
    const auto& zt = B.zeta_trunc;
    const double A = zt.A;
    for (double r = 0.0; r < A; r += A / 300) ASSERT_EQ(zt.F(r), cplx(0.0));
    EXPECT_EQ(zt.value(2 * A), cplx(0.0));
    const ProfileReport rep = profile_report(B, gs().Q);
    EXPECT_LE(rep.F_scaled, 10.0) << "b=" << b;
    // Identity residual with centred differences of zeta_tilde itself; Psi vanishes out here.
    double sup = 0.0, fsup = 0.0;
    for (int i = 1; i < 400; ++i) {
      const double r = 0.5 * A + i * 2.5 * A / 400, d = 1e-3 * r;
      const cplx zm = zt.value(r - d), z0 = zt.value(r), zp = zt.value(r + d);
      const cplx d1 = (zp - zm) / (2 * d), d2 = (zp - 2.0 * z0 + zm) / (d * d);
      const cplx res = d2 + d1 / r - z0 + cplx(0, b) * (z0 + r * d1) - zt.F(r);
      sup = std::max(sup, std::abs(res));
      fsup = std::max(fsup, std::abs(zt.F(r)));
    }
    EXPECT_LT(sup, 1e-6);
    EXPECT_LT(sup, 1e-4 * fsup);
  }
}

TEST(Report, EnergyByPohozaevMatchesDirectQuadrature) {
  for (double b : {0.35, 0.25, 0.2}) {
    const QbProfile q = solve_Qb(at(b), gs().Q);
    EXPECT_NEAR(energy_Qt(q), energy_Qt_direct(q), 1e-8 * std::max(1.0, std::abs(energy_Qt(q)))) << b;
  }
}

TEST(Report, EnergyBoundMomentumAndMassExcess) {
  const ProfileReport r = profile_report(bundle(0.2), gs().Q);
  EXPECT_LT(std::abs(r.energy), std::exp(-0.5 * kPi / 0.2));
  EXPECT_LT(r.momentum, 1e-8);
  EXPECT_GT(r.mass_excess, 0.0);
  EXPECT_TRUE(r.A_in_window);
  EXPECT_GT(r.dbQ_sup, 0.0);
}

TEST(Report, D0PositiveAndStable) {
  std::vector<double> d;
  for (double h : {0.01, 0.005}) {
    d.push_back(estimate_d0(0.1, 0.15, gs().Q, Qmass(), {}, h));
    d.push_back(estimate_d0(0.08, 0.12, gs().Q, Qmass(), {}, h));
  }
  for (double v : d) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(std::abs(v / d[0] - 1), 0.10);
  }
  EXPECT_LT(std::abs(d[2] / d[0] - 1), 0.02);
}

TEST(Ladder, DistanceToQShrinksWithB) {
  double prev = 1e9;
  for (double b : {0.35, 0.25, 0.2, 0.15, 0.1, 0.05}) {
    const QbProfile q = solve_Qb(at(b), gs().Q);
    double s = 0.0;
    for (double x = 0.0; x <= 24.0; x += 0.01) s = std::max(s, std::abs(q.Qt(x) - gs().Q.at(x)));
    EXPECT_LT(s, prev) << "b=" << b;
    prev = s;
  }
}

TEST(Ladder, CubicInterpolationInB) {
  const QbLadder L(gs().Q, 0.1, 0.2);
  const double b = 0.1437;
  const QbProfile q = solve_Qb(at(b), gs().Q);
  const QbProfile qm = solve_Qb(at(b - 1e-4), gs().Q), qp = solve_Qb(at(b + 1e-4), gs().Q);
  double e0 = 0.0, e1 = 0.0;
  for (double x = 0.0; x < 15.0; x += 0.05) {
    e0 = std::max(e0, std::abs(L.Qt(b, x) - q.Qt(x)));
    e1 = std::max(e1, std::abs(L.dQt_db(b, x) - (qp.Qt(x) - qm.Qt(x)) / 2e-4));
  }
  EXPECT_LT(e0, 1e-7);
  EXPECT_LT(e1, 1e-4);
  EXPECT_THROW(L.Qt(0.3, 1.0), Error);
}

TEST(Serialization, ProfileRoundTrip) {
  const Truncation t = truncate_Qb(solve_Qb(at(0.2), gs().Q));
  const std::string path = ::testing::TempDir() + "/qt.rblp";
  write_profile(path, t.Qt);
  const RadialProfile r = read_profile(path);
  ASSERT_EQ(r.n(), t.Qt.n());
  EXPECT_EQ(r.drho, t.Qt.drho);
  for (std::size_t j = 0; j < r.n(); ++j) ASSERT_EQ(r[j], t.Qt[j]);
}
