#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <vector>

#include "rblw/field_ops.hpp"
#include "rblw/profiles.hpp"

namespace rblw {

struct ModState {
  double lambda = 1.0, b = 0.2, r = 1.0, z = 0.0, gamma = 0.0;
  double s = 0.0;
  double gamma_tilde() const { return -s - gamma; }
};

// u(r, z) from grid samples: tensor 8-point Lagrange, even reflection across the axis,
// periodic in z, zero past r_max.
class GridSampler {
 public:
  explicit GridSampler(const ComplexField& u) : u_(&u) {}
  cplx operator()(double r, double z) const {
    const Grid& g = u_->grid;
    r = std::abs(r);
    const double x = r / g.dr - 0.5;
    double zz = std::fmod(z + g.z_half, 2.0 * g.z_half);
    if (zz < 0) zz += 2.0 * g.z_half;
    const double y = zz / g.dz;
    const long j0 = long(std::floor(x)) - 3, k0 = long(std::floor(y)) - 3;
    double wr[8], wz[8];
    weights(x - double(j0), wr);
    weights(y - double(k0), wz);
    cplx s = 0.0;
    const long nr = long(g.nr), nz = long(g.nz);
    for (int a = 0; a < 8; ++a) {
      long j = j0 + a;
      if (j < 0) j = -1 - j;
      if (j >= nr) continue;
      cplx row = 0.0;
      const cplx* p = u_->v.data() + std::size_t(j) * g.nz;
      for (int c = 0; c < 8; ++c) {
        long k = (k0 + c) % nz;
        if (k < 0) k += nz;
        row += wz[c] * p[k];
      }
      s += wr[a] * row;
    }
    return s;
  }

 private:
  // Lagrange weights on nodes 0..7 at t.
  static void weights(double t, double* w) {
    for (int i = 0; i < 8; ++i) {
      double v = 1.0;
      for (int m = 0; m < 8; ++m)
        if (m != i) v *= (t - m) / double(i - m);
      w[i] = v;
    }
  }
  const ComplexField* u_;
};

using FieldFn = std::function<cplx(double r, double z)>;

struct DecomposeOptions {
  double tol = 1e-11;
  int max_iters = 40;
  int n_theta = 32;
  double panel = 0.25;  // target GL panel width in rho
  double fd_rel = 1e-6;
  bool with_eps_field = true;
};

struct Decomposition {
  ModState state;
  std::array<double, 5> residuals{};
  std::array<double, 5> residuals_Q{};  // same five pairings with Q in place of Qt
  int newton_iters = 0;
  double jacobian_cond = 0.0;
  bool converged = false;
  std::optional<ComplexField> eps_x;  // u minus the rescaled profile, in x-coordinates
};

namespace detail {

struct PolarRule {
  std::vector<double> rho, w;  // radial nodes and weights (w includes rho)
  std::vector<double> c, s;    // cos, sin of theta nodes
  double wtheta = 0.0;
};

// GL8 panels on [0, Rm] and [Rm, R], trapezoid in theta.
inline PolarRule polar_rule(double Rm, double R, int n_theta, double panel) {
  PolarRule q;
  auto add = [&](double lo, double hi) {
    const int np = std::max(1, int(std::ceil((hi - lo) / panel)));
    const double h = (hi - lo) / np;
    for (int p = 0; p < np; ++p)
      for (const auto& [gx, gw] : gl8()) {
        const double x = lo + h * (p + 0.5 * (1.0 + gx));
        q.rho.push_back(x);
        q.w.push_back(0.5 * h * gw * x);
      }
  };
  add(0.0, Rm);
  add(Rm, R);
  for (int t = 0; t < n_theta; ++t) {
    const double th = 2 * kPi * (t + 0.5) / n_theta;
    q.c.push_back(std::cos(th)), q.s.push_back(std::sin(th));
  }
  q.wtheta = 2 * kPi / n_theta;
  return q;
}

}  // namespace detail

class Decomposer {
 public:
  Decomposer(const QbLadder& ladder, const RadialProfile& Q, DecomposeOptions o = {}) : L_(&ladder), Q_(&Q), o_(o) {}

  const DecomposeOptions& options() const { return o_; }

  // The five conditions at (lambda, b, r, z, gamma) for the field u.
  std::array<double, 5> conditions(const FieldFn& u, const std::array<double, 5>& p, std::array<double, 5>* withQ = nullptr) const {
    const double lam = p[0], b = p[1], r0 = p[2], z0 = p[3], gam = p[4];
    ProfileParams pp = L_->params();
    pp.b = b;
    const auto q = detail::polar_rule(pp.Rm(), pp.R(), o_.n_theta, o_.panel);
    const cplx ph = lam * std::exp(cplx(0.0, gam));
    std::array<double, 5> F{}, G{};
    for (std::size_t i = 0; i < q.rho.size(); ++i) {
      const double rho = q.rho[i];
      const cplx Qt = L_->Qt(b, rho), L1 = L_->LambdaQt(b, rho), L2 = L_->Lambda2Qt(b, rho);
      double Qv = 0.0, LQ = 0.0, L2Q = 0.0;
      if (withQ) {
        const double hq = 1e-3, q0 = Q_->at(rho).real(), qp = Q_->at(rho + hq).real(), qm = Q_->at(rho - hq).real();
        const double d1 = (qp - qm) / (2 * hq), d2 = (qp - 2 * q0 + qm) / (hq * hq);
        Qv = q0, LQ = q0 + rho * d1, L2Q = q0 + 3 * rho * d1 + rho * rho * d2;
      }
      const double w = q.w[i] * q.wtheta;
      for (std::size_t t = 0; t < q.c.size(); ++t) {
        const double y1 = rho * q.c[t], y2 = rho * q.s[t];
        const cplx e = ph * u(r0 + lam * y1, z0 + lam * y2) - Qt;
        // <e, g> = int e conj(g)
        F[0] += w * std::real(e * std::conj(rho * rho * Qt));
        F[1] += w * std::real(e * std::conj(y1 * Qt));
        F[2] += w * std::real(e * std::conj(y2 * Qt));
        F[3] += w * std::imag(e * std::conj(L2));
        F[4] += w * std::imag(e * std::conj(L1));
        if (withQ) {
          G[0] += w * std::real(e) * rho * rho * Qv;
          G[1] += w * std::real(e) * y1 * Qv;
          G[2] += w * std::real(e) * y2 * Qv;
          G[3] += w * std::imag(e) * L2Q;
          G[4] += w * std::imag(e) * LQ;
        }
      }
    }
    if (withQ) *withQ = G;
    return F;
  }

  Decomposition decompose(const FieldFn& u, const ModState& guess) const {
    Decomposition d;
    std::array<double, 5> p{guess.lambda, guess.b, guess.r, guess.z, guess.gamma};
    auto valid = [&](const std::array<double, 5>& x) {
      return x[0] > 0 && x[2] > 0 && x[1] >= L_->b_min() && x[1] <= L_->b_max();
    };
    if (!valid(p)) throw Error(ErrorKind::DecompositionFailure, "initial guess outside the ladder or with lambda, r <= 0");
    auto norm = [](const std::array<double, 5>& F) {
      double m = 0.0;
      for (double v : F) m = std::max(m, std::abs(v));
      return m;
    };
    std::array<double, 5> F = conditions(u, p);
    double fn = norm(F);
    Eigen::Matrix<double, 5, 5> J;
    int it = 0;
    // Chord iterations; the Jacobian is refreshed when the residual stops dropping by 4x.
    bool fresh = false, just_refreshed = false;
    for (; it < o_.max_iters && !(fn < o_.tol); ++it) {
      if (!fresh) jacobian(u, p, J), fresh = true;
      const double fn_prev = fn;
      Eigen::Matrix<double, 5, 1> rhs;
      for (int k = 0; k < 5; ++k) rhs(k) = F[std::size_t(k)];
      const Eigen::Matrix<double, 5, 1> dx = J.fullPivLu().solve(rhs);
      double step = 1.0;
      bool accepted = false;
      for (int h = 0; h <= 8; ++h, step *= 0.5) {
        std::array<double, 5> pt;
        for (int k = 0; k < 5; ++k) pt[std::size_t(k)] = p[std::size_t(k)] - step * dx(k);
        if (!valid(pt)) continue;
        const auto Ft = conditions(u, pt);
        const double ft = norm(Ft);
        if (ft < fn || ft < o_.tol) {
          p = pt, F = Ft, fn = ft, accepted = true;
          break;
        }
      }
      if (!accepted) {
        if (fresh && it > 0 && !just_refreshed) {
          fresh = false, just_refreshed = true;
          continue;
        }
        break;
      }
      just_refreshed = false;
      if (fn > 0.25 * fn_prev) fresh = false;
    }
    d.newton_iters = it;
    d.residuals = F;
    d.converged = fn < o_.tol;
    d.state.lambda = p[0], d.state.b = p[1], d.state.r = p[2], d.state.z = p[3], d.state.gamma = p[4];
    d.state.s = guess.s;
    if (!d.converged) {
      std::ostringstream os;
      os << "decomposition Newton stalled after " << it << " iterations, residual " << fn;
      throw Error(ErrorKind::DecompositionFailure, os.str());
    }
    jacobian(u, p, J);
    const auto sv = J.jacobiSvd().singularValues();
    d.jacobian_cond = sv(0) / sv(4);
    conditions(u, p, &d.residuals_Q);
    return d;
  }

  // Grid overload: samples u with 8-point Lagrange and returns eps on the grid.
  Decomposition decompose(const ComplexField& u, const ModState& guess) const {
    GridSampler gs(u);
    Decomposition d = decompose(FieldFn([&](double r, double z) { return gs(r, z); }), guess);
    if (o_.with_eps_field) {
      ComplexField e = rasterize(u.grid, d.state);
      for (std::size_t i = 0; i < e.size(); ++i) e.v[i] = u.v[i] - e.v[i];
      d.eps_x = std::move(e);
    }
    return d;
  }

  // (1/lambda) Qt_b((x - (r,z))/lambda) e^{-i gamma} on the grid.
  ComplexField rasterize(const Grid& g, const ModState& s) const {
    ComplexField out(g);
    ProfileParams pp = L_->params();
    pp.b = s.b;
    const double R = pp.R();
    const cplx ph = std::exp(cplx(0.0, -s.gamma)) / s.lambda;
    for (std::size_t j = 0; j < g.nr; ++j) {
      const double dr = g.r(j) - s.r;
      if (std::abs(dr) >= R * s.lambda) continue;
      for (std::size_t k = 0; k < g.nz; ++k) {
        double dz = g.z(k) - s.z;
        dz -= 2.0 * g.z_half * std::round(dz / (2.0 * g.z_half));
        const double rho = std::hypot(dr, dz) / s.lambda;
        if (rho < R) out(j, k) = ph * L_->Qt(s.b, rho);
      }
    }
    return out;
  }

  const QbLadder& ladder() const { return *L_; }

 private:
  void jacobian(const FieldFn& u, const std::array<double, 5>& p, Eigen::Matrix<double, 5, 5>& J) const {
    const double h[5] = {o_.fd_rel * p[0], o_.fd_rel * p[1], o_.fd_rel * p[0], o_.fd_rel * p[0], o_.fd_rel};
    for (int k = 0; k < 5; ++k) {
      auto a = p, c = p;
      a[std::size_t(k)] += h[k], c[std::size_t(k)] -= h[k];
      const auto Fa = conditions(u, a), Fc = conditions(u, c);
      for (int m = 0; m < 5; ++m) J(m, k) = (Fa[std::size_t(m)] - Fc[std::size_t(m)]) / (2 * h[k]);
    }
  }

  const QbLadder* L_;
  const RadialProfile* Q_;
  DecomposeOptions o_;
};

// int |grad_y eps|^2 mu dy + int_{|y| <= 10/b} |eps|^2 e^{-|y|} dy. With eps(y) = lambda v(lambda y + x0) e^{i gamma}
// and mu = 2 pi r, the first term is lambda^2 int_{R^3} |grad v|^2 and the second int |v|^2 e^{-|y|} dr dz.
inline double eps_norm(const Decomposition& d) {
  if (!d.eps_x) throw Error(ErrorKind::Unsupported, "eps_norm needs the grid eps field");
  const ComplexField& v = *d.eps_x;
  const Grid& g = v.grid;
  const auto& s = d.state;
  const double grad = s.lambda * s.lambda * grad_norm2_w(to_w(v));
  double loc = 0.0;
  for (std::size_t j = 0; j < g.nr; ++j)
    for (std::size_t k = 0; k < g.nz; ++k) {
      double dz = g.z(k) - s.z;
      dz -= 2.0 * g.z_half * std::round(dz / (2.0 * g.z_half));
      const double rho = std::hypot(g.r(j) - s.r, dz) / s.lambda;
      if (rho <= 10.0 / s.b) loc += std::norm(v(j, k)) * std::exp(-rho);
    }
  return grad + loc * g.cell();
}

struct DynamicsRow {
  double t = 0.0, s = 0.0;
  double lam_s_over_lam = 0.0, b_s = 0.0, r_s_over_lam = 0.0, z_s_over_lam = 0.0, gamma_tilde_s = 0.0;
  double law_residual = 0.0;  // |lambda_s/lambda + b|
  double envelope = 0.0;      // Gamma_b^{1/2}
  bool within = false;
};

struct DynamicsReport {
  std::vector<DynamicsRow> rows;
  std::vector<double> s;  // accumulated rescaled time per sample
  double mean_rel_law = 0.0;      // time average of |lambda_s/lambda + b| / b
  double max_speed = 0.0;         // max |(r_s, z_s)| / lambda
  double frac_within = 0.0;
};

// Finite differences in s = int dt / lambda^2 (trapezoid), three-point nonuniform stencils.
inline DynamicsReport param_dynamics(const std::vector<std::pair<double, ModState>>& samples,
                                     const std::function<double(double)>& gamma_of_b = {}) {
  const std::size_t n = samples.size();
  if (n < 3) throw Error(ErrorKind::Unsupported, "param_dynamics needs at least three samples");
  for (std::size_t i = 1; i < n; ++i)
    if (!(samples[i].first > samples[i - 1].first)) throw Error(ErrorKind::Unsupported, "sample times must increase");
  DynamicsReport rep;
  rep.s.assign(n, 0.0);
  rep.s[0] = samples[0].second.s;
  for (std::size_t i = 1; i < n; ++i) {
    const double l0 = samples[i - 1].second.lambda, l1 = samples[i].second.lambda;
    rep.s[i] = rep.s[i - 1] + 0.5 * (samples[i].first - samples[i - 1].first) * (1 / (l0 * l0) + 1 / (l1 * l1));
  }
  auto deriv = [&](std::size_t i, auto get) {
    std::size_t a = i == 0 ? 0 : (i == n - 1 ? n - 3 : i - 1);
    const double s0 = rep.s[a], s1 = rep.s[a + 1], s2 = rep.s[a + 2], x = rep.s[i];
    const double f0 = get(samples[a].second), f1 = get(samples[a + 1].second), f2 = get(samples[a + 2].second);
    return f0 * (2 * x - s1 - s2) / ((s0 - s1) * (s0 - s2)) + f1 * (2 * x - s0 - s2) / ((s1 - s0) * (s1 - s2)) +
           f2 * (2 * x - s0 - s1) / ((s2 - s0) * (s2 - s1));
  };
  double sum = 0.0, span = 0.0;
  int within = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const ModState& m = samples[i].second;
    DynamicsRow r;
    r.t = samples[i].first, r.s = rep.s[i];
    r.lam_s_over_lam = deriv(i, [](const ModState& q) { return std::log(q.lambda); });
    r.b_s = deriv(i, [](const ModState& q) { return q.b; });
    r.r_s_over_lam = deriv(i, [](const ModState& q) { return q.r; }) / m.lambda;
    r.z_s_over_lam = deriv(i, [](const ModState& q) { return q.z; }) / m.lambda;
    r.gamma_tilde_s = -1.0 - deriv(i, [](const ModState& q) { return q.gamma; });
    r.law_residual = std::abs(r.lam_s_over_lam + m.b);
    r.envelope = gamma_of_b ? std::sqrt(gamma_of_b(m.b)) : 0.0;
    r.within = gamma_of_b && r.law_residual + std::abs(r.b_s) < r.envelope;
    within += r.within;
    rep.max_speed = std::max(rep.max_speed, std::hypot(r.r_s_over_lam, r.z_s_over_lam));
    // Trapezoid weights in s for the time average.
    const double ds = 0.5 * ((i + 1 < n ? rep.s[i + 1] : rep.s[i]) - (i > 0 ? rep.s[i - 1] : rep.s[i]));
    sum += ds * r.law_residual / m.b, span += ds;
    rep.rows.push_back(r);
  }
  rep.mean_rel_law = span > 0 ? sum / span : 0.0;
  rep.frac_within = double(within) / double(n);
  return rep;
}

}  // namespace rblw
