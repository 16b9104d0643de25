#pragma once

#include <Eigen/SparseLU>

#include <array>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "rblw/radial.hpp"

namespace rblw {

enum class ShotOutcome { Crossed, TurnedUp, Reached };

struct ShotResult {
  ShotOutcome outcome;
  double rho_stop;
  std::vector<double> rho, q, dq;
};

// Integrate Q'' + Q'/rho - Q + Q^3 = 0 from the axis with Q(0) = a (adaptive
// Dormand-Prince 5(4)). Stops when Q crosses zero, Q' turns positive, or rho_end.
inline ShotResult shoot_Q(double a, double rho_end, bool keep = false, double rtol = 1e-12) {
  const double c2 = (a - a * a * a) / 4.0;
  double r = 1e-4, q = a + c2 * r * r, p = 2.0 * c2 * r;
  auto rhs = [](double rr, double qq, double pp) { return std::array<double, 2>{pp, -pp / rr + qq - qq * qq * qq}; };
  ShotResult out{ShotOutcome::Reached, rho_end, {}, {}, {}};
  if (keep) out.rho.push_back(r), out.q.push_back(q), out.dq.push_back(p);
  static const double A[7][6] = {{0, 0, 0, 0, 0, 0},
                                 {1.0 / 5, 0, 0, 0, 0, 0},
                                 {3.0 / 40, 9.0 / 40, 0, 0, 0, 0},
                                 {44.0 / 45, -56.0 / 15, 32.0 / 9, 0, 0, 0},
                                 {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729, 0, 0},
                                 {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656, 0},
                                 {35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84}};
  static const double C[7] = {0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1, 1};
  static const double B5[7] = {35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84, 0};
  static const double B4[7] = {5179.0 / 57600, 0, 7571.0 / 16695, 393.0 / 640, -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};
  double h = 1e-3;
  while (r < rho_end) {
    h = std::min(h, rho_end - r);
    std::array<double, 2> k[7];
    for (int s = 0; s < 7; ++s) {
      double qq = q, pp = p;
      for (int m = 0; m < s; ++m) qq += h * A[s][m] * k[m][0], pp += h * A[s][m] * k[m][1];
      k[s] = rhs(r + C[s] * h, qq, pp);
    }
    double q5 = q, p5 = p, q4 = q, p4 = p;
    for (int s = 0; s < 7; ++s) {
      q5 += h * B5[s] * k[s][0], p5 += h * B5[s] * k[s][1];
      q4 += h * B4[s] * k[s][0], p4 += h * B4[s] * k[s][1];
    }
    const double sc = rtol * (1.0 + std::max(std::abs(q), std::abs(p)));
    const double err = std::max(std::abs(q5 - q4), std::abs(p5 - p4)) / sc;
    if (err <= 1.0) {
      r += h, q = q5, p = p5;
      if (keep) out.rho.push_back(r), out.q.push_back(q), out.dq.push_back(p);
      if (q < 0.0) {
        out.outcome = ShotOutcome::Crossed, out.rho_stop = r;
        return out;
      }
      if (p > 0.0) {
        out.outcome = ShotOutcome::TurnedUp, out.rho_stop = r;
        return out;
      }
    }
    h *= std::clamp(0.9 * std::pow(std::max(err, 1e-10), -0.2), 0.2, 5.0);
  }
  return out;
}

struct GroundState {
  RadialProfile Q;
  double a_shoot = 0.0;      // Q(0) from the shooting bracket
  double residual = 0.0;     // sup-norm of the discrete ODE residual
  int newton_iters = 0;
  std::vector<std::string> trace;
};

// Bisection on Q(0) using the crossing / turning dichotomy.
inline double shoot_Q0(std::vector<std::string>* trace = nullptr, double lo = 2.0, double hi = 2.5) {
  if (shoot_Q(lo, 30.0).outcome != ShotOutcome::TurnedUp || shoot_Q(hi, 30.0).outcome != ShotOutcome::Crossed)
    throw Error(ErrorKind::ConvergenceFailure, "shooting bracket for Q(0) does not straddle the ground state");
  for (int it = 0; it < 80 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    const auto res = shoot_Q(mid, 30.0);
    if (res.outcome == ShotOutcome::Crossed) hi = mid;
    else lo = mid;
    if (trace) {
      std::ostringstream os;
      os.precision(17);
      os << "bisect " << it << " a=" << mid << (res.outcome == ShotOutcome::Crossed ? " crossed" : " turned-up") << " at rho=" << res.rho_stop;
      trace->push_back(os.str());
    }
  }
  return 0.5 * (lo + hi);
}

// Positive radial solution of Q'' + Q'/rho - Q + Q^3 = 0 on [0, rho_max].
inline GroundState solve_Q(double tol = 1e-10, double h = 0.01, double rho_max = 24.0) {
  if (!(tol <= 1e-8)) throw Error(ErrorKind::Validation, "solve_Q requires tol <= 1e-8");
  if (rho_max < 15.0) throw Error(ErrorKind::Validation, "solve_Q requires rho_max >= 15");
  GroundState gs;
  gs.a_shoot = shoot_Q0(&gs.trace);
  // Seed: the shot profile up to where it is trustworthy, then an exponential tail.
  const auto shot = shoot_Q(gs.a_shoot, 10.0, true);
  const std::size_t n = std::size_t(std::llround(rho_max / h)) + 1;
  Eigen::VectorXd Q(n);
  const double rc = shot.rho.back(), qc = shot.q.back();
  std::size_t s = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const double r = double(j) * h;
    if (r <= shot.rho.front()) {
      Q[j] = gs.a_shoot;
    } else if (r < rc) {
      while (shot.rho[s + 1] < r) ++s;
      const double t = (r - shot.rho[s]) / (shot.rho[s + 1] - shot.rho[s]);
      Q[j] = (1 - t) * shot.q[s] + t * shot.q[s + 1];
    } else {
      Q[j] = qc * std::sqrt(rc / r) * std::exp(-(r - rc));
    }
  }
  Q[n - 1] = 0.0;
  RadialOps ops(n, h);
  const Eigen::SparseMatrix<double> L = ops.laplacian();
  auto residual = [&](const Eigen::VectorXd& q) {
    Eigen::VectorXd F = L * q - q + q.cwiseProduct(q).cwiseProduct(q);
    F[n - 1] = q[n - 1];
    return F;
  };
  for (int it = 0; it < 50; ++it) {
    Eigen::VectorXd F = residual(Q);
    std::vector<Eigen::Triplet<double>> t;
    for (int k = 0; k < L.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator e(L, k); e; ++e)
        if (std::size_t(e.row()) != n - 1) t.emplace_back(e.row(), e.col(), e.value());
    for (std::size_t j = 0; j + 1 < n; ++j) t.emplace_back(j, j, -1.0 + 3.0 * Q[j] * Q[j]);
    t.emplace_back(n - 1, n - 1, 1.0);
    Eigen::SparseMatrix<double> J(n, n);
    J.setFromTriplets(t.begin(), t.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(J);
    if (lu.info() != Eigen::Success) throw Error(ErrorKind::ConvergenceFailure, "ground-state Newton Jacobian is singular");
    Eigen::VectorXd dQ = lu.solve(F);
    Q -= dQ;
    gs.newton_iters = it + 1;
    std::ostringstream os;
    os << "newton " << it << " |dQ|=" << dQ.cwiseAbs().maxCoeff();
    gs.trace.push_back(os.str());
    if (dQ.cwiseAbs().maxCoeff() < 1e-14) break;
  }
  gs.residual = residual(Q).cwiseAbs().maxCoeff();
  if (!(gs.residual < tol)) {
    std::ostringstream os;
    os << "ground-state residual " << gs.residual << " above tol " << tol;
    throw Error(ErrorKind::ConvergenceFailure, os.str());
  }
  gs.Q = RadialProfile(n, h);
  for (std::size_t j = 0; j < n; ++j) gs.Q[j] = Q[j];
  return gs;
}

// Least-squares slope of log|f| over rho in [lo, hi].
inline double decay_check(const RadialProfile& f, double lo = 8.0, double hi = 12.0) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (std::size_t j = 0; j < f.n(); ++j) {
    const double r = f.rho(j);
    if (r < lo - 1e-12 || r > hi + 1e-12) continue;
    const double a = std::abs(f[j]);
    if (!(a > 0.0)) throw Error(ErrorKind::Unsupported, "decay fit needs nonzero samples");
    const double y = std::log(a);
    sx += r, sy += y, sxx += r * r, sxy += r * y, ++m;
  }
  const double den = m * sxx - sx * sx;
  if (m < 3 || std::abs(den) < 1e-14) throw Error(ErrorKind::Unsupported, "degenerate decay fit window");
  return (m * sxy - sx * sy) / den;
}

// Lambda f = f + rho f'.
inline RadialProfile lambda_op(const RadialProfile& f) {
  RadialOps ops(f.n(), f.drho);
  RadialProfile d = derivative(f, ops);
  RadialProfile out(f.n(), f.drho);
  for (std::size_t j = 0; j < f.n(); ++j) out[j] = f[j] + f.rho(j) * d[j];
  return out;
}

// Flat 2D functionals of radial profiles.
inline double radial_grad_norm2(const RadialProfile& f) {
  RadialOps ops(f.n(), f.drho);
  RadialProfile d = derivative(f, ops);
  return radial_norm2(d);
}

inline double radial_quartic(const RadialProfile& f) {
  auto w = radial_weights(f.n(), f.drho);
  double s = 0.0;
  for (std::size_t j = 0; j < f.n(); ++j) s += w[j] * std::norm(f[j]) * std::norm(f[j]);
  return s;
}

inline double radial_energy(const RadialProfile& f) { return radial_grad_norm2(f) - 0.5 * radial_quartic(f); }

}  // namespace rblw
