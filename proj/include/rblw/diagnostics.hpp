#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "rblw/cutoff.hpp"
#include "rblw/ground_state.hpp"
#include "rblw/init_data.hpp"
#include "rblw/modulation.hpp"

namespace rblw {

struct DiagConfig {
  double alpha_star = 0.3;
  double m = 1.0;
  double delta2 = 0.01;
};

// ---------------------------------------------------------------- shared pieces

namespace detail {

// Minimal image of z - z0 in the periodic box.
inline double wrap_dz(const Grid& g, double dz) { return dz - 2.0 * g.z_half * std::round(dz / (2.0 * g.z_half)); }

// <eps, h>_y = int eps conj(h) dy with eps(y) = lambda e^{i gamma} v(x0 + lambda y) and h radial in y.
template <class H>
cplx eps_inner_radial(const ComplexField& v, const ModState& s, H&& h, double rho_cap) {
  const Grid& g = v.grid;
  cplx acc = 0.0;
  for (std::size_t j = 0; j < g.nr; ++j) {
    const double dr = g.r(j) - s.r;
    if (std::abs(dr) > rho_cap * s.lambda) continue;
    for (std::size_t k = 0; k < g.nz; ++k) {
      const double rho = std::hypot(dr, wrap_dz(g, g.z(k) - s.z)) / s.lambda;
      if (rho >= rho_cap) continue;
      acc += v(j, k) * std::conj(h(rho));
    }
  }
  return acc * std::exp(cplx(0.0, s.gamma)) * g.cell() / s.lambda;
}

}  // namespace detail

// phi_infinity: 0 below 1/2, 1 above 3, nondecreasing, slope 3/8 on [1,2]. C^1.
inline double phi_inf(double x) {
  if (x <= 0.5) return 0.0;
  if (x <= 1.0) return 0.375 * (x - 0.5) * (x - 0.5);
  if (x <= 2.0) return 3.0 / 32.0 + 0.375 * (x - 1.0);
  if (x >= 3.0) return 1.0;
  const double t = x - 2.0;
  return 15.0 / 32.0 + 0.375 * t + 27.0 / 32.0 * t * t - 22.0 / 32.0 * t * t * t;
}
inline double phi_inf_d1(double x) {
  if (x <= 0.5 || x >= 3.0) return 0.0;
  if (x <= 1.0) return 0.75 * (x - 0.5);
  if (x <= 2.0) return 0.375;
  const double t = x - 2.0;
  return 0.375 + 54.0 / 32.0 * t - 66.0 / 32.0 * t * t;
}

// ---------------------------------------------------------------- f1 tilde table and the Lyapounov functional

// f1~(b) = (b/4)|y Qt_b|^2 + (1/2) Im int y.grad zeta~ conj zeta~ on a b-grid starting at b_lo, with f1~(0) = 0.
class F1Table {
 public:
  F1Table() = default;
  F1Table(const RadialProfile& Q, double Q_mass, double b_lo, double b_hi, double db = 0.01, ProfileParams base = {}) {
    if (!(b_lo > 0 && b_hi >= b_lo)) throw Error(ErrorKind::Validation, "F1Table needs 0 < b_lo <= b_hi");
    const int n = int(std::ceil((b_hi - b_lo) / db - 1e-9)) + 1;
    for (int i = 0; i < n; ++i) {
      ProfileParams p = base;
      p.b = std::min(b_lo + i * db, b_hi);
      auto B = std::make_shared<ProfileBundle>(build_bundle(p, Q, Q_mass));
      b_.push_back(p.b);
      f1_.push_back(B->f1_tilde);
      zv_.push_back(B->f1_tilde - p.b / 4.0 * B->ymoment2);
      bundles_.push_back(B);
    }
  }
  double b_lo() const { return b_.empty() ? 0.0 : b_.front(); }
  double b_hi() const { return b_.empty() ? 0.0 : b_.back(); }
  std::size_t size() const { return b_.size(); }
  const ProfileBundle& bundle(std::size_t i) const { return *bundles_[i]; }
  double node_b(std::size_t i) const { return b_[i]; }
  double node_f1(std::size_t i) const { return f1_[i]; }

  bool covers(double b) const { return !b_.empty() && b_.front() <= 0.02 + 1e-12 && b <= b_.back() + 1e-12; }

  // The radiation part of f1~, linear in b between nodes.
  double zeta_part(double b) const { return lin(zv_, b); }
  double f1_interp(double b) const { return lin(f1_, b); }

  // int_0^b f1~ by the trapezoid rule over (0, 0) and the nodes, plus the partial cell.
  double integral(double b) const {
    if (b_.empty()) return 0.0;
    double s = 0.0, pb = 0.0, pf = 0.0;
    for (std::size_t i = 0; i < b_.size() && b_[i] <= b; ++i) {
      s += 0.5 * (b_[i] - pb) * (f1_[i] + pf);
      pb = b_[i], pf = f1_[i];
    }
    if (b > pb) s += 0.5 * (b - pb) * (pf + f1_interp(b));
    return s;
  }

  // Radiation of the node closest to b.
  const ProfileBundle& nearest(double b) const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < b_.size(); ++i)
      if (std::abs(b_[i] - b) < std::abs(b_[best] - b)) best = i;
    return *bundles_[best];
  }

 private:
  double lin(const std::vector<double>& v, double b) const {
    if (b <= b_.front()) return v.front() * b / b_.front();
    for (std::size_t i = 1; i < b_.size(); ++i)
      if (b <= b_[i]) {
        const double t = (b - b_[i - 1]) / (b_[i] - b_[i - 1]);
        return (1 - t) * v[i - 1] + t * v[i];
      }
    return v.back();
  }
  std::vector<double> b_, f1_, zv_;
  std::vector<std::shared_ptr<ProfileBundle>> bundles_;
};

inline double ladder_mass(const QbLadder& L, double b) {
  return gl_integrate([&](double r) { return 2 * kPi * r * std::norm(L.Qt(b, r)); }, 0.0, L.R_at(b), std::max(200, int(L.R_at(b) / 0.02)));
}
inline double ladder_ymoment2(const QbLadder& L, double b) {
  return gl_integrate([&](double r) { return 2 * kPi * r * r * r * std::norm(L.Qt(b, r)); }, 0.0, L.R_at(b),
                      std::max(200, int(L.R_at(b) / 0.02)));
}

struct LyapounovTerms {
  double J = 0.0, f1 = 0.0, f2 = 0.0;
  double mass_excess = 0.0;   // int |Qt_b|^2 - int Q^2
  double cross = 0.0;         // 2 Re <eps, Qt_b>
  double inner_mass = 0.0;    // (1/r) int (1 - phi_inf(y/A)) |eps|^2 mu dy, mu normalised to 1 at y = 0
  double f1_tilde = 0.0, f1_integral = 0.0;
  double im_eps_Lzeta = 0.0;  // Im <eps, Lambda zeta~_b>
  double virial_block = 0.0;  // -(delta2/800)(b f1~ - int f1~ + b Im<eps, Lambda zeta~>)
};

// J, f1 and f2 at the decomposition d. Without an eps field, eps = 0.
inline LyapounovTerms lyapounov(const Decomposition& d, const QbLadder& L, const F1Table& T, double Q_mass, const DiagConfig& c = {}) {
  const ModState& s = d.state;
  if (!T.covers(s.b)) {
    std::ostringstream os;
    os << "f1 table spans [" << T.b_lo() << ", " << T.b_hi() << "], needs [0.02, " << s.b << "]";
    throw Error(ErrorKind::Unsupported, os.str());
  }
  LyapounovTerms t;
  const double b = s.b;
  t.mass_excess = ladder_mass(L, b) - Q_mass;
  t.f1_tilde = b / 4.0 * ladder_ymoment2(L, b) + T.zeta_part(b);
  t.f1_integral = T.integral(b);
  if (d.eps_x) {
    const ComplexField& v = *d.eps_x;
    const Grid& g = v.grid;
    const double R = L.R_at(b);
    t.cross = 2.0 * std::real(detail::eps_inner_radial(v, s, [&](double r) { return L.Qt(b, r); }, R));
    const double A = std::exp(L.params().a * kPi / b);
    double in = 0.0;
    for (std::size_t j = 0; j < g.nr; ++j)
      for (std::size_t k = 0; k < g.nz; ++k) {
        const double rho = std::hypot(g.r(j) - s.r, detail::wrap_dz(g, g.z(k) - s.z)) / s.lambda;
        in += (1.0 - phi_inf(rho / A)) * std::norm(v(j, k)) * g.r(j);
      }
    t.inner_mass = in * g.cell() / s.r;
    const ProfileBundle& B = T.nearest(b);
    if (B.zeta) {
      const RadiationTrunc& zt = B.zeta_trunc;
      t.im_eps_Lzeta = std::imag(detail::eps_inner_radial(
          v, s, [&](double r) { return zt.value(r) + r * zt.deriv(r); }, 2.0 * zt.A));
    }
  }
  const double k = c.delta2 / 800.0;
  t.virial_block = -k * (b * t.f1_tilde - t.f1_integral + b * t.im_eps_Lzeta);
  t.J = t.mass_excess + t.cross + t.inner_mass + t.virial_block;
  t.f1 = t.f1_tilde + t.im_eps_Lzeta;
  t.f2 = t.mass_excess - k * (b * t.f1_tilde - t.f1_integral);
  return t;
}

// ---------------------------------------------------------------- quadratic form H on flat y-fields

// Complex field on the square [-L, L)^2 in y, n x n, periodic for spectral derivatives.
struct YField {
  std::size_t n = 0;
  double L = 0.0;
  std::vector<cplx> v;
  YField() = default;
  YField(std::size_t n_, double L_) : n(n_), L(L_), v(n_ * n_, 0.0) {}
  double h() const { return 2.0 * L / double(n); }
  double y(std::size_t i) const { return -L + double(i) * h(); }
  cplx& operator()(std::size_t i, std::size_t j) { return v[i * n + j]; }
  const cplx& operator()(std::size_t i, std::size_t j) const { return v[i * n + j]; }
};

namespace detail {

// Spectral gradient of a YField.
inline std::pair<std::vector<cplx>, std::vector<cplx>> y_gradient(const YField& f) {
  const int n = int(f.n);
  std::vector<cplx> a(f.v), g1(f.v.size()), g2(f.v.size());
  auto* pa = reinterpret_cast<fftw_complex*>(a.data());
  fftw_plan fw = fftw_plan_dft_2d(n, n, pa, pa, FFTW_FORWARD, FFTW_ESTIMATE);
  fftw_execute(fw);
  fftw_destroy_plan(fw);
  const double dk = kPi / f.L;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const int fi = i < n / 2 ? i : i - n, fj = j < n / 2 ? j : j - n;
      const double k1 = i == n / 2 ? 0.0 : dk * fi, k2 = j == n / 2 ? 0.0 : dk * fj;
      const cplx c = a[std::size_t(i) * f.n + std::size_t(j)] / double(n * n);
      g1[std::size_t(i) * f.n + std::size_t(j)] = cplx(0.0, k1) * c;
      g2[std::size_t(i) * f.n + std::size_t(j)] = cplx(0.0, k2) * c;
    }
  for (auto* p : {&g1, &g2}) {
    auto* pp = reinterpret_cast<fftw_complex*>(p->data());
    fftw_plan bw = fftw_plan_dft_2d(n, n, pp, pp, FFTW_BACKWARD, FFTW_ESTIMATE);
    fftw_execute(bw);
    fftw_destroy_plan(bw);
  }
  return {g1, g2};
}

// Q, Q' and Q'' at rho; Q'' from the ground-state equation.
struct QDerivs {
  const RadialProfile* Q;
  RadialProfile dQ;
  explicit QDerivs(const RadialProfile& q) : Q(&q) {
    RadialOps ops(q.n(), q.drho);
    dQ = derivative(q, ops);
  }
  double q(double r) const { return std::real(Q->at(r)); }
  double d1(double r) const { return r > Q->rho_max() ? 0.0 : std::real(dQ.at(r)) * (r > 0 ? 1.0 : 0.0); }
  double d2(double r) const {
    const double f = q(r);
    if (r < 1e-8) return 0.5 * (f - f * f * f);
    return -d1(r) / r + f - f * f * f;
  }
};

}  // namespace detail

struct HForm {
  double value = 0.0;
  double grad2 = 0.0;      // int |grad eps|^2
  double potential = 0.0;  // the two potential terms
  double mass = 0.0;
  double h1_norm2() const { return grad2 + mass; }
};

// H(eps, eps) = int |grad eps_re|^2 + 3 Q (y.grad Q) eps_re^2 + |grad eps_im|^2 + Q (y.grad Q) eps_im^2, flat measure.
inline HForm quadratic_form_H(const YField& e, const RadialProfile& Q) {
  detail::QDerivs D(Q);
  auto [g1, g2] = detail::y_gradient(e);
  const double c = e.h() * e.h();
  HForm h;
  for (std::size_t i = 0; i < e.n; ++i)
    for (std::size_t j = 0; j < e.n; ++j) {
      const std::size_t id = i * e.n + j;
      const double r = std::hypot(e.y(i), e.y(j));
      const double qyq = D.q(r) * r * D.d1(r);
      const double re = e.v[id].real(), im = e.v[id].imag();
      h.grad2 += std::norm(g1[id]) + std::norm(g2[id]);
      h.potential += 3.0 * qyq * re * re + qyq * im * im;
      h.mass += re * re + im * im;
    }
  h.grad2 *= c, h.potential *= c, h.mass *= c;
  h.value = h.grad2 + h.potential;
  return h;
}

// Removes the components along Q, Lambda Q, y1 Q, y2 Q from Re eps and along Lambda Q, Lambda^2 Q, d1 Q, d2 Q
// from Im eps, by Gram-Schmidt in the flat L^2 product of the grid.
inline void project_out_modes(YField& e, const RadialProfile& Q) {
  detail::QDerivs D(Q);
  const std::size_t N = e.v.size();
  std::vector<std::vector<double>> re(4, std::vector<double>(N)), im(4, std::vector<double>(N));
  for (std::size_t i = 0; i < e.n; ++i)
    for (std::size_t j = 0; j < e.n; ++j) {
      const std::size_t id = i * e.n + j;
      const double y1 = e.y(i), y2 = e.y(j), r = std::hypot(y1, y2);
      const double q = D.q(r), d1 = D.d1(r), d2 = D.d2(r);
      const double LQ = q + r * d1, L2Q = q + 3 * r * d1 + r * r * d2;
      const double c1 = r > 0 ? y1 / r : 0.0, c2 = r > 0 ? y2 / r : 0.0;
      re[0][id] = q, re[1][id] = LQ, re[2][id] = y1 * q, re[3][id] = y2 * q;
      im[0][id] = LQ, im[1][id] = L2Q, im[2][id] = c1 * d1, im[3][id] = c2 * d1;
    }
  auto gs = [&](std::vector<std::vector<double>>& B) {
    for (std::size_t a = 0; a < B.size(); ++a) {
      for (std::size_t p = 0; p < a; ++p) {
        const double d = std::inner_product(B[a].begin(), B[a].end(), B[p].begin(), 0.0);
        for (std::size_t i = 0; i < N; ++i) B[a][i] -= d * B[p][i];
      }
      const double nn = std::sqrt(std::inner_product(B[a].begin(), B[a].end(), B[a].begin(), 0.0));
      for (auto& x : B[a]) x /= nn;
    }
  };
  gs(re), gs(im);
  std::vector<double> er(N), ei(N);
  for (std::size_t i = 0; i < N; ++i) er[i] = e.v[i].real(), ei[i] = e.v[i].imag();
  // Two passes for round-off.
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& b : re) {
      const double d = std::inner_product(er.begin(), er.end(), b.begin(), 0.0);
      for (std::size_t i = 0; i < N; ++i) er[i] -= d * b[i];
    }
    for (const auto& b : im) {
      const double d = std::inner_product(ei.begin(), ei.end(), b.begin(), 0.0);
      for (std::size_t i = 0; i < N; ++i) ei[i] -= d * b[i];
    }
  }
  for (std::size_t i = 0; i < N; ++i) e.v[i] = cplx(er[i], ei[i]);
}

// ---------------------------------------------------------------- third order energy

struct E3Result {
  double E3 = 0.0;
  double grad3 = 0.0;  // int |grad Lap u|^2
  double quartic = 0.0;
  double top_octave = 0.0;
};

// E_3(u) = int |grad^3 u|^2 - (2 int |Lap u|^2 |u|^2 + Re int (Lap conj u)^2 u^2), with grad^3 read as grad Lap
// and grad^2 as Lap. Throws Unsupported when the top octave holds more than 1e-3 of the H^3 spectral weight.
inline E3Result third_order_energy(const ComplexField& u, double top_tol = 1e-3) {
  const Grid& g = u.grid;
  Spectral& sp = spectral_for(g);
  ComplexField w = to_w(u);
  auto c = detail::coefficients(w);
  double tot = 0.0, top = 0.0;
  const double krm = sp.kr(g.nr - 1), kzm = kPi / g.dz;
  for (std::size_t k = 0; k < g.nr; ++k)
    for (std::size_t m = 0; m < g.nz; ++m) {
      const double e = sp.parseval_weight(k) * std::pow(1.0 + sp.k2(k, m), 3) * std::norm(c[k * g.nz + m]);
      tot += e;
      if (sp.kr(k) > 0.5 * krm || std::abs(sp.kz(m)) > 0.5 * kzm) top += e;
    }
  E3Result r;
  r.top_octave = tot > 0 ? top / tot : 0.0;
  if (r.top_octave > top_tol) {
    std::ostringstream os;
    os << "third_order_energy: top-octave fraction " << r.top_octave << " > " << top_tol;
    throw Error(ErrorKind::Unsupported, os.str());
  }
  ComplexField lw = apply_L_w(w);
  r.grad3 = grad_norm2_w(lw);
  double q = 0.0;
  for (std::size_t j = 0; j < g.nr; ++j) {
    const double cj = 1.0 / (2.0 * kPi * g.r(j));
    for (std::size_t k = 0; k < g.nz; ++k) {
      const cplx a = lw(j, k), b = w(j, k);
      q += cj * (2.0 * std::norm(a) * std::norm(b) + std::real(std::conj(a) * std::conj(a) * b * b));
    }
  }
  r.quartic = q * g.cell();
  r.E3 = r.grad3 - r.quartic;
  return r;
}

// ---------------------------------------------------------------- rate fit

struct RateFit {
  double T_est = 0.0;
  double c_est = 0.0, c_lo = 0.0, c_hi = 0.0;  // median and quartiles of the log-log rate quantity
  double t_lo = 0.0, t_hi = 0.0;
  double fit_residual = 0.0;  // rms relative residual of the final lambda^2 regression
  double trend_slope = 0.0;   // d log q / d log log|log(T - t)| for q = lambda sqrt(log|log(T-t)|/(T-t))
  double T_ss = 0.0;          // plain lambda^2 = alpha (T - t) fit
  double trend_slope_ss = 0.0;  // same slope for q = lambda / sqrt(T_ss - t)
  int iterations = 0;
  std::size_t n = 0;
};

inline double rate_quantity(double lambda, double T, double t) {
  const double tau = T - t;
  if (!(tau > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return lambda * std::sqrt(std::log(std::abs(std::log(tau))) / tau);
}

namespace detail {
inline std::pair<double, double> linfit(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = double(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) sx += x[i], sy += y[i], sxx += x[i] * x[i], sxy += x[i] * y[i];
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return {(sy - slope * sx) / n, slope};
}
inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double x = q * double(v.size() - 1);
  const std::size_t i = std::size_t(x);
  const double f = x - double(i);
  return i + 1 < v.size() ? (1 - f) * v[i] + f * v[i + 1] : v.back();
}
}  // namespace detail

// samples: (t, lambda), t increasing. T from lambda^2 L(T - t) = alpha (T - t) over the last half,
// L = log|log(T - t)|, iterated from the plain fit.
inline RateFit rate_fit(const std::vector<std::pair<double, double>>& samples, int max_iter = 200) {
  const std::size_t n = samples.size();
  if (n < 10) throw Error(ErrorKind::Unsupported, "rate_fit needs at least 10 focusing samples");
  for (std::size_t i = 1; i < n; ++i)
    if (!(samples[i].first > samples[i - 1].first)) throw Error(ErrorKind::Unsupported, "rate_fit: times must increase");
  double lmax = 0.0, lmin = 1e300;
  for (const auto& [t, l] : samples) lmax = std::max(lmax, l), lmin = std::min(lmin, l);
  if (!(lmax >= 5.0 * lmin)) throw Error(ErrorKind::Unsupported, "rate_fit: lambda decreases by less than 5x");
  RateFit f;
  f.n = n;
  f.t_lo = samples.front().first, f.t_hi = samples.back().first;
  std::vector<double> t, l2;
  for (std::size_t i = n / 2; i < n; ++i) t.push_back(samples[i].first), l2.push_back(samples[i].second * samples[i].second);
  auto T_of = [&](const std::vector<double>& y) {
    auto [a, c] = detail::linfit(t, y);
    return std::pair<double, double>{-a / c, c};
  };
  f.T_ss = T_of(l2).first;
  if (!(f.T_ss > f.t_hi)) throw Error(ErrorKind::Unsupported, "rate_fit: lambda^2 does not extrapolate past the window");
  double T = f.T_ss;
  std::vector<double> y(t.size());
  for (f.iterations = 1; f.iterations <= max_iter; ++f.iterations) {
    for (std::size_t i = 0; i < t.size(); ++i) y[i] = l2[i] * std::log(std::abs(std::log(T - t[i])));
    const double Tn = T_of(y).first;
    if (!(Tn > f.t_hi)) throw Error(ErrorKind::Unsupported, "rate_fit: refined T falls inside the window");
    const bool done = std::abs(Tn - T) < 1e-14 * std::max(1.0, std::abs(T));
    T = Tn;
    if (done) break;
  }
  f.T_est = T;
  {
    for (std::size_t i = 0; i < t.size(); ++i) y[i] = l2[i] * std::log(std::abs(std::log(T - t[i])));
    auto [a, c] = detail::linfit(t, y);
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) s += std::pow((a + c * t[i]) / y[i] - 1.0, 2);
    f.fit_residual = std::sqrt(s / double(t.size()));
  }
  std::vector<double> q, x, lq, xs, lqs;
  for (const auto& [ti, li] : samples) {
    const double tau = T - ti, L = std::log(std::abs(std::log(tau)));
    if (L <= 0) continue;
    q.push_back(rate_quantity(li, T, ti));
    x.push_back(std::log(L));
    lq.push_back(std::log(q.back()));
    const double tss = f.T_ss - ti, Ls = std::log(std::abs(std::log(tss)));
    if (Ls > 0) xs.push_back(std::log(Ls)), lqs.push_back(std::log(li / std::sqrt(tss)));
  }
  if (q.size() < 3 || xs.size() < 3) throw Error(ErrorKind::Unsupported, "rate_fit: window too far from T for log|log(T-t)|");
  f.c_est = detail::quantile(q, 0.5);
  f.c_lo = detail::quantile(q, 0.25), f.c_hi = detail::quantile(q, 0.75);
  f.trend_slope = detail::linfit(x, lq).second;
  f.trend_slope_ss = detail::linfit(xs, lqs).second;
  return f;
}

// ---------------------------------------------------------------- ring concentration and mass flux

struct RingMass {
  double fraction = 0.0;    // mass inside the torus over total mass
  double inner = 0.0;       // mass inside over 2 pi r(t), comparable with int Q^2
  double excess = 0.0;      // inner - int Q^2
};

inline RingMass ring_concentration(const ComplexField& u, const ModState& s, double radius, double Q_mass) {
  const Grid& g = u.grid;
  double in = 0.0, tot = 0.0;
  for (std::size_t j = 0; j < g.nr; ++j)
    for (std::size_t k = 0; k < g.nz; ++k) {
      const double m = 2 * kPi * g.r(j) * std::norm(u(j, k));
      tot += m;
      if (std::hypot(g.r(j) - s.r, detail::wrap_dz(g, g.z(k) - s.z)) <= radius * s.lambda) in += m;
    }
  RingMass r;
  r.fraction = tot > 0 ? in / tot : 0.0;
  r.inner = in * g.cell() / (2 * kPi * s.r);
  r.excess = r.inner - Q_mass;
  return r;
}

struct MassFluxTerms {
  double s = 0.0, b = 0.0, Gamma = 0.0;
  double F = 0.0;        // (1/r) int phi_inf(y/A) |eps|^2 mu dy
  double annulus = 0.0;  // int_{A <= |y| <= 2A} |eps|^2 dy
  double grad_mu = 0.0;  // int |grad_y eps|^2 mu dy
  double bound() const { return b / 400.0 * annulus - std::pow(Gamma, a / 2.0) * grad_mu - Gamma * Gamma; }
  double a = 0.6;
};

inline MassFluxTerms mass_flux_terms(const Decomposition& d, double Gamma, double a) {
  if (!d.eps_x) throw Error(ErrorKind::Unsupported, "mass_flux needs the grid eps field");
  const ComplexField& v = *d.eps_x;
  const Grid& g = v.grid;
  const ModState& s = d.state;
  const double A = std::exp(a * kPi / s.b);
  MassFluxTerms m;
  m.s = s.s, m.b = s.b, m.Gamma = Gamma, m.a = a;
  double F = 0.0, ann = 0.0;
  for (std::size_t j = 0; j < g.nr; ++j)
    for (std::size_t k = 0; k < g.nz; ++k) {
      const double rho = std::hypot(g.r(j) - s.r, detail::wrap_dz(g, g.z(k) - s.z)) / s.lambda;
      const double e2 = std::norm(v(j, k));
      F += phi_inf(rho / A) * e2 * g.r(j);
      if (rho >= A && rho <= 2 * A) ann += e2;
    }
  m.F = F * g.cell() / s.r;
  m.annulus = ann * g.cell();
  m.grad_mu = s.lambda * s.lambda * grad_norm2_w(to_w(v));
  return m;
}

// Annulus term of the bound for a radial eps given as a function of rho.
template <class Fn>
double annulus_term_radial(Fn&& eps, double b, double A) {
  const double I = gl_integrate([&](double x) { const double r = std::exp(x); return 2 * kPi * r * r * std::norm(eps(r)); },
                                std::log(A), std::log(2 * A), 64);
  return b / 400.0 * I;
}

struct MassFluxRow {
  double s = 0.0, rate = 0.0, bound = 0.0;
  bool pass = false;
};
struct MassFluxReport {
  std::vector<MassFluxRow> rows;
  double pass_rate = 0.0;
};

// Forward differences of F in s, compared with the bound at the left sample.
inline MassFluxReport mass_flux(const std::vector<MassFluxTerms>& v) {
  MassFluxReport r;
  int ok = 0;
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    const double ds = v[i + 1].s - v[i].s;
    if (!(ds > 0)) throw Error(ErrorKind::Unsupported, "mass_flux: s must increase");
    MassFluxRow row;
    row.s = v[i].s;
    row.rate = (v[i + 1].F - v[i].F) / ds;
    row.bound = v[i].bound();
    row.pass = row.rate >= row.bound;
    ok += row.pass;
    r.rows.push_back(row);
  }
  r.pass_rate = r.rows.empty() ? 0.0 : double(ok) / double(r.rows.size());
  return r;
}

// ---------------------------------------------------------------- hypothesis monitor

struct HypothesisReport {
  std::vector<Check> checks;
  const Check* find(const std::string& n) const {
    for (const auto& c : checks)
      if (c.name == n) return &c;
    return nullptr;
  }
  bool all(const std::string& prefix) const {
    bool any = false, ok = true;
    for (const auto& c : checks)
      if (c.name.rfind(prefix, 0) == 0) any = true, ok = ok && c.pass;
    return any && ok;
  }
};

// pi/(10 log s) < b < 10 pi/log s and exp(-exp(10 pi/b)) < lambda < exp(-exp(pi/(10 b))), in log-log form.
inline Check h13_loglog(double b, double s, double log_lambda) {
  const double ls = std::log(s);
  const double ll = log_lambda < 0 ? std::log(-log_lambda) : -std::numeric_limits<double>::infinity();
  const bool pb = b > kPi / (10 * ls) && b < 10 * kPi / ls;
  const bool pl = ll < 10 * kPi / b && ll > kPi / (10 * b);
  return {"H1.3 log-log window", ll, kPi / (10 * b), pb && pl, "verbatim", "value log|log lambda| against pi/(10 b); b against pi/(10 log s)"};
}

// lambda(s_b) <= 3 lambda(s_a) for all a <= b.
inline Check h15_monotony(const std::vector<double>& lambda) {
  double worst = 0.0, run_min = std::numeric_limits<double>::infinity();
  for (double l : lambda) {
    run_min = std::min(run_min, l);
    worst = std::max(worst, l / run_min);
  }
  return {"H1.5 max lambda(s_b)/lambda(s_a)", worst, 3.0, worst <= 3.0, "verbatim", ""};
}

struct MonitorInput {
  const Decomposition* dec = nullptr;
  const ComplexField* u = nullptr;
  const CutoffSet* cuts = nullptr;
  double Gamma = 0.0;
  double E0 = 0.0;  // initial energy, half-weighted form
  double s = 0.0;   // s0 + int dt / lambda^2 with s0 = exp(3 pi/(4 b0))
  std::vector<double> lambda_history;
};

// H1.1-H2.3 at one sample. Pure; H1.4 also gets the desk-scale form used for the data.
inline HypothesisReport hypothesis_monitor(const MonitorInput& in, const DiagConfig& c = {}) {
  HypothesisReport rep;
  const ModState& st = in.dec->state;
  const double as = c.alpha_star, b = st.b, lam = st.lambda, G = in.Gamma;
  auto add = [&](std::string n, double v, double t, bool p, std::string mode, std::string note = "") {
    rep.checks.push_back({std::move(n), v, t, p, std::move(mode), std::move(note)});
  };
  const double drz = std::hypot(st.r - 1.0, st.z);
  add("H1.1 |(r,z)-(1,0)|", drz, std::sqrt(as), drz < std::sqrt(as), "verbatim");
  const double ut = in.dec->eps_x ? std::sqrt(mass(*in.dec->eps_x)) : 0.0;
  add("H1.2 b+||u~||", b + ut, std::pow(as, 0.1), b + ut > 0 && b + ut < std::pow(as, 0.1), "verbatim");
  const double en = in.dec->eps_x ? eps_norm(*in.dec) : 0.0;
  add("H1.2 eps norm", en, std::pow(G, 0.75), en <= std::pow(G, 0.75), "verbatim");
  rep.checks.push_back(h13_loglog(b, in.s, std::log(lam)));

  const double mom = momentum_localized(*in.u, *in.cuts);
  const double lhs = lam * lam * std::abs(in.E0) + lam * std::abs(mom);
  add("H1.4 energy+momentum", lhs, G * G, lhs < G * G, "verbatim");
  add("H1.4 energy", lam * lam * std::abs(in.E0), G * G, lam * lam * std::abs(in.E0) < G * G, "desk-scale");
  double ref = 0.0;
  {
    const Grid& g = in.u->grid;
    for (std::size_t j = 0; j < g.nr; ++j)
      for (std::size_t k = 0; k < g.nz; ++k) {
        const std::size_t i = g.idx(j, k);
        const double proj = in.cuts->dpsi_dr.v[i] * (g.r(j) - st.r) + in.cuts->dpsi_dz.v[i] * detail::wrap_dz(g, g.z(k) - st.z);
        ref += 2 * kPi * g.r(j) * std::norm(in.u->v[i]) * proj;
      }
    ref *= -b / (2 * lam * lam) * g.cell();
  }
  const double ratio = ref != 0.0 ? mom / ref : 0.0;
  add("H1.4 momentum / focusing phase", ratio, 0.1, std::abs(ratio - 1.0) < 0.1, "desk-scale");
  if (!in.lambda_history.empty()) rep.checks.push_back(h15_monotony(in.lambda_history));

  const double em = std::exp(c.m / b);
  const double h3 = sobolev_norm(*in.u, 3.0);
  add("H2.1 ||u||_H3", h3, em / std::pow(lam, 3), h3 < em / std::pow(lam, 3), "verbatim");
  const ComplexField cu = in.cuts->chi * *in.u;
  for (double kappa : {0.5, 1.0}) {
    const double v = sobolev_norm(cu, 3.0 - kappa), t = std::exp((1 + kappa) * c.m / b) / std::pow(lam, 3.0 - 2.0 * kappa);
    std::ostringstream n;
    n << "H2.2 ||chi u||_H" << 3.0 - kappa;
    add(n.str(), v, t, v < t, "verbatim", kappa == 0.5 ? "fractional norm by the flat multiplier" : "");
  }
  const double h15 = sobolev_norm(cu, 1.5), t15 = std::exp((2 * c.m + kPi) / b);
  add("H2.2 ||chi u||_H1.5", h15, t15, h15 < t15, "verbatim", "fractional norm by the flat multiplier");
  const double h1 = sobolev_norm(cu, 1.0);
  add("H2.3 ||chi u||_H1", h1, std::pow(as, 0.1), h1 < std::pow(as, 0.1), "verbatim");
  return rep;
}

// ---------------------------------------------------------------- per-snapshot record

struct DiagnosticsRecord {
  double t = 0.0, s = 0.0;
  double mass = 0.0, energy = 0.0, pz = 0.0;
  double lambda = 0.0, b = 0.0, r = 0.0, z = 0.0, gamma = 0.0;
  double eps_norm = 0.0;
  double J = 0.0, f1 = 0.0, f2 = 0.0;
  double E3 = std::numeric_limits<double>::quiet_NaN();
  double H_form = std::numeric_limits<double>::quiet_NaN();
  double rate_quantity = std::numeric_limits<double>::quiet_NaN();
  double ring_mass_fraction = 0.0, ring_inner = 0.0;
  double flux_out = std::numeric_limits<double>::quiet_NaN();
  double h1_global = 0.0, h1_local = 0.0;
  std::array<double, 5> residuals{};
  int newton_iters = 0;
  bool decomposed = false;
  std::string hyp_flags;  // e.g. "H1.1=1;H1.2=0;..."

  static std::string csv_header() {
    return "t,s,mass,energy,pz,lambda,b,r,z,gamma,eps_norm,J,f1,f2,E3,H_form,rate_quantity,ring_mass_fraction,ring_inner,"
           "flux_out,h1_global,h1_local,res1,res2,res3,res4,res5,newton_iters,decomposed,hyp_flags";
  }
  std::string csv_row() const {
    std::ostringstream os;
    os.precision(12);
    auto num = [&](double x) {
      if (std::isfinite(x)) os << x;
      else os << "NA";
      os << ',';
    };
    for (double x : {t, s, mass, energy, pz, lambda, b, r, z, gamma, eps_norm, J, f1, f2, E3, H_form, rate_quantity,
                     ring_mass_fraction, ring_inner, flux_out, h1_global, h1_local})
      num(x);
    for (double x : residuals) num(x);
    os << newton_iters << ',' << (decomposed ? 1 : 0) << ',' << hyp_flags;
    return os.str();
  }
};

inline std::string flags_string(const HypothesisReport& r) {
  std::string s;
  for (const auto& c : r.checks) {
    if (!s.empty()) s += ';';
    s += c.name.substr(0, c.name.find(' ')) + (c.mode == "desk-scale" ? "d" : "") + "=" + (c.pass ? "1" : "0");
  }
  return s;
}

}  // namespace rblw
