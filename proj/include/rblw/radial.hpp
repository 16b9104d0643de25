#pragma once

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <vector>

#include "rblw/grid.hpp"

namespace rblw {

// Samples of a radial function of rho = |y| at rho_j = j * drho, rho = 0 included.
struct RadialProfile {
  double drho = 0.0;
  std::vector<cplx> v;

  RadialProfile() = default;
  RadialProfile(std::size_t n, double h, cplx fill = 0.0) : drho(h), v(n, fill) {}

  std::size_t n() const { return v.size(); }
  double rho(std::size_t j) const { return double(j) * drho; }
  double rho_max() const { return v.empty() ? 0.0 : double(v.size() - 1) * drho; }
  cplx& operator[](std::size_t j) { return v[j]; }
  const cplx& operator[](std::size_t j) const { return v[j]; }

  // 8-point Lagrange interpolation, even reflection through rho = 0, zero past rho_max.
  cplx at(double rho) const {
    rho = std::abs(rho);
    const double x = rho / drho;
    const long n = long(v.size());
    if (x > double(n - 1)) return 0.0;
    long i0 = long(std::floor(x)) - 3;
    i0 = std::min(i0, n - 8);
    cplx s = 0.0;
    for (long i = i0; i < i0 + 8; ++i) {
      double w = 1.0;
      for (long m = i0; m < i0 + 8; ++m)
        if (m != i) w *= (x - double(m)) / double(i - m);
      s += w * v[std::size_t(std::abs(i))];
    }
    return s;
  }
};

// Finite-difference weights (Fornberg) for derivatives 0..m at x0 from nodes x.
inline std::vector<std::vector<double>> fornberg(double x0, const std::vector<double>& x, int m) {
  const int n = int(x.size());
  std::vector<std::vector<double>> c(m + 1, std::vector<double>(n, 0.0));
  double c1 = 1.0, c4 = x[0] - x0;
  c[0][0] = 1.0;
  for (int i = 1; i < n; ++i) {
    const int mn = std::min(i, m);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = x[i] - x0;
    for (int j = 0; j < i; ++j) {
      const double c3 = x[i] - x[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k) c[k][i] = c1 * (k * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
        c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
      }
      for (int k = mn; k >= 1; --k) c[k][j] = (c4 * c[k][j] - k * c[k - 1][j]) / c3;
      c[0][j] = c4 * c[0][j] / c3;
    }
    c1 = c2;
  }
  return c;
}

// Sixth-order first and second derivative matrices on rho_j = j h, j = 0..n-1,
// for even functions of rho (mirror folded at the axis), one-sided at the outer end.
struct RadialOps {
  std::size_t n = 0;
  double h = 0.0;
  Eigen::SparseMatrix<double> D1, D2;

  RadialOps() = default;
  RadialOps(std::size_t n_, double h_, int half = 3) : n(n_), h(h_), D1(n_, n_), D2(n_, n_) {
    std::vector<Eigen::Triplet<double>> t1, t2;
    const long N = long(n), w = 2 * half + 1;
    for (long i = 0; i < N; ++i) {
      long lo = i - half;
      if (lo + w > N) lo = N - w;
      std::vector<double> xs;
      for (long m = lo; m < lo + w; ++m) xs.push_back(double(m));
      auto c = fornberg(double(i), xs, 2);
      for (long m = lo; m < lo + w; ++m) {
        const long col = std::abs(m);
        t1.emplace_back(i, col, c[1][m - lo] / h);
        t2.emplace_back(i, col, c[2][m - lo] / (h * h));
      }
    }
    D1.setFromTriplets(t1.begin(), t1.end());
    D2.setFromTriplets(t2.begin(), t2.end());
  }

  // Radial 2D Laplacian d2 + (1/rho) d1; at rho = 0 it is 2 d2.
  Eigen::SparseMatrix<double> laplacian() const {
    std::vector<Eigen::Triplet<double>> t;
    for (int k = 0; k < D2.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(D2, k); it; ++it) {
        const double f = it.row() == 0 ? 2.0 : 1.0;
        t.emplace_back(it.row(), it.col(), f * it.value());
      }
      for (Eigen::SparseMatrix<double>::InnerIterator it(D1, k); it; ++it)
        if (it.row() > 0) t.emplace_back(it.row(), it.col(), it.value() / (double(it.row()) * h));
    }
    Eigen::SparseMatrix<double> L(n, n);
    L.setFromTriplets(t.begin(), t.end());
    return L;
  }
};

// Weights for int f(|y|) dy over R^2 (2 pi rho drho), for smooth even f on rho_j = j h.
// Trapezoid plus Euler-Maclaurin end corrections at the axis; the outer end is
// assumed to carry negligible values.
inline std::vector<double> radial_weights(std::size_t n, double h) {
  std::vector<double> w(n);
  for (std::size_t j = 0; j < n; ++j) w[j] = double(j) * h * h;
  w[n - 1] *= 0.5;
  // f(rho) rho is odd: the h^2/12 [g'(0)] term is h^2/12 f(0), then higher odd derivatives.
  w[0] += h * h / 12.0;
  std::vector<double> xs;
  for (int m = -4; m <= 4; ++m) xs.push_back(double(m));
  auto c = fornberg(0.0, xs, 4);
  for (int m = -4; m <= 4; ++m) {
    const std::size_t col = std::size_t(std::abs(m));
    // g'''(0) = 3 f''(0), g^(5)(0) = 5 f''''(0)
    w[col] += -h * h * h * h / 720.0 * 3.0 * c[2][m + 4] / (h * h);
    w[col] += h * h * h * h * h * h / 30240.0 * 5.0 * c[4][m + 4] / (h * h * h * h);
  }
  for (auto& x : w) x *= 2.0 * kPi;
  return w;
}

// int f conj(g) dy over R^2 for radial profiles.
inline cplx radial_inner(const RadialProfile& f, const RadialProfile& g) {
  const std::size_t n = std::min(f.n(), g.n());
  auto w = radial_weights(n, f.drho);
  cplx s = 0.0;
  for (std::size_t j = 0; j < n; ++j) s += w[j] * f[j] * std::conj(g[j]);
  return s;
}

inline double radial_norm2(const RadialProfile& f) { return std::real(radial_inner(f, f)); }

inline RadialProfile derivative(const RadialProfile& f, const RadialOps& ops) {
  Eigen::VectorXcd x(f.n());
  for (std::size_t j = 0; j < f.n(); ++j) x[j] = f[j];
  Eigen::VectorXcd d = ops.D1.cast<cplx>() * x;
  RadialProfile out(f.n(), f.drho);
  for (std::size_t j = 0; j < f.n(); ++j) out[j] = d[j];
  return out;
}

}  // namespace rblw
