#pragma once

#include <fftw3.h>

#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>

#include "rblw/grid.hpp"

namespace rblw {

// Sine (DST-II) in r times Fourier in z, acting on w = sqrt(2 pi r) u.
// Coefficient (k, m) pairs radial wavenumber (k+1) pi / r_max with axial kz(m).
// Forward transforms are unnormalized; inverse ones carry the 1/(2 nr nz) factor.
class Spectral {
 public:
  explicit Spectral(const Grid& g, unsigned flags = FFTW_ESTIMATE) : g_(g) {
    const int nr = int(g.nr), nz = int(g.nz);
    buf_ = fftw_alloc_complex(g.size());
    double* d = reinterpret_cast<double*>(buf_);
    fftw_r2r_kind k10 = FFTW_RODFT10, k01 = FFTW_RODFT01, c01 = FFTW_REDFT01;
    p_sin_fwd_ = fftw_plan_many_r2r(1, &nr, 2 * nz, d, nullptr, 2 * nz, 1, d, nullptr, 2 * nz, 1, &k10, flags);
    p_sin_inv_ = fftw_plan_many_r2r(1, &nr, 2 * nz, d, nullptr, 2 * nz, 1, d, nullptr, 2 * nz, 1, &k01, flags);
    p_cos_inv_ = fftw_plan_many_r2r(1, &nr, 2 * nz, d, nullptr, 2 * nz, 1, d, nullptr, 2 * nz, 1, &c01, flags);
    p_z_fwd_ = fftw_plan_many_dft(1, &nz, nr, buf_, nullptr, 1, nz, buf_, nullptr, 1, nz, FFTW_FORWARD, flags);
    p_z_inv_ = fftw_plan_many_dft(1, &nz, nr, buf_, nullptr, 1, nz, buf_, nullptr, 1, nz, FFTW_BACKWARD, flags);
    kr_.resize(g.nr);
    kz_.resize(g.nz);
    for (std::size_t k = 0; k < g.nr; ++k) kr_[k] = double(k + 1) * kPi / g.r_max;
    const double L = 2.0 * g.z_half;
    for (std::size_t m = 0; m < g.nz; ++m) {
      const long f = m < g.nz / 2 ? long(m) : long(m) - long(g.nz);
      kz_[m] = 2.0 * kPi * double(f) / L;
    }
  }
  Spectral(const Spectral&) = delete;
  Spectral& operator=(const Spectral&) = delete;
  ~Spectral() {
    fftw_destroy_plan(p_sin_fwd_);
    fftw_destroy_plan(p_sin_inv_);
    fftw_destroy_plan(p_cos_inv_);
    fftw_destroy_plan(p_z_fwd_);
    fftw_destroy_plan(p_z_inv_);
    fftw_free(buf_);
  }

  const Grid& grid() const { return g_; }
  double kr(std::size_t k) const { return kr_[k]; }
  double kz(std::size_t m) const { return kz_[m]; }
  // kz with the Nyquist mode removed, for odd derivatives.
  double kz_odd(std::size_t m) const { return m == g_.nz / 2 ? 0.0 : kz_[m]; }
  double k2(std::size_t k, std::size_t m) const { return kr_[k] * kr_[k] + kz_[m] * kz_[m]; }

  // Parseval weight: sum |w|^2 = sum_{k,m} weight(k) |W_km|^2.
  double parseval_weight(std::size_t k) const {
    const double n = double(g_.nr);
    return (k + 1 == g_.nr ? 1.0 / (4.0 * n) : 1.0 / (2.0 * n)) / double(g_.nz);
  }

  void forward(const cplx* w, cplx* coef) {
    std::memcpy(static_cast<void*>(buf_), w, g_.size() * sizeof(cplx));
    fftw_execute(p_sin_fwd_);
    fftw_execute(p_z_fwd_);
    std::memcpy(static_cast<void*>(coef), static_cast<const void*>(buf_), g_.size() * sizeof(cplx));
  }

  void inverse_sine(const cplx* coef, cplx* w) {
    std::memcpy(static_cast<void*>(buf_), coef, g_.size() * sizeof(cplx));
    fftw_execute(p_z_inv_);
    fftw_execute(p_sin_inv_);
    scale_out(w);
  }

  // Coefficient slot k here multiplies cos(k pi r / r_max), k = 0..nr-1.
  void inverse_cosine(const cplx* coef, cplx* out) {
    std::memcpy(static_cast<void*>(buf_), coef, g_.size() * sizeof(cplx));
    fftw_execute(p_z_inv_);
    fftw_execute(p_cos_inv_);
    scale_out(out);
  }

  // w <- inverse(fr[k] fz[m] forward(w)), the normalization folded into fr.
  void apply_separable(cplx* w, const cplx* fr, const cplx* fz) {
    std::memcpy(static_cast<void*>(buf_), w, g_.size() * sizeof(cplx));
    fftw_execute(p_sin_fwd_);
    fftw_execute(p_z_fwd_);
    cplx* b = reinterpret_cast<cplx*>(buf_);
    const double s = 1.0 / (2.0 * double(g_.nr) * double(g_.nz));
    for (std::size_t k = 0; k < g_.nr; ++k) {
      const cplx a = fr[k] * s;
      cplx* row = b + k * g_.nz;
      for (std::size_t m = 0; m < g_.nz; ++m) row[m] *= a * fz[m];
    }
    fftw_execute(p_z_inv_);
    fftw_execute(p_sin_inv_);
    std::memcpy(static_cast<void*>(w), static_cast<const void*>(buf_), g_.size() * sizeof(cplx));
  }

 private:
  void scale_out(cplx* out) {
    const double s = 1.0 / (2.0 * double(g_.nr) * double(g_.nz));
    const cplx* b = reinterpret_cast<const cplx*>(buf_);
    for (std::size_t i = 0; i < g_.size(); ++i) out[i] = b[i] * s;
  }

  Grid g_;
  fftw_complex* buf_ = nullptr;
  fftw_plan p_sin_fwd_{}, p_sin_inv_{}, p_cos_inv_{}, p_z_fwd_{}, p_z_inv_{};
  std::vector<double> kr_, kz_;
};

// When set, every grid is planned with FFTW_ESTIMATE, so reruns use identical transforms
// and reproduce outputs bit for bit. Measured plans can differ between runs.
inline bool& deterministic_plans() {
  static bool on = false;
  return on;
}

// One transform object per grid, created on first use. Grids of 2^19 points and up are
// planned with FFTW_MEASURE (about 1 s at 512x1024, 7 s at 2048^2; transforms run twice as fast).
inline Spectral& spectral_for(const Grid& g) {
  static std::mutex mu;
  static std::map<std::tuple<std::size_t, std::size_t, double, double>, std::unique_ptr<Spectral>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_tuple(g.nr, g.nz, g.r_max, g.z_half);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, std::make_unique<Spectral>(g, !deterministic_plans() && g.size() >= (std::size_t(1) << 19) ? FFTW_MEASURE : FFTW_ESTIMATE)).first;
  return *it->second;
}

}  // namespace rblw
