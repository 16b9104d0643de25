#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rblw/cutoff.hpp"
#include "rblw/field_ops.hpp"

namespace rblw {

enum class CflMode { Fixed, LambdaAdaptive };
enum class StopReason { TimeOut, LambdaFloor, GradientCeiling, NumericalBlowup, StepLimit };

inline const char* to_string(StopReason s) {
  switch (s) {
    case StopReason::TimeOut: return "time-out";
    case StopReason::LambdaFloor: return "lambda-floor";
    case StopReason::GradientCeiling: return "gradient-ceiling";
    case StopReason::NumericalBlowup: return "numerical-blowup";
    case StopReason::StepLimit: return "step-limit";
  }
  return "?";
}

struct EvolverConfig {
  double dt0 = 1e-3;
  CflMode cfl_mode = CflMode::Fixed;
  double t_max = 1.0;
  int snapshot_stride = 100;
  double sponge_strength = 0.0;
  double sponge_width = 0.1;  // fraction of r_max and z_half
  double sponge_axis = 0.0;   // width of an extra absorbing layer at r = 0 (0 = none)
  int filter_order = 0;       // exp(-36 (k/kmax)^p) per direction after each linear step; 0 = off
  double stop_lambda = 0.0;   // 0 disables the floor
  double stop_gradnorm = std::numeric_limits<double>::infinity();
  long max_steps = std::numeric_limits<long>::max();
  bool keep_fields = false;
  // lambda fallback from the gradient: lambda = sqrt(2 pi r0 |grad Q|^2) / |grad u|
  double grad_Q2 = 11.70089652;
  double r0 = 1.0;
  // drift gates for the conservation report
  double mass_tol = 1e-8, energy_tol = 1e-6, pz_tol = 1e-10;
  // Numerical blowup: non-finite values, a gradient at the grid scale (|grad u|^2 > 0.5 kmax^2 M),
  // or, if set, an energy jump above this fraction of |E0| + |grad u0|^2.
  double blowup_energy_jump = std::numeric_limits<double>::infinity();

  void validate(const Grid& g) const {
    if (!(dt0 > 0.0) || !std::isfinite(dt0)) throw Error(ErrorKind::Validation, "dt0 must be positive");
    if (snapshot_stride < 1) throw Error(ErrorKind::Validation, "snapshot_stride must be >= 1");
    if (!(t_max > 0.0)) throw Error(ErrorKind::Validation, "t_max must be positive");
    if (sponge_strength < 0.0 || !(sponge_width > 0.0 && sponge_width < 0.5))
      throw Error(ErrorKind::Validation, "sponge needs strength >= 0 and width in (0, 0.5)");
    if (!(sponge_axis >= 0.0 && sponge_axis < 0.5 * g.r_max)) throw Error(ErrorKind::Validation, "sponge_axis must lie in [0, r_max/2)");
    if (stop_lambda != 0.0 && !(stop_lambda > 4.0 * std::max(g.dr, g.dz)))
      throw Error(ErrorKind::Validation, "stop_lambda must exceed 4 max(dr,dz) for this grid");
  }
};

// Split-step integrator on w = sqrt(2 pi r) u.
class Stepper {
 public:
  explicit Stepper(const ComplexField& u, double sponge_strength = 0.0, double sponge_width = 0.1, double sponge_axis = 0.0,
                   int filter_order = 0)
      : g_(u.grid), sp_(spectral_for(u.grid)), w_(to_w(u)), er_(g_.nr), ez_(g_.nz), fr_(g_.nr, 1.0), fz_(g_.nz, 1.0) {
    if (filter_order > 0) {
      for (std::size_t k = 0; k < g_.nr; ++k) fr_[k] = std::exp(-36.0 * std::pow(double(k + 1) / double(g_.nr), filter_order));
      for (std::size_t m = 0; m < g_.nz; ++m)
        fz_[m] = std::exp(-36.0 * std::pow(std::abs(sp_.kz(m)) / (kPi * double(g_.nz) / (2.0 * g_.z_half)), filter_order));
    }
    inv2pir_.resize(g_.nr);
    pot_.resize(g_.nr);
    for (std::size_t j = 0; j < g_.nr; ++j) {
      const double r = g_.r(j);
      inv2pir_[j] = 1.0 / (2.0 * kPi * r);
      pot_[j] = 1.0 / (4.0 * r * r);
    }
    if (sponge_strength > 0.0) {
      sponge_.assign(g_.size(), 0.0);
      const double wr = sponge_width * g_.r_max, wz = sponge_width * g_.z_half;
      for (std::size_t j = 0; j < g_.nr; ++j)
        for (std::size_t k = 0; k < g_.nz; ++k)
          sponge_[g_.idx(j, k)] = sponge_strength * (ramp(g_.r(j), g_.r_max - wr, g_.r_max) +
                                                      ramp(std::abs(g_.z(k)), g_.z_half - wz, g_.z_half) +
                                                      (sponge_axis > 0.0 ? 1.0 - ramp(g_.r(j), 0.0, sponge_axis) : 0.0));
    }
  }

  const ComplexField& w() const { return w_; }
  ComplexField u() const { return from_w(w_); }
  double time() const { return t_; }

  // One Strang step; false if the result is not finite (state is then unspecified).
  bool step(double dt) { return advance(dt, 1); }

  // n Strang steps of size dt, with the adjacent pointwise half steps fused.
  bool advance(double dt, long n) {
    if (n <= 0) return true;
    bool ok = pointwise(0.5 * dt);
    for (long i = 0; i < n; ++i) {
      linear(dt);
      if (!sponge_.empty()) {
        for (std::size_t q = 0; q < w_.size(); ++q) w_.v[q] *= std::exp(-sponge_[q] * std::abs(dt));
      }
      ok = pointwise(i + 1 < n ? dt : 0.5 * dt) && ok;
      t_ += dt;
    }
    return ok;
  }

  // Linear substep only, exposed for unitarity checks.
  void linear(double dt) {
    if (dt != dt_lin_) {
      for (std::size_t k = 0; k < g_.nr; ++k) er_[k] = fr_[k] * std::exp(cplx(0.0, -sp_.kr(k) * sp_.kr(k) * dt));
      for (std::size_t m = 0; m < g_.nz; ++m) ez_[m] = fz_[m] * std::exp(cplx(0.0, -sp_.kz(m) * sp_.kz(m) * dt));
      dt_lin_ = dt;
    }
    sp_.apply_separable(w_.v.data(), er_.data(), ez_.data());
  }

 private:
  // w <- w exp(i (|u|^2 + 1/(4 r^2)) tau); |w| is unchanged so the phase is exact.
  bool pointwise(double tau) {
    bool finite = true;
    for (std::size_t j = 0; j < g_.nr; ++j) {
      cplx* row = w_.v.data() + j * g_.nz;
      const double a = inv2pir_[j], p = pot_[j];
      for (std::size_t k = 0; k < g_.nz; ++k) {
        const double m2 = std::norm(row[k]);
        finite = finite && std::isfinite(m2);
        const double ph = (m2 * a + p) * tau;
        row[k] *= cplx(std::cos(ph), std::sin(ph));
      }
    }
    return finite;
  }

  Grid g_;
  Spectral& sp_;
  ComplexField w_;
  std::vector<cplx> er_, ez_;
  std::vector<double> fr_, fz_;
  std::vector<double> inv2pir_, pot_, sponge_;
  double dt_lin_ = std::numeric_limits<double>::quiet_NaN();
  double t_ = 0.0;
};

inline ComplexField step(const ComplexField& u, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorKind::Validation, "step needs dt > 0");
  require_finite(u, "step input");
  Stepper s(u);
  if (!s.step(dt)) throw Error(ErrorKind::NumericalBlowup, "non-finite field after one step");
  return s.u();
}

struct StepRecord {
  double t = 0.0, dt = 0.0;
  long step = 0;
  double mass = 0.0, energy = 0.0, momentum_z = 0.0, grad2 = 0.0;
  double lambda_est = 0.0;
  std::string lambda_source;  // "modulation" or "gradient"
  std::string hook_error;
};

struct Snapshot {
  double t = 0.0;
  long step = 0;
  std::shared_ptr<const ComplexField> u;  // null unless fields are kept
};

struct Trajectory {
  std::vector<Snapshot> snapshots;
  std::vector<StepRecord> records;
  StopReason stop = StopReason::TimeOut;
  double t_end = 0.0;
  long steps = 0;
  double blowup_lo = 0.0, blowup_hi = 0.0;  // bracket when stop == NumericalBlowup
  std::string detail;
};

// Result of the per-snapshot hook; lambda <= 0 means "no estimate".
struct HookResult {
  double lambda = 0.0;
  std::string error;
};

struct RunHooks {
  std::function<HookResult(const Snapshot&, const ComplexField&)> on_snapshot;
};

inline Trajectory run(const ComplexField& u0, const EvolverConfig& cfg, const RunHooks& hooks = {}) {
  require_finite(u0, "run input");
  cfg.validate(u0.grid);
  const Grid& g = u0.grid;
  Stepper st(u0, cfg.sponge_strength, cfg.sponge_width, cfg.sponge_axis, cfg.filter_order);
  Trajectory tr;
  const double kmax2 = std::pow(kPi / std::min(g.dr, g.dz), 2);
  double lambda = 0.0, E0 = 0.0, G0 = 0.0;
  long n = 0;
  double t_last_good = 0.0;

  auto sample = [&](double dt) -> bool {
    const ComplexField& w = st.w();
    StepRecord rec;
    rec.t = st.time(), rec.dt = dt, rec.step = n;
    if (!all_finite(w)) return false;
    rec.mass = mass_w(w);
    rec.grad2 = grad_norm2_w(w);
    rec.energy = rec.grad2 - 0.5 * quartic_w(w);
    rec.momentum_z = momentum_z_w(w);
    if (n == 0) E0 = rec.energy, G0 = rec.grad2;
    if (!std::isfinite(rec.energy) || std::abs(rec.energy - E0) > cfg.blowup_energy_jump * (std::abs(E0) + G0) ||
        rec.grad2 > 0.5 * kmax2 * rec.mass)
      return false;
    Snapshot s;
    s.t = rec.t, s.step = n;
    ComplexField u = st.u();
    HookResult hr;
    if (hooks.on_snapshot) {
      try {
        hr = hooks.on_snapshot(s, u);
      } catch (const std::exception& e) {
        hr.lambda = 0.0, hr.error = e.what();
      }
    }
    rec.hook_error = hr.error;
    if (hr.lambda > 0.0 && hr.error.empty()) {
      lambda = hr.lambda, rec.lambda_source = "modulation";
    } else {
      lambda = std::sqrt(2 * kPi * cfg.r0 * cfg.grad_Q2 / rec.grad2), rec.lambda_source = "gradient";
    }
    rec.lambda_est = lambda;
    if (cfg.keep_fields) s.u = std::make_shared<const ComplexField>(std::move(u));
    tr.snapshots.push_back(std::move(s));
    tr.records.push_back(std::move(rec));
    t_last_good = st.time();
    return true;
  };

  auto blowup = [&](const std::string& why) {
    tr.stop = StopReason::NumericalBlowup;
    tr.blowup_lo = t_last_good, tr.blowup_hi = st.time();
    tr.detail = why;
  };

  if (!sample(0.0)) {
    blowup("initial data fail the resolution check");
    return tr;
  }
  double dt = cfg.dt0;
  while (true) {
    if (cfg.stop_lambda > 0.0 && lambda < cfg.stop_lambda) {
      tr.stop = StopReason::LambdaFloor;
      break;
    }
    if (std::sqrt(tr.records.back().grad2) > cfg.stop_gradnorm) {
      tr.stop = StopReason::GradientCeiling;
      break;
    }
    if (st.time() >= cfg.t_max * (1 - 1e-14)) {
      tr.stop = StopReason::TimeOut;
      break;
    }
    if (n >= cfg.max_steps) {
      tr.stop = StopReason::StepLimit;
      break;
    }
    dt = cfg.cfl_mode == CflMode::Fixed ? cfg.dt0 : cfg.dt0 * lambda * lambda;
    long m = std::min<long>(cfg.snapshot_stride, cfg.max_steps - n);
    const double left = cfg.t_max - st.time();
    bool ok = true;
    if (double(m) * dt >= left) {
      // Land exactly on t_max.
      m = std::max<long>(1, long(std::ceil(left / dt - 1e-9)));
      dt = left / double(m);
    }
    ok = st.advance(dt, m);
    n += m;
    if (!ok) {
      blowup("non-finite field");
      break;
    }
    if (!sample(dt)) {
      blowup("energy jump or grid-scale gradient");
      break;
    }
  }
  tr.t_end = st.time();
  tr.steps = n;
  return tr;
}

struct ConservationRow {
  double t = 0.0;
  double mass_drift = 0.0, energy_drift = 0.0, pz_drift = 0.0;
  bool flagged = false;
};

struct ConservationReport {
  std::vector<ConservationRow> rows;
  double max_mass = 0.0, max_energy = 0.0, max_pz = 0.0;
  bool flagged = false;
};

// Mass drift relative to M0; energy drift relative to int|grad u0|^2 (E0 itself may vanish);
// z-momentum drift relative to sqrt(M0 int|grad u0|^2).
inline ConservationReport conservation_report(const Trajectory& tr, const EvolverConfig& cfg) {
  ConservationReport rep;
  if (tr.records.empty()) return rep;
  const auto& r0 = tr.records.front();
  const double escale = std::max(r0.grad2, std::abs(r0.energy)), pscale = std::sqrt(r0.mass * r0.grad2);
  for (const auto& r : tr.records) {
    ConservationRow row;
    row.t = r.t;
    row.mass_drift = (r.mass - r0.mass) / r0.mass;
    row.energy_drift = escale > 0 ? (r.energy - r0.energy) / escale : 0.0;
    row.pz_drift = pscale > 0 ? (r.momentum_z - r0.momentum_z) / pscale : 0.0;
    row.flagged = std::abs(row.mass_drift) > cfg.mass_tol || std::abs(row.energy_drift) > cfg.energy_tol ||
                  std::abs(row.pz_drift) > cfg.pz_tol;
    rep.max_mass = std::max(rep.max_mass, std::abs(row.mass_drift));
    rep.max_energy = std::max(rep.max_energy, std::abs(row.energy_drift));
    rep.max_pz = std::max(rep.max_pz, std::abs(row.pz_drift));
    rep.flagged = rep.flagged || row.flagged;
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace rblw
