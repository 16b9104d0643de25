#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <optional>

#include "rblw/config.hpp"
#include "rblw/diagnostics.hpp"
#include "rblw/evolver.hpp"
#include "rblw/ground_state.hpp"
#include "rblw/init_data.hpp"
#include "rblw/modulation.hpp"

namespace rblw {

struct GroundContext {
  GroundState gs;
  double qmass = 0.0;
  explicit GroundContext(double tol = 1e-10) : gs(solve_Q(tol)), qmass(radial_norm2(gs.Q)) {}
};

struct DataSet {
  DataParams params;
  ProfileBundle bundle;
  PerturbationF f;
  NuResult nu;
  ComplexField u0;
  AdmissibilityReport report;
  double C_eta = 0.0;
};

// Profile, perturbation, nu and u0 for the configured data, with the admissibility report.
inline DataSet prepare_data(const RunConfig& cfg, const GroundContext& ctx) {
  cfg.validate();
  DataSet d;
  d.params = cfg.data;
  d.params.alpha_star = cfg.diag.alpha_star;
  const ProfileParams pp = cfg.profile(cfg.data.b0);
  d.bundle = build_bundle(pp, ctx.gs.Q, ctx.qmass);
  // a > 4 C_eta with C_eta from Gamma at b0 and 1.25 b0.
  {
    const ProfileBundle b2 = build_bundle(cfg.profile(1.25 * cfg.data.b0), ctx.gs.Q, ctx.qmass);
    d.C_eta = operational_C_eta({pp.b, 1.25 * pp.b}, {d.bundle.Gamma, b2.Gamma});
    if (!(cfg.a > 4.0 * d.C_eta)) {
      std::ostringstream os;
      os << "profile.a = " << cfg.a << " is not above 4 C_eta = " << 4.0 * d.C_eta;
      throw Error(ErrorKind::Validation, os.str());
    }
  }
  d.f = construct_f(ctx.gs.Q, *d.bundle.qb, cfg.n_seeds);
  if (cfg.tune_nu) {
    d.nu = tune_nu(*d.bundle.qb, d.f);
    d.params.nu = d.nu.nu;
  }
  const Grid g = cfg.grid();
  d.u0 = assemble_u0(d.params, *d.bundle.qb, &d.f, g);
  d.report = verify_P(d.u0, d.params, d.bundle, &d.f, CutoffSet(g));
  return d;
}

struct FocusRun {
  Trajectory tr;
  EvolverConfig evolver;
  std::vector<DiagnosticsRecord> records;          // one per analysed snapshot
  std::vector<std::pair<double, ModState>> states;  // decomposed snapshots
  std::vector<LyapounovTerms> J;
  std::vector<HypothesisReport> hypotheses;
  std::vector<MassFluxTerms> flux_terms;
  ConservationReport conservation;
  std::optional<DynamicsReport> dynamics;
  std::optional<RateFit> rate;
  std::string rate_error;
  MassFluxReport flux;
  double E0 = 0.0;
  double seconds = 0.0;
  int decompose_failures = 0;
};

struct FocusCallbacks {
  std::function<void(const DiagnosticsRecord&)> on_record;
  std::function<void(const Snapshot&, const ComplexField&)> on_field;
};

// Evolves u0 with a decomposition hook on every snapshot and the diagnostics on every diag_every-th one.
inline FocusRun run_focusing(const RunConfig& cfg, const GroundContext& ctx, const DataSet& data, const QbLadder& ladder,
                             const F1Table& table, const FocusCallbacks& cb = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  FocusRun out;
  out.evolver = cfg.evolver;
  out.evolver.grad_Q2 = radial_grad_norm2(ctx.gs.Q);
  out.evolver.r0 = cfg.data.r0;
  const Grid g = data.u0.grid;
  const CutoffSet cuts(g);
  Decomposer dec(ladder, ctx.gs.Q);
  out.E0 = 0.5 * energy(data.u0);
  const double s0 = std::exp(3 * kPi / (4 * cfg.data.b0));
  ModState guess;
  guess.lambda = cfg.data.lambda0, guess.b = cfg.data.b0, guess.r = cfg.data.r0, guess.z = cfg.data.z0, guess.gamma = cfg.data.gamma0;
  double s_acc = 0.0, t_prev = 0.0, l_prev = 0.0;
  std::vector<double> lam_hist;
  long snap = 0;

  RunHooks hooks;
  hooks.on_snapshot = [&](const Snapshot& sn, const ComplexField& u) -> HookResult {
    const long idx = snap++;
    if (cb.on_field) cb.on_field(sn, u);
    Decomposition d;
    try {
      d = dec.decompose(u, guess);
    } catch (...) {
      ++out.decompose_failures;
      throw;
    }
    ModState& st = d.state;
    if (!out.states.empty()) s_acc += 0.5 * (sn.t - t_prev) * (1 / (l_prev * l_prev) + 1 / (st.lambda * st.lambda));
    st.s = s_acc;
    t_prev = sn.t, l_prev = st.lambda;
    guess = st;
    out.states.push_back({sn.t, st});
    lam_hist.push_back(st.lambda);
    if (idx % cfg.diag_every != 0) return {st.lambda, ""};

    DiagnosticsRecord r;
    r.t = sn.t, r.s = s_acc, r.decomposed = true;
    r.lambda = st.lambda, r.b = st.b, r.r = st.r, r.z = st.z, r.gamma = st.gamma;
    r.residuals = d.residuals, r.newton_iters = d.newton_iters;
    r.mass = mass(u);
    r.energy = 0.5 * energy(u);
    r.pz = momentum_z(u);
    r.eps_norm = eps_norm(d);
    try {
      const LyapounovTerms J = lyapounov(d, ladder, table, ctx.qmass, cfg.diag);
      r.J = J.J, r.f1 = J.f1, r.f2 = J.f2;
      out.J.push_back(J);
    } catch (const Error&) {
      r.J = r.f1 = r.f2 = std::numeric_limits<double>::quiet_NaN();
      out.J.push_back(LyapounovTerms{std::numeric_limits<double>::quiet_NaN()});
    }
    const auto ring = ring_concentration(u, st, 2.0 * ladder.R_at(st.b), ctx.qmass);
    r.ring_mass_fraction = ring.fraction, r.ring_inner = ring.inner;
    r.h1_global = sobolev_norm(u, 1.0);
    r.h1_local = sobolev_norm(cuts.chi * u, 1.0);
    if (cfg.diag_e3) {
      try {
        r.E3 = third_order_energy(u).E3;
      } catch (const Error&) {
      }
    }
    const ProfileBundle& B = table.nearest(st.b);
    const double Gam = std::exp(std::log(B.Gamma) * B.params.b / st.b);  // log Gamma ~ -c/b between nodes
    MonitorInput in;
    in.dec = &d, in.u = &u, in.cuts = &cuts, in.Gamma = Gam, in.E0 = out.E0, in.s = s0 + s_acc;
    in.lambda_history = lam_hist;
    out.hypotheses.push_back(hypothesis_monitor(in, cfg.diag));
    r.hyp_flags = flags_string(out.hypotheses.back());
    MassFluxTerms mf = mass_flux_terms(d, Gam, cfg.a);
    mf.s = s_acc;
    out.flux_terms.push_back(mf);
    if (out.flux_terms.size() >= 2) {
      const auto& p = out.flux_terms[out.flux_terms.size() - 2];
      if (mf.s > p.s) r.flux_out = (mf.F - p.F) / (mf.s - p.s);
    }
    out.records.push_back(r);
    if (cb.on_record) cb.on_record(r);
    return {st.lambda, ""};
  };

  out.tr = run(data.u0, out.evolver, hooks);
  out.conservation = conservation_report(out.tr, out.evolver);
  if (out.states.size() >= 3) {
    std::vector<std::pair<double, ModState>> v = out.states;
    out.dynamics = param_dynamics(v, [&](double b) {
      const ProfileBundle& B = table.nearest(b);
      return std::exp(std::log(B.Gamma) * B.params.b / b);
    });
  }
  std::vector<std::pair<double, double>> tl;
  for (const auto& [t, s] : out.states) tl.push_back({t, s.lambda});
  try {
    out.rate = rate_fit(tl);
    for (auto& r : out.records) r.rate_quantity = rate_quantity(r.lambda, out.rate->T_est, r.t);
  } catch (const Error& e) {
    out.rate_error = e.what();
  }
  if (out.flux_terms.size() >= 2) out.flux = mass_flux(out.flux_terms);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace rblw
