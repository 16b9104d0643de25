#include <fftw3.h>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <sstream>

#include "rblw/config.hpp"
#include "rblw/io.hpp"
#include "rblw/pipeline.hpp"
#include "rblw/selftest.hpp"
#include "rblw/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace rblw;

namespace {

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

json versions() {
  std::ostringstream eig;
  eig << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION;
  return {{"rblw", RBLW_VERSION},
          {"fftw", std::string(fftw_version)},
          {"eigen", eig.str()},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
          {"cli11", CLI11_VERSION}};
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream os(p);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + p.string());
  os << j.dump(2) << '\n';
}

json check_json(const Check& c) {
  return {{"name", c.name}, {"value", c.value}, {"threshold", c.threshold}, {"pass", c.pass}, {"mode", c.mode}, {"note", c.note}};
}

struct Session {
  std::string command;
  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir = "rblw_out";
  RunConfig cfg;
  std::string started;
  std::string stop_reason = "completed";
  json extra = json::object();

  void load() {
    cfg = config_path.empty() ? RunConfig() : RunConfig::load(config_path);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw Error(ErrorKind::Validation, "--set expects key=value, got '" + s + "'");
      cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
  }
  fs::path out() const { return fs::path(out_dir); }
  void prepare_out() const {
    std::error_code ec;
    fs::create_directories(out(), ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create " + out_dir + ": " + ec.message());
  }
  void manifest(int code) const {
    json m;
    m["command"] = command;
    m["config_hash"] = cfg.hash();
    m["start"] = started;
    m["end"] = utc_now();
    m["stop_reason"] = stop_reason;
    m["exit_code"] = code;
    m["versions"] = versions();
    m["config_file"] = config_path;
    for (const auto& x : extra.items()) m[x.key()] = x.value();
    write_json(out() / "manifest.json", m);
    std::ofstream(out() / "config.cfg") << cfg.dump();
  }
};

ProfileParams base_params(const RunConfig& c) { return c.profile(0.2); }

// ---- ground-state

int cmd_ground_state(Session& S, double tol) {
  S.prepare_out();
  const auto t0 = std::chrono::steady_clock::now();
  const GroundState gs = solve_Q(tol);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_profile_csv((S.out() / "Q.csv").string(), gs.Q);
  write_profile((S.out() / "Q.rblwp").string(), gs.Q);
  json r;
  r["tol"] = tol;
  r["Q0"] = std::real(gs.Q[0]);
  r["Q0_shooting"] = gs.a_shoot;
  r["mass"] = radial_norm2(gs.Q);
  r["grad_norm2"] = radial_grad_norm2(gs.Q);
  r["quartic"] = radial_quartic(gs.Q);
  r["energy"] = radial_energy(gs.Q);
  r["residual_sup"] = gs.residual;
  r["newton_iters"] = gs.newton_iters;
  r["decay_slope"] = decay_check(gs.Q);
  r["rho_max"] = gs.Q.rho_max();
  r["drho"] = gs.Q.drho;
  r["seconds"] = secs;
  write_json(S.out() / "ground_state.json", r);
  std::cout << "Q(0) = " << std::setprecision(12) << std::real(gs.Q[0]) << "  mass = " << radial_norm2(gs.Q)
            << "  residual = " << gs.residual << "\n";
  if (!(gs.residual < tol)) {
    S.stop_reason = "residual above tolerance";
    return 3;
  }
  return 0;
}

// ---- profiles

json profile_ladder(const RunConfig& cfg, const GroundContext& ctx, const fs::path& csv) {
  std::ofstream os(csv);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + csv.string());
  os << "b,Qb0,mass_excess,energy,Gamma,sup_Psi\n" << std::setprecision(12);
  json rows = json::array();
  std::vector<double> bs, gam;
  for (double b : cfg.profile_b) {
    const ProfileBundle B = build_bundle(cfg.profile(b), ctx.gs.Q, ctx.qmass);
    const ProfileReport r = profile_report(B, ctx.gs.Q);
    os << b << ',' << r.Qb0 << ',' << r.mass_excess << ',' << r.energy << ',' << r.Gamma << ',' << r.psi_sup << '\n';
    rows.push_back({{"b", b},
                    {"R", r.R},
                    {"Qb0", r.Qb0},
                    {"mass_excess", r.mass_excess},
                    {"energy", r.energy},
                    {"energy_exponent", r.energy_exponent},
                    {"energy_bound", std::exp(-0.5 * kPi / b)},
                    {"Gamma", r.Gamma},
                    {"log_Gamma", r.log_Gamma},
                    {"A_in_window", r.A_in_window},
                    {"dbQ_sup", r.dbQ_sup},
                    {"momentum", r.momentum},
                    {"sup_Psi", r.psi_sup},
                    {"sup_rho2_Psi", r.rho2_psi_sup},
                    {"zeta_grad2", r.zeta_grad2},
                    {"F_scaled", r.F_scaled},
                    {"f1_tilde", r.f1_tilde}});
    if (r.Gamma > 0) bs.push_back(b), gam.push_back(r.Gamma);
  }
  json j;
  j["ladder"] = rows;
  if (bs.size() >= 2) {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < bs.size(); ++i) x.push_back(1.0 / bs[i]), y.push_back(std::log(gam[i]));
    j["log_Gamma_vs_inv_b_slope"] = fit_slope(x, y);
    j["slope_over_pi"] = fit_slope(x, y) / kPi;
  }
  const ProfileParams base = base_params(cfg);
  const double d1 = estimate_d0(0.1, 0.15, ctx.gs.Q, ctx.qmass, base), d2 = estimate_d0(0.08, 0.12, ctx.gs.Q, ctx.qmass, base);
  j["d0"] = {{"b_0.10_0.15", d1}, {"b_0.08_0.12", d2}, {"relative_spread", std::abs(d1 - d2) / std::abs(d1)}};
  return j;
}

int cmd_profiles(Session& S, const std::vector<double>& bs) {
  if (!bs.empty()) S.cfg.profile_b = bs;
  S.prepare_out();
  GroundContext ctx(S.cfg.gs_tol);
  json j = profile_ladder(S.cfg, ctx, S.out() / "profiles.csv");
  write_json(S.out() / "profiles.json", j);
  std::ifstream is(S.out() / "profiles.csv");
  std::cout << is.rdbuf();
  return 0;
}

// ---- make-data

json admissibility_json(const DataSet& d) {
  json j;
  j["regime"] = d.report.regime;
  j["desk_ok"] = d.report.desk_ok;
  j["nu"] = d.params.nu;
  j["C_eta"] = d.C_eta;
  j["f_h3_norm"] = d.f.h3_norm;
  j["Gamma_b0"] = d.bundle.Gamma;
  j["params"] = {{"b0", d.params.b0},         {"lambda0", d.params.lambda0}, {"r0", d.params.r0},
                 {"z0", d.params.z0},         {"gamma0", d.params.gamma0},   {"alpha_star", d.params.alpha_star}};
  j["checks"] = json::array();
  for (const auto& c : d.report.checks) j["checks"].push_back(check_json(c));
  return j;
}

int cmd_make_data(Session& S, std::optional<double> b0, std::optional<double> l0, std::optional<double> alpha,
                  const std::string& grid, std::string out) {
  if (b0) S.cfg.data.b0 = *b0;
  if (l0) S.cfg.data.lambda0 = *l0;
  if (alpha) S.cfg.data.alpha_star = *alpha, S.cfg.diag.alpha_star = *alpha;
  if (!grid.empty()) {
    const auto c = grid.find(',');
    if (c == std::string::npos) throw Error(ErrorKind::Validation, "--grid expects nr,nz");
    S.cfg.set("grid.nr", grid.substr(0, c));
    S.cfg.set("grid.nz", grid.substr(c + 1));
  }
  S.cfg.validate();
  S.prepare_out();
  if (out.empty()) out = (S.out() / "u0.rblw").string();
  GroundContext ctx(S.cfg.gs_tol);
  const DataSet d = prepare_data(S.cfg, ctx);
  write_snapshot(out, d.u0);
  json j = admissibility_json(d);
  j["snapshot"] = out;
  j["mass"] = mass(d.u0);
  j["energy"] = 0.5 * energy(d.u0);
  write_json(S.out() / "admissibility.json", j);
  for (const auto& c : d.report.checks)
    std::cout << (c.pass ? "ok   " : "FAIL ") << std::setw(28) << std::left << c.name << " " << c.value << " vs " << c.threshold
              << " [" << c.mode << "]\n";
  std::cout << "desk-scale admissible: " << (d.report.desk_ok ? "yes" : "no") << "\nwrote " << out << "\n";
  return 0;
}

// ---- evolve

int cmd_evolve(Session& S, const std::string& in, bool fast_plans) {
  if (!in.empty() && !fs::exists(in)) throw Error(ErrorKind::Validation, "input snapshot '" + in + "' does not exist");
  S.cfg.validate();
  deterministic_plans() = !fast_plans;
  S.prepare_out();
  const RunConfig& cfg = S.cfg;
  GroundContext ctx(cfg.gs_tol);
  const ProfileParams base = base_params(cfg);
  const QbLadder ladder(ctx.gs.Q, cfg.ladder_lo, cfg.ladder_hi, cfg.ladder_db, base);
  const F1Table table(ctx.gs.Q, ctx.qmass, 0.02, cfg.ladder_hi, cfg.f1_db, base);
  DataSet data = prepare_data(cfg, ctx);
  if (!in.empty()) {
    ComplexField u = read_snapshot(in);
    const Grid& g = data.u0.grid;
    if (u.grid.nr != g.nr || u.grid.nz != g.nz || u.grid.r_max != g.r_max || u.grid.z_half != g.z_half)
      throw Error(ErrorKind::Validation, "snapshot grid does not match grid.* in the config");
    data.u0 = std::move(u);
  }
  std::ofstream rec(S.out() / "records.csv");
  if (!rec) throw Error(ErrorKind::Io, "cannot write records.csv");
  rec << DiagnosticsRecord::csv_header() << '\n';
  long n_snap = 0;
  std::optional<ComplexField> last;
  FocusCallbacks cb;
  cb.on_record = [&](const DiagnosticsRecord& r) {
    rec << r.csv_row() << '\n';
    rec.flush();
    std::cout << "t=" << std::setprecision(6) << r.t << " lambda=" << r.lambda << " b=" << r.b << " J=" << r.J << "\n" << std::flush;
  };
  cb.on_field = [&](const Snapshot&, const ComplexField& u) {
    char name[32];
    std::snprintf(name, sizeof name, "snap_%05ld.rblw", n_snap);
    if (cfg.keep_snapshots || n_snap == 0) write_snapshot((S.out() / name).string(), u);
    ++n_snap;
    last = u;
  };
  const FocusRun R = run_focusing(cfg, ctx, data, ladder, table, cb);
  if (last) write_snapshot((S.out() / "snap_final.rblw").string(), *last);

  json sum;
  sum["stop_reason"] = to_string(R.tr.stop);
  sum["detail"] = R.tr.detail;
  sum["t_end"] = R.tr.t_end;
  sum["steps"] = R.tr.steps;
  sum["E0"] = R.E0;
  sum["seconds"] = R.seconds;
  sum["decompose_failures"] = R.decompose_failures;
  sum["conservation"] = {{"max_mass_drift", R.conservation.max_mass},
                         {"max_energy_drift", R.conservation.max_energy},
                         {"max_pz_drift", R.conservation.max_pz},
                         {"flagged", R.conservation.flagged}};
  if (R.dynamics)
    sum["dynamics"] = {{"mean_rel_law", R.dynamics->mean_rel_law},
                       {"max_speed", R.dynamics->max_speed},
                       {"frac_within", R.dynamics->frac_within}};
  if (R.rate)
    sum["rate_fit"] = {{"T_est", R.rate->T_est},
                       {"c_est", R.rate->c_est},
                       {"trend_slope", R.rate->trend_slope},
                       {"T_ss", R.rate->T_ss},
                       {"trend_slope_ss", R.rate->trend_slope_ss},
                       {"fit_residual", R.rate->fit_residual}};
  else
    sum["rate_fit_error"] = R.rate_error;
  sum["mass_flux_pass_rate"] = R.flux.pass_rate;
  sum["admissibility"] = admissibility_json(data);
  write_json(S.out() / "summary.json", sum);
  S.stop_reason = to_string(R.tr.stop);
  S.extra["snapshots"] = n_snap;
  std::cout << "stop: " << S.stop_reason << " at t=" << R.tr.t_end << " after " << R.tr.steps << " steps\n";
  return R.tr.stop == StopReason::NumericalBlowup ? 3 : 0;
}

// ---- analyze

struct Table {
  std::vector<std::string> head;
  std::vector<std::vector<std::string>> rows;
  int col(const std::string& n) const {
    for (std::size_t i = 0; i < head.size(); ++i)
      if (head[i] == n) return int(i);
    throw Error(ErrorKind::Validation, "records.csv lacks column " + n);
  }
  double num(std::size_t r, const std::string& n) const {
    const std::string& s = rows[r][std::size_t(col(n))];
    if (s == "NA" || s.empty()) return std::numeric_limits<double>::quiet_NaN();
    return std::stod(s);
  }
  const std::string& str(std::size_t r, const std::string& n) const { return rows[r][std::size_t(col(n))]; }
};

Table read_csv(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw Error(ErrorKind::Validation, "cannot read " + p.string());
  Table t;
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> v;
    std::stringstream ss(l);
    std::string x;
    while (std::getline(ss, x, ',')) v.push_back(x);
    if (!l.empty() && l.back() == ',') v.push_back("");
    return v;
  };
  if (!std::getline(is, line)) throw Error(ErrorKind::Validation, p.string() + " is empty");
  t.head = split(line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto v = split(line);
    if (v.size() != t.head.size()) throw Error(ErrorKind::Validation, "ragged row in " + p.string());
    t.rows.push_back(std::move(v));
  }
  return t;
}

struct Plot {
  std::ofstream os;
  explicit Plot(const fs::path& p) : os(p) {
    os << "x,y,series\n" << std::setprecision(12);
  }
  void add(double x, double y, const std::string& s) {
    if (std::isfinite(x) && std::isfinite(y)) os << x << ',' << y << ',' << s << '\n';
  }
};

int cmd_analyze(Session& S, std::string run_dir, bool with_profiles) {
  if (run_dir.empty()) run_dir = S.out_dir;
  const fs::path rd(run_dir);
  if (S.config_path.empty() && fs::exists(rd / "config.cfg")) {
    S.cfg = RunConfig::load((rd / "config.cfg").string());
    for (const auto& s : S.sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw Error(ErrorKind::Validation, "--set expects key=value");
      S.cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
  }
  const Table T = read_csv(rd / "records.csv");
  if (T.rows.size() < 3) throw Error(ErrorKind::Validation, "records.csv has fewer than three rows");
  S.prepare_out();
  const GroundContext ctx(S.cfg.gs_tol);
  fs::create_directories(S.out() / "plotdata");
  const std::size_t n = T.rows.size();
  json rep;
  rep["run_dir"] = run_dir;
  rep["records"] = n;

  std::vector<std::pair<double, double>> tl;
  std::vector<std::pair<double, ModState>> states;
  for (std::size_t i = 0; i < n; ++i) {
    if (T.str(i, "decomposed") != "1") continue;
    ModState m;
    m.lambda = T.num(i, "lambda"), m.b = T.num(i, "b"), m.r = T.num(i, "r"), m.z = T.num(i, "z"), m.gamma = T.num(i, "gamma");
    m.s = T.num(i, "s");
    tl.push_back({T.num(i, "t"), m.lambda});
    states.push_back({T.num(i, "t"), m});
  }
  std::optional<RateFit> rf;
  try {
    rf = rate_fit(tl);
    rep["rate_fit"] = {{"T_est", rf->T_est},
                       {"c_est", rf->c_est},
                       {"c_quartiles", {rf->c_lo, rf->c_hi}},
                       {"c_reference", std::sqrt(2 * kPi / ctx.qmass)},
                       {"fit_window", {rf->t_lo, rf->t_hi}},
                       {"fit_residual", rf->fit_residual},
                       {"trend_slope", rf->trend_slope},
                       {"T_ss", rf->T_ss},
                       {"trend_slope_ss", rf->trend_slope_ss},
                       {"regime", std::abs(rf->trend_slope) < std::abs(rf->trend_slope_ss) ? "log-log" : "self-similar"}};
  } catch (const Error& e) {
    rep["rate_fit"] = {{"error", e.what()}};
  }
  if (states.size() >= 3) {
    const auto d = param_dynamics(states);
    rep["dynamics"] = {{"mean_rel_law", d.mean_rel_law}, {"max_speed", d.max_speed}};
    Plot p(S.out() / "plotdata" / "law.csv");
    for (const auto& r : d.rows) p.add(r.s, r.lam_s_over_lam, "lambda_s/lambda"), p.add(r.s, r.law_residual, "law_residual");
  }

  // Trends and per-criterion summaries straight from the records.
  const double l0 = T.num(0, "lambda"), l1 = T.num(n - 1, "lambda");
  const double h1g0 = T.num(0, "h1_global"), h1g1 = T.num(n - 1, "h1_global");
  const double h1l0 = T.num(0, "h1_local");
  double h1l_max = h1l0, ring_dev = 0.0;
  int J_ok = 0, J_pairs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    h1l_max = std::max(h1l_max, T.num(i, "h1_local"));
    ring_dev = std::max(ring_dev, std::abs(T.num(i, "ring_inner") - ctx.qmass));
    if (i > 0) {
      const double a = T.num(i - 1, "J"), b = T.num(i, "J");
      if (std::isfinite(a) && std::isfinite(b)) ++J_pairs, J_ok += b <= a;
    }
  }
  rep["trends"] = {{"lambda_ratio", l0 / l1},
                   {"final_offset", std::hypot(T.num(n - 1, "r") - 1.0, T.num(n - 1, "z"))},
                   {"h1_global_growth", h1g1 / h1g0},
                   {"h1_local_growth", h1l_max / h1l0},
                   {"ring_max_deviation", ring_dev},
                   {"J_nonincreasing_fraction", J_pairs ? double(J_ok) / J_pairs : 0.0},
                   {"mass_drift", std::abs(T.num(n - 1, "mass") / T.num(0, "mass") - 1.0)}};

  // Pass fraction of each hypothesis flag.
  std::map<std::string, std::pair<int, int>> flags;
  for (std::size_t i = 0; i < n; ++i) {
    std::stringstream ss(T.str(i, "hyp_flags"));
    std::string item;
    while (std::getline(ss, item, ';')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) continue;
      auto& f = flags[item.substr(0, eq)];
      f.second += 1;
      f.first += item.substr(eq + 1) == "1";
    }
  }
  json fl = json::object();
  for (const auto& [k, v] : flags) fl[k] = double(v.first) / v.second;
  rep["hypothesis_pass_fraction"] = fl;

  // Snapshots present in the run directory.
  json snaps = json::array();
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(rd))
    if (e.path().extension() == ".rblw") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const ComplexField u = read_snapshot(f.string());
    snaps.push_back({{"file", f.filename().string()}, {"mass", mass(u)}, {"energy", 0.5 * energy(u)}, {"h1", sobolev_norm(u, 1.0)}});
  }
  rep["snapshots"] = snaps;

  if (with_profiles) {
    rep["profiles"] = profile_ladder(S.cfg, ctx, S.out() / "plotdata" / "profile_ladder_table.csv");
    Plot p(S.out() / "plotdata" / "gamma_ladder.csv");
    for (const auto& r : rep["profiles"]["ladder"]) p.add(1.0 / r["b"].get<double>(), r["log_Gamma"].get<double>(), "log_Gamma");
  }

  {
    Plot p(S.out() / "plotdata" / "lambda.csv");
    for (std::size_t i = 0; i < n; ++i) p.add(T.num(i, "t"), T.num(i, "lambda"), "lambda");
  }
  {
    Plot p(S.out() / "plotdata" / "modulation.csv");
    for (std::size_t i = 0; i < n; ++i) {
      const double s = T.num(i, "s");
      p.add(s, T.num(i, "b"), "b");
      p.add(s, T.num(i, "r"), "r");
      p.add(s, T.num(i, "z"), "z");
      p.add(s, T.num(i, "eps_norm"), "eps_norm");
    }
  }
  {
    Plot p(S.out() / "plotdata" / "lyapounov.csv");
    for (std::size_t i = 0; i < n; ++i) {
      p.add(T.num(i, "s"), T.num(i, "J"), "J");
      p.add(T.num(i, "s"), T.num(i, "f1"), "f1");
    }
  }
  {
    Plot p(S.out() / "plotdata" / "norms.csv");
    for (std::size_t i = 0; i < n; ++i) {
      p.add(T.num(i, "t"), T.num(i, "h1_global"), "h1_global");
      p.add(T.num(i, "t"), T.num(i, "h1_local"), "h1_local");
      p.add(T.num(i, "t"), T.num(i, "ring_inner"), "ring_mass");
    }
  }
  {
    Plot p(S.out() / "plotdata" / "conservation.csv");
    const double m0 = T.num(0, "mass"), e0 = T.num(0, "energy");
    for (std::size_t i = 0; i < n; ++i) {
      p.add(T.num(i, "t"), T.num(i, "mass") / m0 - 1.0, "mass_drift");
      p.add(T.num(i, "t"), T.num(i, "energy") - e0, "energy_change");
    }
  }
  if (rf) {
    Plot p(S.out() / "plotdata" / "rate.csv");
    for (const auto& [t, l] : tl) {
      const double tau = rf->T_est - t;
      if (!(tau > 0) || std::abs(std::log(tau)) <= 1.0) continue;
      const double x = std::log(std::log(std::abs(std::log(tau))));
      p.add(x, std::log(rate_quantity(l, rf->T_est, t)), "loglog");
      if (rf->T_ss > t) p.add(x, std::log(l / std::sqrt(rf->T_ss - t)), "self_similar");
    }
  }
  write_json(S.out() / "report.json", rep);
  std::cout << rep.dump(2) << '\n';
  return 0;
}

// ---- selftest

int cmd_selftest(Session& S) {
  int fails = 0;
  const auto v = run_selftest([&](const SelfCheck& c) {
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << "  (" << c.value << " <= " << c.threshold << ")";
    if (!c.error.empty()) std::cout << "  " << c.error;
    std::cout << '\n' << std::flush;
    fails += !c.pass;
  });
  std::cout << v.size() - std::size_t(fails) << "/" << v.size() << " checks passed\n";
  S.stop_reason = fails ? "checks failed" : "completed";
  return fails ? 3 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rblw: ring blowup of the cylindrical cubic NLS"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  Session S;
  app.add_option("--config", S.config_path, "key=value run configuration file");
  app.add_option("--set", S.sets, "override one config key (key=value), repeatable");
  app.add_option("--out-dir", S.out_dir, "output directory")->capture_default_str();
  app.set_version_flag("--version", RBLW_VERSION);

  double tol = 1e-10;
  auto* gs = app.add_subcommand("ground-state", "solve for Q and write Q.csv with a report");
  gs->add_option("--tol", tol, "residual tolerance")->capture_default_str();

  std::vector<double> pb;
  auto* pr = app.add_subcommand("profiles", "profile ladder table: b, Q_b(0), mass excess, E, Gamma_b, sup|Psi_b|");
  pr->add_option("--b", pb, "b values (overrides profile.b)")->delimiter(',');

  std::optional<double> b0, l0, alpha;
  std::string grid, out;
  auto* md = app.add_subcommand("make-data", "assemble u0 and its admissibility report");
  md->add_option("--b0", b0);
  md->add_option("--lambda0", l0);
  md->add_option("--alpha-star", alpha);
  md->add_option("--grid", grid, "nr,nz");
  md->add_option("--out", out, "snapshot path (default <out-dir>/u0.rblw)");

  std::string in;
  bool fast = false;
  auto* ev = app.add_subcommand("evolve", "focusing run with records.csv and snapshots");
  ev->add_option("--in", in, "initial snapshot (default: assembled from the config)");
  ev->add_flag("--fast-plans", fast, "measured FFT plans: faster, but reruns are not bit-identical");

  std::string run_dir;
  bool no_profiles = false;
  auto* an = app.add_subcommand("analyze", "fits and plot data from a run directory");
  an->add_option("--run-dir", run_dir, "directory written by evolve (default: --out-dir)");
  an->add_flag("--no-profiles", no_profiles, "skip the Gamma_b ladder and d0");

  auto* st = app.add_subcommand("selftest", "closed-form and symmetry checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    const bool bad_value = dynamic_cast<const CLI::ConversionError*>(&e) || dynamic_cast<const CLI::ValidationError*>(&e);
    return bad_value ? 2 : 64;
  }

  S.started = utc_now();
  S.command = app.get_subcommands().front()->get_name();
  int code = 0;
  bool write_manifest = true;
  try {
    S.load();
    if (*gs) code = cmd_ground_state(S, tol);
    else if (*pr) code = cmd_profiles(S, pb);
    else if (*md) code = cmd_make_data(S, b0, l0, alpha, grid, out);
    else if (*ev) code = cmd_evolve(S, in, fast);
    else if (*an) code = cmd_analyze(S, run_dir, !no_profiles);
    else if (*st) {
      code = cmd_selftest(S);
      write_manifest = fs::exists(S.out());
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    code = exit_code_for(e.kind());
    S.stop_reason = e.what();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    code = 3;
    S.stop_reason = e.what();
  }
  if (write_manifest && fs::exists(S.out())) {
    try {
      S.manifest(code);
    } catch (const std::exception& e) {
      std::cerr << "warning: manifest not written: " << e.what() << '\n';
    }
  }
  return code;
}
