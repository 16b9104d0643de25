#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rblw/diagnostics.hpp"
#include "rblw/evolver.hpp"
#include "rblw/init_data.hpp"

namespace rblw {

// Flat key=value run configuration (grid.nr=512). '#' starts a comment.
struct RunConfig {
  std::size_t nr = 2048, nz = 2048;
  double r_max = 2.0, z_half = 1.0;
  double eta = 0.05, a = 0.6;
  std::vector<double> profile_b{0.35, 0.25, 0.2, 0.15, 0.1, 0.05};
  double ladder_lo = 0.1, ladder_hi = 0.32, ladder_db = 0.005;
  double f1_db = 0.01;
  DataParams data;
  int n_seeds = 8;
  bool tune_nu = true;
  EvolverConfig evolver;
  DiagConfig diag;
  int diag_every = 1;      // analyse every n-th snapshot
  bool diag_e3 = false;    // E_3 per snapshot (skipped when under-resolved)
  bool keep_snapshots = false;
  double gs_tol = 1e-10;
  std::uint64_t seed = 1;

  RunConfig() {
    evolver.dt0 = 0.01;
    evolver.cfl_mode = CflMode::LambdaAdaptive;
    evolver.t_max = 0.05;
    evolver.snapshot_stride = 25;
    evolver.stop_lambda = 0.005;
  }

  Grid grid() const { return Grid(nr, nz, r_max, z_half); }
  ProfileParams profile(double b) const {
    ProfileParams p;
    p.b = b, p.eta = eta, p.a = a;
    return p;
  }

  // Setters and printers keyed by name, in a fixed order for hashing.
  using Set = std::function<void(RunConfig&, const std::string&)>;
  using Get = std::function<std::string(const RunConfig&)>;
  static const std::vector<std::tuple<std::string, Set, Get>>& keys() {
    static const std::vector<std::tuple<std::string, Set, Get>> k = [] {
      std::vector<std::tuple<std::string, Set, Get>> v;
      auto num = [&](const char* name, auto member) {
        v.emplace_back(
            name, [member](RunConfig& c, const std::string& s) { c.*member = parse_num<std::remove_reference_t<decltype(c.*member)>>(s); },
            [member](const RunConfig& c) { return fmt(c.*member); });
      };
      auto sub = [&](const char* name, auto get_ref) {
        v.emplace_back(
            name, [get_ref](RunConfig& c, const std::string& s) { auto& r = get_ref(c); r = parse_num<std::remove_reference_t<decltype(r)>>(s); },
            [get_ref](const RunConfig& c) { return fmt(get_ref(const_cast<RunConfig&>(c))); });
      };
      num("grid.nr", &RunConfig::nr);
      num("grid.nz", &RunConfig::nz);
      num("grid.r_max", &RunConfig::r_max);
      num("grid.z_half", &RunConfig::z_half);
      num("profile.eta", &RunConfig::eta);
      num("profile.a", &RunConfig::a);
      v.emplace_back(
          "profile.b", [](RunConfig& c, const std::string& s) { c.profile_b = parse_list(s); },
          [](const RunConfig& c) {
            std::string o;
            for (double b : c.profile_b) o += (o.empty() ? "" : ",") + fmt(b);
            return o;
          });
      num("ladder.b_lo", &RunConfig::ladder_lo);
      num("ladder.b_hi", &RunConfig::ladder_hi);
      num("ladder.db", &RunConfig::ladder_db);
      num("ladder.f1_db", &RunConfig::f1_db);
      sub("data.b0", [](RunConfig& c) -> double& { return c.data.b0; });
      sub("data.lambda0", [](RunConfig& c) -> double& { return c.data.lambda0; });
      sub("data.r0", [](RunConfig& c) -> double& { return c.data.r0; });
      sub("data.z0", [](RunConfig& c) -> double& { return c.data.z0; });
      sub("data.gamma0", [](RunConfig& c) -> double& { return c.data.gamma0; });
      sub("data.nu", [](RunConfig& c) -> double& { return c.data.nu; });
      num("data.n_seeds", &RunConfig::n_seeds);
      num("data.tune_nu", &RunConfig::tune_nu);
      sub("evolver.dt0", [](RunConfig& c) -> double& { return c.evolver.dt0; });
      v.emplace_back(
          "evolver.cfl", [](RunConfig& c, const std::string& s) {
            if (s == "fixed") c.evolver.cfl_mode = CflMode::Fixed;
            else if (s == "lambda") c.evolver.cfl_mode = CflMode::LambdaAdaptive;
            else throw Error(ErrorKind::Validation, "evolver.cfl must be fixed or lambda");
          },
          [](const RunConfig& c) { return std::string(c.evolver.cfl_mode == CflMode::Fixed ? "fixed" : "lambda"); });
      sub("evolver.t_max", [](RunConfig& c) -> double& { return c.evolver.t_max; });
      sub("evolver.stride", [](RunConfig& c) -> int& { return c.evolver.snapshot_stride; });
      sub("evolver.sponge_strength", [](RunConfig& c) -> double& { return c.evolver.sponge_strength; });
      sub("evolver.sponge_width", [](RunConfig& c) -> double& { return c.evolver.sponge_width; });
      sub("evolver.sponge_axis", [](RunConfig& c) -> double& { return c.evolver.sponge_axis; });
      sub("evolver.filter_order", [](RunConfig& c) -> int& { return c.evolver.filter_order; });
      sub("evolver.stop_lambda", [](RunConfig& c) -> double& { return c.evolver.stop_lambda; });
      sub("evolver.stop_gradnorm", [](RunConfig& c) -> double& { return c.evolver.stop_gradnorm; });
      sub("evolver.max_steps", [](RunConfig& c) -> long& { return c.evolver.max_steps; });
      sub("diag.alpha_star", [](RunConfig& c) -> double& { return c.diag.alpha_star; });
      sub("diag.m", [](RunConfig& c) -> double& { return c.diag.m; });
      sub("diag.delta2", [](RunConfig& c) -> double& { return c.diag.delta2; });
      num("diag.every", &RunConfig::diag_every);
      num("diag.e3", &RunConfig::diag_e3);
      num("output.keep_snapshots", &RunConfig::keep_snapshots);
      num("ground_state.tol", &RunConfig::gs_tol);
      num("seed", &RunConfig::seed);
      return v;
    }();
    return k;
  }

  void set(const std::string& key, const std::string& value) {
    for (const auto& [k, s, g] : keys())
      if (k == key) {
        try {
          s(*this, value);
        } catch (const Error&) {
          throw;
        } catch (const std::exception&) {
          throw Error(ErrorKind::Validation, "bad value for " + key + ": '" + value + "'");
        }
        return;
      }
    throw Error(ErrorKind::Validation, "unknown config key '" + key + "'");
  }

  std::string dump() const {
    std::string o;
    for (const auto& [k, s, g] : keys()) o += k + "=" + g(*this) + "\n";
    return o;
  }

  // FNV-1a of the canonical dump.
  std::string hash() const {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : dump()) h = (h ^ c) * 1099511628211ull;
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
  }

  static RunConfig parse(std::istream& is, const std::string& origin = "config") {
    RunConfig c;
    std::string line;
    int ln = 0;
    while (std::getline(is, line)) {
      ++ln;
      if (auto p = line.find('#'); p != std::string::npos) line.erase(p);
      const auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r"), e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw Error(ErrorKind::Validation, origin + ":" + std::to_string(ln) + ": expected key=value");
      c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return c;
  }

  static RunConfig load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error(ErrorKind::Validation, "cannot read config " + path);
    return parse(is, path);
  }

  // Checks that need no profile solves. Throws Validation naming the first violation.
  void validate() const {
    const Grid g = grid();
    evolver.validate(g);
    if (!(eta > 0 && eta < 1)) throw Error(ErrorKind::Validation, "profile.eta must lie in (0,1)");
    if (!(a > 0)) throw Error(ErrorKind::Validation, "profile.a must be positive");
    if (!(ladder_lo > ladder_db && ladder_hi > ladder_lo)) throw Error(ErrorKind::Validation, "ladder needs db < b_lo < b_hi");
    if (!(data.b0 > ladder_lo && data.b0 < ladder_hi))
      throw Error(ErrorKind::Validation, "data.b0 must lie inside [ladder.b_lo, ladder.b_hi]");
    const double R = profile(data.b0).R(), h = std::max(g.dr, g.dz);
    if (data.lambda0 < 4.0 * h * R) {
      std::ostringstream os;
      os << "resolution guard: data.lambda0 = " << data.lambda0 << " < 4 max(dr,dz) R_b = " << 4.0 * h * R;
      throw Error(ErrorKind::Validation, os.str());
    }
    if (data.r0 - data.lambda0 * R <= 0 || data.r0 + data.lambda0 * R >= r_max * (1 - evolver.sponge_width) ||
        std::abs(data.z0) + data.lambda0 * R >= z_half * (1 - evolver.sponge_width))
      throw Error(ErrorKind::Validation, "profile support leaves the clean window of the box");
    if (n_seeds < 4) throw Error(ErrorKind::Validation, "data.n_seeds must be >= 4");
    if (diag_every < 1) throw Error(ErrorKind::Validation, "diag.every must be >= 1");
    if (!(diag.alpha_star > 0 && diag.m > 0 && diag.delta2 > 0)) throw Error(ErrorKind::Validation, "diag constants must be positive");
  }

 private:
  template <class T>
  static T parse_num(const std::string& s) {
    std::size_t pos = 0;
    T v{};
    if constexpr (std::is_same_v<T, bool>) {
      if (s == "1" || s == "true") return true;
      if (s == "0" || s == "false") return false;
      throw std::invalid_argument(s);
    } else if constexpr (std::is_floating_point_v<T>) {
      if (s == "inf") return std::numeric_limits<T>::infinity();
      v = T(std::stod(s, &pos));
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!s.empty() && s[0] == '-') throw std::invalid_argument(s);
      v = T(std::stoull(s, &pos));
    } else {
      v = T(std::stoll(s, &pos));
    }
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  }
  static std::vector<double> parse_list(const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) v.push_back(parse_num<double>(item));
    if (v.empty()) throw std::invalid_argument(s);
    return v;
  }
  template <class T>
  static std::string fmt(T x) {
    std::ostringstream os;
    if constexpr (std::is_same_v<T, bool>) os << (x ? "true" : "false");
    else {
      os.precision(17);
      os << x;
    }
    return os.str();
  }
};

}  // namespace rblw
