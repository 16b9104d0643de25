#pragma once

#include <cmath>

#include "rblw/grid.hpp"

namespace rblw {

// C^3 septic smoothstep on [0,1], with derivatives.
inline double smoothstep(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  const double t4 = t * t * t * t;
  return t4 * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t * t * t);
}
inline double smoothstep_d1(double t) {
  if (t <= 0.0 || t >= 1.0) return 0.0;
  const double u = t * (1.0 - t);
  return 140.0 * u * u * u;
}
inline double smoothstep_d2(double t) {
  if (t <= 0.0 || t >= 1.0) return 0.0;
  const double u = t * (1.0 - t);
  return 420.0 * u * u * (1.0 - 2.0 * t);
}
inline double smoothstep_d3(double t) {
  if (t <= 0.0 || t >= 1.0) return 0.0;
  const double u = t * (1.0 - t);
  const double s = 1.0 - 2.0 * t;
  return 840.0 * u * s * s - 840.0 * u * u;
}

// Ramp from 0 at x <= lo to 1 at x >= hi.
inline double ramp(double x, double lo, double hi) { return smoothstep((x - lo) / (hi - lo)); }
inline double ramp_d1(double x, double lo, double hi) { return smoothstep_d1((x - lo) / (hi - lo)) / (hi - lo); }

struct CutoffSet {
  RealField chi, chi0, psi_x;
  RealField dpsi_dr, dpsi_dz;
  const char* transition = "septic-smoothstep-C3";

  explicit CutoffSet(const Grid& g) : chi(g), chi0(g), psi_x(g), dpsi_dr(g), dpsi_dz(g) {
    for (std::size_t j = 0; j < g.nr; ++j)
      for (std::size_t k = 0; k < g.nz; ++k) {
        const double r = g.r(j), z = g.z(k);
        const double dx = r - 1.0, d = std::hypot(dx, z);
        chi(j, k) = ramp(d, 1.0 / 3.0, 2.0 / 3.0);
        chi0(j, k) = ramp(d, 1.0 / 8.0, 1.0 / 7.0);
        const double c = 1.0 - ramp(d, 0.5, 0.75);
        const double dc = -ramp_d1(d, 0.5, 0.75);
        psi_x(j, k) = (r + z) * c;
        const double er = d > 0 ? dx / d : 0.0, ez = d > 0 ? z / d : 0.0;
        dpsi_dr(j, k) = c + (r + z) * dc * er;
        dpsi_dz(j, k) = c + (r + z) * dc * ez;
      }
  }
};

}  // namespace rblw
