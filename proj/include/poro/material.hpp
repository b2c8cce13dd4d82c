#pragma once

// Material-point laws: J2 elasto-plastic return mapping with piecewise-linear
// hardening, ductile damage initiation, and the two damage evolution laws
// (strain-exponential and fracture-energy based).

#include "poro/voigt.hpp"

#include <utility>
#include <vector>

namespace poro {

enum class DamageLaw { Exponential, Energy };

struct MaterialParams {
  double young = 5.70e4;   // MPa
  double poisson = 0.33;
  // (equivalent plastic strain, yield stress MPa); first row at ebar = 0,
  // strictly increasing abscissa, flat extrapolation beyond the last row.
  std::vector<std::pair<double, double>> hardening = {
      {0.0, 170.0}, {0.02, 220.0}, {0.067, 240.0}};
  double eps_d = 0.05;     // damage-initiation equivalent plastic strain
  double alpha = 0.0;      // exponential-law evolution rate (>= 0)
  double eps_f = 6.67e-2;  // fracture strain
  double g_f = 19.2;       // fracture energy, N/mm (config value in N/m / 1000)
  DamageLaw law = DamageLaw::Exponential;

  double shear() const { return young / (2.0 * (1.0 + poisson)); }
  double bulk() const { return young / (3.0 * (1.0 - 2.0 * poisson)); }

  // Piecewise-linear yield stress and local hardening slope at ebar.
  std::pair<double, double> yield(double ebar) const;

  // Throws std::invalid_argument if the parameter invariants are violated.
  void validate() const;
};

// Full history state at an integration point.
struct IpState {
  Vec6 strain = Vec6::Zero();       // total strain (engineering Voigt)
  Vec6 eps_pl = Vec6::Zero();       // plastic strain (engineering Voigt)
  double ebar_pl = 0.0;             // equivalent plastic strain
  double dlambda = 0.0;             // last accepted implicit multiplier increment
  Vec6 deps_pl_n = Vec6::Zero();    // last accepted implicit plastic increment
  Vec6 deps_pl_nm1 = Vec6::Zero();  // the one before
  double damage = 0.0;              // D in [0,1]
  double omega_d = 0.0;             // damage initiation variable
  bool initiated = false;
  bool ruptured = false;
  double u_pl = 0.0;                // equivalent plastic displacement (mm)
  double dissipated = 0.0;          // post-initiation energy (N/mm)
  double sy_last = 0.0;             // yield stress at last accepted state
};

struct StressReturn {
  Vec6 stress = Vec6::Zero();    // updated stress (damaged when D > 0)
  Vec6 stress0 = Vec6::Zero();   // reference (undamaged) stress
  Mat6 c_alg = Mat6::Zero();     // algorithmic tangent
  double dlambda = 0.0;          // this update's multiplier increment
  Vec6 deps_pl = Vec6::Zero();   // this update's plastic strain increment
  double q_trial = 0.0;          // trial von Mises stress
  double f_trial = 0.0;          // trial yield function value
  IpState state;                 // updated state (histories not yet shifted)
};

Mat6 elastic_tangent(const MaterialParams& p);

// Implicit backward-Euler radial return for the strain increment d_eps
// (engineering Voigt). Damage is not applied here: stress == stress0.
StressReturn return_map_j2(const MaterialParams& p, const IpState& state,
                           const Vec6& d_eps);

// Damage initiation per the ductile criterion. Returns (omega_d, initiated);
// once initiated a state stays initiated.
std::pair<double, bool> damage_initiation(const MaterialParams& p,
                                          const IpState& state);

// Exponential evolution law evaluated at ebar (>= eps_d); raw value, no clamp.
double damage_evolve_exponential(const MaterialParams& p, double ebar);

// Energy law D(dissipated) without the rupture cutoff.
double energy_to_damage(double dissipated, double g_f);

// Advance the energy-law state over a step: accumulates u_pl and the
// trapezoidal dissipation, updates D, and fires the 0.99 G_f rupture cutoff.
// d_ebar is the step's equivalent plastic strain increment, sy_new the yield
// stress at the end of the step.
void damage_evolve_energy(const MaterialParams& p, double l_e, double d_ebar,
                          double sy_new, IpState& state);

// Local damage update (law dispatch) applied after a plastic return;
// maintains monotone D / omega_d and the rupture flag.
void update_damage_local(const MaterialParams& p, double l_e, double d_ebar,
                         IpState& state);

// Slope of the effective damaged stress-plastic-strain curve,
// d[(1-D(e)) Sy(e)]/de, for the active law (used by Eq-19-style tangents).
double softening_modulus(const MaterialParams& p, double l_e, double ebar,
                         double damage);

// Algorithmic tangent of the damaged implicit update (DNS oracle only):
// (1-D) C_el minus the rank-one softening term built from S0 x S0.
Mat6 implicit_damage_tangent(const MaterialParams& p, double l_e,
                             const IpState& state, const StressReturn& ret);

// Residual stiffness factor applied to ruptured points instead of deletion.
inline constexpr double kRupturedStiffnessFactor = 1e-6;

} // namespace poro
