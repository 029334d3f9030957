#pragma once

// Multiphase flow through a production choke restriction.
//
// All quantities are SI internally: pressures in Pa, temperatures in K,
// areas in m², mass flow in kg/s and volumetric rates in m³/s at standard
// conditions. The process and dataset layers convert from bar / °C.

#include <optional>

namespace vfm {

struct FluidSpec {
  double rho_oil_sc = 850.0;    // kg/m³
  double rho_water_sc = 1000.0; // kg/m³
  double rho_gas_sc = 0.85;     // kg/m³
  double k = 1.3;               // gas heat-capacity ratio
  double r_gas = 500.0;         // J/(kg·K)
  double c_liq = 2000.0;        // J/(kg·K)
  double c_v = 1700.0;          // J/(kg·K)
  double c_p = 2200.0;          // J/(kg·K)

  void validate() const;
};

struct PhaseFractions {
  double eta_oil = 0.0;
  double eta_gas = 0.0;
  double eta_water = 0.0;

  void validate() const;
  double liquid() const { return eta_oil + eta_water; }
};

struct ChokeConditions {
  double p1 = 0.0;  // Pa
  double p2 = 0.0;  // Pa
  double t1 = 0.0;  // K
  double u = 0.0;   // opening, percent

  void validate() const;
};

enum class AreaKind { Linear, EqualPercentage, NeuralScaled };

struct ChokeParams {
  double c_d = 1.0;
  double a_max = 5e-4;        // m²
  double rangeability = 50.0; // equal-percentage R
  AreaKind area_kind = AreaKind::Linear;
  bool slip_enabled = false;

  void validate() const;
};

// Volume-weighted harmonic mixture of the oil and water densities.
// Throws Error(NoLiquid) when the fractions carry no liquid.
double liquid_density(const PhaseFractions& fr, const FluidSpec& fluid);

// Ideal gas (Z = 1).
double gas_specific_volume(double p, double t, const FluidSpec& fluid);

double polytropic_exponent(double x_g, const FluidSpec& fluid);

struct FixedPointOptions {
  double tolerance = 1e-8;
  int max_iterations = 200;
  bool bisection_fallback = true;
};

/// Critical (choked) throat-to-upstream pressure ratio.
///
/// Solves y = g(y) where
///   g(y) = [k/(k-1) + a1 (1-y)] / [k/(k-1) + n/2 + n a2 + (n/2) a2²],
///   a1 = (1-x) v_l / (x v_g1),  a2 = (1-x) v_l / (x v_g2),  v_g2 = v_g1 y^(-1/k).
/// g is decreasing in y, so the root is unique in (0, 1). The damped
/// iteration y <- (y + g(y))/2 is tried first; if it oscillates or runs out
/// of iterations, bisection on y - g(y) takes over (unless disabled, in which
/// case ConvergenceError carries the last iterate).
double critical_pressure_ratio(double x_g, double v_g1, double v_l, double k, double n,
                               const FixedPointOptions& options = {});

// g(y) above; exposed for residual checks.
double critical_ratio_map(double y, double x_g, double v_g1, double v_l, double k, double n);

double area_linear(double u, const ChokeParams& p);
double area_equal_percentage(double u, const ChokeParams& p);

// c_d-scaled flow area for the configured characteristic. NeuralScaled
// returns the linear base area; the network multiplier is applied by the model.
double effective_area(double u, const ChokeParams& p);

double slip_ratio(double x_g, double rho_g2, double rho_l);

double mixture_density_throat(double x_g, double v_g2, double v_l,
                              std::optional<double> slip = std::nullopt);

/// Mass flow through the restriction for the given flow area.
///
/// Two-phase branch: y = max(p2/p1, y_c), so the flow is flat in p2 below the
/// critical ratio. A non-positive radicand (p2 >= p1, or rounding near y = 1)
/// yields zero flow. Pure-liquid branch (eta_gas = 0) is the incompressible
/// orifice equation.
double sachdeva_mass_flow(const ChokeConditions& cond, const PhaseFractions& fr,
                          const FluidSpec& fluid, const ChokeParams& params, double area);

struct VolumetricRates {
  double q_oil = 0.0;
  double q_gas = 0.0;
  double q_water = 0.0;
  double q_total = 0.0;
};

VolumetricRates split_volumetric(double m_dot, const PhaseFractions& fr, const FluidSpec& fluid);

// Σ η_i / ρ_i,SC, i.e. q_total per unit mass flow.
double standard_volume_per_mass(const PhaseFractions& fr, const FluidSpec& fluid);

}  // namespace vfm
