#include "vfm/choke.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vfm/error.hpp"

namespace vfm {

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::InvalidInput, what); }

bool in_unit_interval(double v) { return v >= 0.0 && v <= 1.0; }

}  // namespace

void FluidSpec::validate() const {
  if (!(rho_oil_sc > 0 && rho_water_sc > 0 && rho_gas_sc > 0)) invalid("fluid: densities must be positive");
  if (!(k > 1.0)) invalid("fluid: k must exceed 1");
  if (!(c_v > 0 && c_p > c_v)) invalid("fluid: require c_p > c_v > 0");
  if (!(c_liq > 0)) invalid("fluid: c_liq must be positive");
  if (std::abs(r_gas - (c_p - c_v)) > 1e-9 * std::abs(r_gas)) invalid("fluid: r_gas must equal c_p - c_v");
}

void PhaseFractions::validate() const {
  if (!in_unit_interval(eta_oil)) invalid("eta_oil outside [0,1]");
  if (!in_unit_interval(eta_gas)) invalid("eta_gas outside [0,1]");
  if (!in_unit_interval(eta_water)) invalid("eta_water outside [0,1]");
  if (std::abs(eta_oil + eta_gas + eta_water - 1.0) > 1e-9)
    throw Error(ErrorCode::FractionsExceedOne, "mass fractions do not sum to one");
}

void ChokeConditions::validate() const {
  if (!(p1 > 0)) invalid("p1 must be positive");
  if (!(p2 > 0)) invalid("p2 must be positive");
  if (!(t1 > 0)) invalid("t1 must be positive");
  if (!(u >= 0 && u <= 100)) invalid("u outside [0,100]");
}

void ChokeParams::validate() const {
  if (!(c_d > 0 && c_d <= 2)) invalid("c_d outside (0,2]");
  if (!(a_max > 0)) invalid("a_max must be positive");
  if (!(rangeability > 1)) invalid("rangeability must exceed 1");
}

double liquid_density(const PhaseFractions& fr, const FluidSpec& fluid) {
  const double liquid = fr.liquid();
  if (!(liquid > 0)) throw Error(ErrorCode::NoLiquid, "no-liquid");
  return liquid / (fr.eta_oil / fluid.rho_oil_sc + fr.eta_water / fluid.rho_water_sc);
}

double gas_specific_volume(double p, double t, const FluidSpec& fluid) {
  if (!(p > 0) || !(t > 0)) invalid("gas_specific_volume: p and t must be positive");
  return fluid.r_gas * t / p;
}

double polytropic_exponent(double x_g, const FluidSpec& fluid) {
  if (!(x_g > 0 && x_g <= 1)) invalid("polytropic_exponent: x_g outside (0,1]");
  return 1.0 + x_g * (fluid.c_p - fluid.c_v) / (x_g * fluid.c_v + (1.0 - x_g) * fluid.c_liq);
}

double critical_ratio_map(double y, double x_g, double v_g1, double v_l, double k, double n) {
  const double kk = k / (k - 1.0);
  const double v_g2 = v_g1 * std::pow(y, -1.0 / k);
  const double a1 = (1.0 - x_g) * v_l / (x_g * v_g1);
  const double a2 = (1.0 - x_g) * v_l / (x_g * v_g2);
  return (kk + a1 * (1.0 - y)) / (kk + 0.5 * n + n * a2 + 0.5 * n * a2 * a2);
}

double critical_pressure_ratio(double x_g, double v_g1, double v_l, double k, double n,
                               const FixedPointOptions& options) {
  if (!(x_g > 0 && x_g <= 1)) invalid("critical_pressure_ratio: x_g outside (0,1]");
  if (!(v_g1 > 0 && v_l > 0)) invalid("critical_pressure_ratio: specific volumes must be positive");
  if (!(k > 1 && n > 1)) invalid("critical_pressure_ratio: k and n must exceed 1");

  auto g = [&](double y) { return critical_ratio_map(y, x_g, v_g1, v_l, k, n); };

  double y = 0.5;
  double prev_step = 0.0;
  int sign_flips = 0;
  for (int it = 0; it < options.max_iterations; ++it) {
    const double gy = g(y);
    const double residual = gy - y;
    if (std::abs(residual) < options.tolerance) return y;
    const double step = 0.5 * residual;
    if (it > 0 && step * prev_step < 0 && std::abs(step) >= std::abs(prev_step)) ++sign_flips;
    if (sign_flips > 3) break;
    prev_step = step;
    y = std::clamp(y + step, 1e-12, 1.0);
  }
  if (!options.bisection_fallback)
    throw ConvergenceError("critical_pressure_ratio: fixed-point iteration did not converge", y);

  // y - g(y) is increasing, negative near 0 and positive at 1.
  double lo = 1e-12;
  double hi = 1.0;
  for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid - g(mid) < 0) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

double area_linear(double u, const ChokeParams& p) {
  return p.c_d * p.a_max * (u / 100.0);
}

double area_equal_percentage(double u, const ChokeParams& p) {
  const double r = p.rangeability;
  if (u <= 0.0) return 0.0;
  if (u >= 100.0) return p.a_max;
  return p.a_max * (std::pow(r, u / 100.0) - 1.0) / (r - 1.0);
}

double effective_area(double u, const ChokeParams& p) {
  switch (p.area_kind) {
    case AreaKind::EqualPercentage:
      return p.c_d * area_equal_percentage(u, p);
    case AreaKind::Linear:
    case AreaKind::NeuralScaled:
      break;
  }
  return area_linear(u, p);
}

double slip_ratio(double /*x_g*/, double rho_g2, double rho_l) {
  if (!(rho_g2 > 0 && rho_l > 0)) invalid("slip_ratio: densities must be positive");
  return std::clamp(std::pow(rho_l / rho_g2, 1.0 / 6.0), 1.0, 10.0);
}

double mixture_density_throat(double x_g, double v_g2, double v_l, std::optional<double> slip) {
  if (!slip) return 1.0 / (x_g * v_g2 + (1.0 - x_g) * v_l);
  const double gas = x_g * v_g2;
  const double alpha = gas / (gas + *slip * (1.0 - x_g) * v_l);
  return alpha / v_g2 + (1.0 - alpha) / v_l;
}

double sachdeva_mass_flow(const ChokeConditions& cond, const PhaseFractions& fr,
                          const FluidSpec& fluid, const ChokeParams& params, double area) {
  cond.validate();
  fr.validate();
  if (area < 0.0) invalid("sachdeva_mass_flow: negative area");
  if (area == 0.0) return 0.0;

  const double x = fr.eta_gas;
  if (x <= 0.0) {
    const double rho_l = liquid_density(fr, fluid);
    return area * std::sqrt(2.0 * rho_l * std::max(cond.p1 - cond.p2, 0.0));
  }

  const double k = fluid.k;
  const double v_g1 = gas_specific_volume(cond.p1, cond.t1, fluid);
  // With no liquid every v_l term is multiplied by (1 - x) = 0.
  const double v_l = fr.liquid() > 0.0 ? 1.0 / liquid_density(fr, fluid) : 1.0 / fluid.rho_oil_sc;
  const double n = polytropic_exponent(x, fluid);
  const double y_c = critical_pressure_ratio(x, v_g1, v_l, k, n);
  const double y = std::max(cond.p2 / cond.p1, y_c);
  const double v_g2 = v_g1 * std::pow(y, -1.0 / k);

  std::optional<double> slip;
  if (params.slip_enabled && x < 1.0) slip = slip_ratio(x, 1.0 / v_g2, 1.0 / v_l);
  const double rho_m2 = mixture_density_throat(x, v_g2, v_l, slip);

  const double radicand = (1.0 - x) * (1.0 - y) * v_l + x * (k / (k - 1.0)) * (v_g1 - y * v_g2);
  if (!(radicand > 0.0)) return 0.0;
  return area * rho_m2 * std::sqrt(2.0 * cond.p1 * radicand);
}

VolumetricRates split_volumetric(double m_dot, const PhaseFractions& fr, const FluidSpec& fluid) {
  if (m_dot < 0.0) invalid("split_volumetric: negative mass flow");
  VolumetricRates q;
  q.q_oil = fr.eta_oil * m_dot / fluid.rho_oil_sc;
  q.q_gas = fr.eta_gas * m_dot / fluid.rho_gas_sc;
  q.q_water = fr.eta_water * m_dot / fluid.rho_water_sc;
  q.q_total = q.q_oil + q.q_gas + q.q_water;
  return q;
}

double standard_volume_per_mass(const PhaseFractions& fr, const FluidSpec& fluid) {
  return fr.eta_oil / fluid.rho_oil_sc + fr.eta_gas / fluid.rho_gas_sc + fr.eta_water / fluid.rho_water_sc;
}

}  // namespace vfm
