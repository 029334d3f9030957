#include "vfm/process.hpp"

#include <string>
#include <vector>

#include "vfm/dataset.hpp"
#include "vfm/error.hpp"
#include "vfm/rng.hpp"

namespace vfm {

namespace {

constexpr std::uint64_t kCalibrationSeed = 20210301;
constexpr std::size_t kCalibrationSamples = 100000;

}  // namespace

void Inputs::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw Error(ErrorCode::InvalidInput, field + ": " + why);
  };
  if (!(p1_bar > 0)) fail("p1", "must be positive");
  if (!(p2_bar > 0)) fail("p2", "must be positive");
  if (!(t1_c + kKelvinOffset > 0)) fail("T1", "below absolute zero");
  if (!(u_pct >= 0 && u_pct <= 100)) fail("u", "outside [0,100]");
  if (!(eta_oil >= 0 && eta_oil <= 1)) fail("eta_oil", "outside [0,1]");
  if (!(eta_water >= 0 && eta_water <= 1)) fail("eta_water", "outside [0,1]");
  if (eta_oil + eta_water > 1.0 + 1e-12)
    throw Error(ErrorCode::FractionsExceedOne, "fractions exceed one");
}

ChokeConditions Inputs::conditions() const {
  return {p1_bar * kPaPerBar, p2_bar * kPaPerBar, t1_c + kKelvinOffset, u_pct};
}

PhaseFractions Inputs::fractions() const {
  const double gas = eta_gas();
  return {eta_oil, gas < 0.0 ? 0.0 : gas, eta_water};
}

void ProcessSpec::validate() const {
  fluid.validate();
  choke.validate();
  if (!(flow_unit_scale > 0)) throw Error(ErrorCode::InvalidInput, "flow_unit_scale must be positive");
}

ChokeParams true_choke_params() {
  ChokeParams p;
  p.c_d = 0.9;
  p.a_max = 5e-4;
  p.rangeability = 50.0;
  p.area_kind = AreaKind::EqualPercentage;
  p.slip_enabled = true;
  return p;
}

const ProcessSpec& default_process() {
  static const ProcessSpec spec = [] {
    ProcessSpec s;
    s.choke = true_choke_params();
    const auto reference = sample_d1_inputs(kCalibrationSamples, kCalibrationSeed);
    s.flow_unit_scale = calibrate_flow_scale(s, reference);
    return s;
  }();
  return spec;
}

double evaluate_process(const ProcessSpec& spec, const Inputs& x) {
  x.validate();
  const PhaseFractions fr = x.fractions();
  const double area = effective_area(x.u_pct, spec.choke);
  const double m_dot = sachdeva_mass_flow(x.conditions(), fr, spec.fluid, spec.choke, area);
  return spec.flow_unit_scale * split_volumetric(m_dot, fr, spec.fluid).q_total;
}

double add_noise(double q, const NoiseSpec& noise, std::uint64_t index) {
  if (noise.sigma_eps == 0.0) return q;
  return q + noise.sigma_eps * CounterRng(noise.seed, 0).normal_at(index);
}

double calibrate_flow_scale(const ProcessSpec& spec, std::span<const Inputs> reference) {
  if (reference.empty()) throw Error(ErrorCode::InvalidInput, "calibrate_flow_scale: empty sample");
  if (reference.size() < 1000)
    throw Error(ErrorCode::InvalidInput, "calibrate_flow_scale: need at least 1000 samples");
  ProcessSpec unit = spec;
  unit.flow_unit_scale = 1.0;
  double sum = 0.0;
  for (const auto& x : reference) sum += evaluate_process(unit, x);
  const double mean = sum / static_cast<double>(reference.size());
  if (!(mean > 0)) throw Error(ErrorCode::InvalidInput, "calibrate_flow_scale: zero mean flow");
  return kTargetMeanFlow / mean;
}

}  // namespace vfm
