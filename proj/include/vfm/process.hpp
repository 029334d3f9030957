#pragma once

#include <cstdint>
#include <span>

#include "vfm/choke.hpp"

namespace vfm {

inline constexpr double kPaPerBar = 1e5;
inline constexpr double kKelvinOffset = 273.15;

// Target mean noise-free flow of D1 in reporting units.
inline constexpr double kTargetMeanFlow = 41.7;

/// Measured input vector x in external units.
struct Inputs {
  double p1_bar = 0.0;
  double p2_bar = 0.0;
  double t1_c = 0.0;
  double u_pct = 0.0;
  double eta_oil = 0.0;
  double eta_water = 0.0;

  double eta_gas() const { return 1.0 - eta_oil - eta_water; }
  // Throws Error naming the offending field.
  void validate() const;
  ChokeConditions conditions() const;
  PhaseFractions fractions() const;
};

struct ProcessSpec {
  FluidSpec fluid;
  ChokeParams choke;
  double flow_unit_scale = 1.0;

  void validate() const;
};

struct NoiseSpec {
  double sigma_eps = 0.0;
  std::uint64_t seed = 0;
};

// True choke of the data-generating process (equal-percentage, slip on).
ChokeParams true_choke_params();

// Process with the calibrated flow_unit_scale; computed once per program.
const ProcessSpec& default_process();

/// Noise-free volumetric flow q = scale · q_total(ṁ) in reporting units.
double evaluate_process(const ProcessSpec& spec, const Inputs& x);

// Draw `index` of the noise stream seeded by noise.seed.
double add_noise(double q, const NoiseSpec& noise, std::uint64_t index);

/// Scale that makes the mean noise-free flow over `reference` equal to
/// kTargetMeanFlow. Requires at least 1000 samples.
double calibrate_flow_scale(const ProcessSpec& spec, std::span<const Inputs> reference);

}  // namespace vfm
