#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vfm/process.hpp"

namespace vfm {

struct Observation {
  std::int64_t t = 0;
  Inputs x;
  double eta_gas = 0.0;
  double q_true = 0.0;  // noise-free flow
  double y = 0.0;       // observed flow
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

struct Provenance {
  std::string generator;  // "d1", "d2", "d3"
  std::size_t n = 0;
  double sigma_eps = 0.0;
  std::uint64_t seed = 0;
  std::size_t redraws = 0;
};

struct Dataset {
  std::vector<Observation> rows;
  Split split;
  Provenance provenance;

  std::vector<Observation> subset(const std::vector<std::size_t>& idx) const;
};

inline constexpr std::size_t kD1Size = 10000;
inline constexpr std::size_t kD1Test = 2000;
inline constexpr double kD1ValFraction = 0.2;
inline constexpr std::size_t kTemporalSize = 5000;
inline constexpr std::size_t kTemporalTest = 2000;
inline constexpr std::size_t kTemporalVal = 600;

// Inputs from the D1 marginals; redraws (p2 <= 0 or T1 <= 0 K) are counted.
std::vector<Inputs> sample_d1_inputs(std::size_t n, std::uint64_t seed, std::size_t* redraws = nullptr);

/// Stationary i.i.d. dataset with a random 2000-row test split (n/5 when
/// n <= 2000) and 20 % of the remainder as validation.
Dataset sample_d1(std::size_t n, double sigma_eps, std::uint64_t seed,
                  const ProcessSpec& process = default_process());

// Depleting reservoir: exponential p1 decay, stepwise opening increase.
Dataset generate_d2(std::size_t n = kTemporalSize, std::uint64_t seed = 0,
                    const ProcessSpec& process = default_process());

// Rising gas-to-oil ratio at full opening.
Dataset generate_d3(std::size_t n = kTemporalSize, std::uint64_t seed = 0,
                    const ProcessSpec& process = default_process());

double d2_upstream_pressure(std::size_t t, std::size_t n);
double d2_opening(std::size_t t, std::size_t n);
double d3_gor(std::size_t t, std::size_t n);

struct OilGasFractions {
  double eta_oil = 0.0;
  double eta_gas = 0.0;
};

// GOR as standard-condition volumetric gas/oil ratio.
OilGasFractions gor_to_fractions(double gor, double eta_water, const FluidSpec& fluid);

Dataset split_random(Dataset ds, std::size_t n_test, double val_frac, std::uint64_t seed);
Dataset split_temporal(Dataset ds, std::size_t n_test, std::size_t n_val);

// Persistence. Lines starting with '#' before the header carry provenance.
void write_dataset_csv(const Dataset& ds, const std::filesystem::path& path,
                       const std::vector<std::string>& comments = {});
Dataset read_dataset_csv(const std::filesystem::path& path);
std::string dataset_file_name(const Provenance& p);

}  // namespace vfm
