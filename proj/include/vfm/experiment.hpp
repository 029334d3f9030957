#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vfm/dataset.hpp"
#include "vfm/model.hpp"
#include "vfm/nn.hpp"
#include "vfm/trainer.hpp"

namespace vfm {

double mae(std::span<const double> predictions, std::span<const double> targets);

struct QuantileSummary {
  double p25 = 0.0;
  double p50 = 0.0;
  double p75 = 0.0;
};

// Linear interpolation between order statistics (position q·(n−1)).
QuantileSummary quantiles(std::span<const double> values);

struct ExperimentConfig {
  std::string experiment = "exp1";  // exp1 | exp2 | exp3 | exp4
  std::vector<ModelKind> models{kAllModels.begin(), kAllModels.end()};
  int trials = 20;
  std::uint64_t master_seed = 1;
  int jobs = 1;

  std::vector<std::size_t> n_grid{2, 4, 8, 20, 40, 80, 800, 4000, 8000};
  std::vector<double> noise_levels{1, 2, 3, 4, 5, 10};
  std::size_t d1_size = kD1Size;
  std::size_t d1_test = kD1Test;
  double val_fraction = kD1ValFraction;
  std::size_t temporal_size = kTemporalSize;

  NetSpec net = default_net_spec();
  TrainConfig train;                             // defaults for every model
  std::map<ModelKind, TrainConfig> train_by_model;  // per-kind overrides

  TrainConfig train_config(ModelKind kind) const;
  void validate() const;
};

struct TrialResult {
  std::string experiment;
  ModelKind model = ModelKind::MechPlain;
  int trial = 0;
  double control = 0.0;  // N (exp1), σ_ε (exp2), dataset id 2/3 (exp3/exp4)
  double mae_validation = 0.0;
  double mae_test = 0.0;
  double relative_error = 1.0;  // exp2 only
  int epochs = 0;
  int best_epoch = 0;
  bool diverged = false;
  std::vector<double> predictions;  // exp3/exp4: every row of the timeline
};

struct CellSummary {
  ModelKind model = ModelKind::MechPlain;
  double control = 0.0;
  std::string metric;
  QuantileSummary q;
  std::size_t n_ok = 0;
  std::size_t n_diverged = 0;
  bool flagged = false;  // fewer than 80 % of trials survived
};

// Validation / test MAE per model, printed as a 2 × 5 table.
struct MaeTable {
  std::vector<ModelKind> models;
  std::vector<double> mae_validation;
  std::vector<double> mae_test;
  std::vector<int> trial;  // the median trial reported for each model
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<TrialResult> trials;  // sorted by (model, control, trial)
  std::vector<CellSummary> summary;
  std::optional<MaeTable> table;    // exp3 / exp4
  std::optional<Dataset> timeline;  // D2 / D3 for the per-t series

  const CellSummary* cell(ModelKind model, double control, const std::string& metric) const;
};

ExperimentReport run_exp1(const ExperimentConfig& config);
ExperimentReport run_exp2(const ExperimentConfig& config);
ExperimentReport run_exp3(const ExperimentConfig& config);
ExperimentReport run_exp4(const ExperimentConfig& config);
ExperimentReport run_experiment(const ExperimentConfig& config);

// Quantiles per (model, control, metric) over non-diverged trials.
std::vector<CellSummary> aggregate(const std::vector<TrialResult>& trials, const std::string& experiment,
                                   int expected_trials);

struct OutputStamp {
  std::string tool_version;
  std::uint64_t master_seed = 0;
  std::string config_digest;
};

struct ReportFiles {
  std::filesystem::path tidy;
  std::filesystem::path quantiles;
  std::optional<std::filesystem::path> table;
  std::optional<std::filesystem::path> series;
};

/// Writes <exp>_tidy.csv, <exp>_quantiles.csv and, for exp3/exp4,
/// <exp>_table.csv and <exp>_series.csv into `dir`.
ReportFiles write_report(const ExperimentReport& report, const std::filesystem::path& dir, const OutputStamp& stamp);

std::string format_table(const MaeTable& table);

// Tidy rows read back for re-aggregation.
struct TidyRow {
  std::string experiment;
  std::string model;
  double control = 0.0;
  int trial = 0;
  std::string metric;
  double value = 0.0;
};

std::vector<TidyRow> read_tidy_csv(const std::filesystem::path& path);
std::vector<TrialResult> trials_from_tidy(const std::vector<TidyRow>& rows);
void write_quantiles_csv(const std::vector<CellSummary>& summary, const std::string& experiment,
                         const std::filesystem::path& path, const OutputStamp& stamp);

}  // namespace vfm
