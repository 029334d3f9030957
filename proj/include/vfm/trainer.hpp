#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vfm/dataset.hpp"
#include "vfm/model.hpp"

namespace vfm {

struct TrainConfig {
  double learning_rate_net = 1e-3;
  double learning_rate_phys = 1e-2;
  std::size_t batch_size = 64;
  int max_epochs = 5000;
  int patience = 100;  // <= 0 disables early stopping
  // Noise scale in the likelihood; unset means the dataset's σ_ε (1 when noise-free).
  std::optional<double> sigma_eps_assumed;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainReport {
  int epochs_run = 0;
  int best_epoch = 0;
  std::vector<double> train_loss;  // epoch-summed MAP objective
  std::vector<double> val_loss;    // validation mean squared error
  double best_val_loss = 0.0;
  ParamVector final_params;        // snapshot at best_epoch
  bool diverged = false;
  std::string message;
};

/// Mini-batch MAP objective:
///   Σ_batch (y − ŷ)²/σ_ε² + (|batch|/n_train) Σ_i (φ_i − μ_i)²/σ_i².
/// n_train = 0 means the batch is the whole training set.
double map_loss(const Model& model, std::span<const Observation> batch, double sigma_eps,
                std::size_t n_train = 0);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One Adam update with bias correction; lr is per entry. Bounds are
/// enforced by projection after the step.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               std::span<const double> lr, std::span<const double> lower, std::span<const double> upper);

// Convenience: per-entry rate = group rate × step_scale.
void adam_step(AdamState& state, ParamVector& params, std::span<const double> grads, double lr_phys,
               double lr_net);

std::pair<Model, TrainReport> train(Model model, std::span<const Observation> train_rows,
                                    std::span<const Observation> val_rows, const TrainConfig& config);

// Uses the dataset's train / val splits; σ_ε defaults to the dataset's.
std::pair<Model, TrainReport> train(Model model, const Dataset& dataset, TrainConfig config);

}  // namespace vfm
