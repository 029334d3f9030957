#include "vfm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "vfm/error.hpp"
#include "vfm/rng.hpp"

namespace vfm {

void TrainConfig::validate() const {
  if (!(learning_rate_net > 0 && learning_rate_phys > 0))
    throw Error(ErrorCode::InvalidInput, "learning rates must be positive");
  if (batch_size < 1) throw Error(ErrorCode::InvalidInput, "batch_size must be at least 1");
  if (max_epochs < 1) throw Error(ErrorCode::InvalidInput, "max_epochs must be at least 1");
  if (sigma_eps_assumed && !(*sigma_eps_assumed > 0))
    throw Error(ErrorCode::InvalidInput, "sigma_eps_assumed must be positive");
}

double map_loss(const Model& model, std::span<const Observation> batch, double sigma_eps, std::size_t n_train) {
  if (batch.empty()) throw Error(ErrorCode::InvalidInput, "map_loss: empty batch");
  const auto f = model.features(batch);
  ModelWorkspace ws;
  std::vector<double> pred(batch.size());
  model.predict_batch(f, ws, pred);
  double sse = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double r = batch[i].y - pred[i];
    sse += r * r;
  }
  const double n = n_train == 0 ? static_cast<double>(batch.size()) : static_cast<double>(n_train);
  return sse / (sigma_eps * sigma_eps) + static_cast<double>(batch.size()) / n * model.params().prior_penalty();
}

void adam_step(AdamState& s, std::span<double> params, std::span<const double> grads, std::span<const double> lr,
               std::span<const double> lower, std::span<const double> upper) {
  const std::size_t n = params.size();
  if (grads.size() != n || lr.size() != n || lower.size() != n || upper.size() != n)
    throw Error(ErrorCode::Shape, "adam_step: shape mismatch");
  if (s.m.size() != n) {
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
    s.step = 0;
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < n; ++i) {
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grads[i];
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grads[i] * grads[i];
    const double m_hat = s.m[i] / c1;
    const double v_hat = s.v[i] / c2;
    params[i] = std::clamp(params[i] - lr[i] * m_hat / (std::sqrt(v_hat) + s.eps), lower[i], upper[i]);
  }
}

void adam_step(AdamState& state, ParamVector& params, std::span<const double> grads, double lr_phys,
               double lr_net) {
  std::vector<double> lr(params.size());
  for (std::size_t i = 0; i < lr.size(); ++i)
    lr[i] = (params.groups[i] == ParamGroup::Physics ? lr_phys : lr_net) * params.step_scale[i];
  adam_step(state, params.values, grads, lr, params.lower, params.upper);
}

std::pair<Model, TrainReport> train(Model model, std::span<const Observation> train_rows,
                                    std::span<const Observation> val_rows, const TrainConfig& config) {
  config.validate();
  if (train_rows.empty()) throw Error(ErrorCode::InvalidInput, "train: empty training split");
  const bool early_stopping = config.patience > 0;
  if (early_stopping && val_rows.empty())
    throw Error(ErrorCode::InvalidInput, "train: early stopping needs a validation split");

  const double sigma = config.sigma_eps_assumed.value_or(1.0);
  const double inv_var = 1.0 / (sigma * sigma);

  model.set_normalization(fit_normalization(train_rows, model.kind()));
  const FeatureBatch train_f = model.features(train_rows);
  const FeatureBatch val_f = model.features(val_rows);
  std::vector<double> val_y;
  for (const auto& o : val_rows) val_y.push_back(o.y);

  auto& params = model.params();
  const std::size_t n_params = params.size();
  const std::size_t n_train = train_rows.size();
  const std::size_t batch = std::min(config.batch_size, n_train);

  std::vector<double> lr(n_params);
  for (std::size_t i = 0; i < n_params; ++i)
    lr[i] = (params.groups[i] == ParamGroup::Physics ? config.learning_rate_phys : config.learning_rate_net) *
            params.step_scale[i];

  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), 0);
  CounterRng rng(config.seed, 0x7472);
  AdamState adam;
  ModelWorkspace ws;
  FeatureBatch fb;
  std::vector<double> pred, weights, grad(n_params), val_pred(val_rows.size());

  TrainReport report;
  report.best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<double> best = params.values;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle(order, rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n_train; start += batch) {
      const std::size_t len = std::min(batch, n_train - start);
      train_f.gather(std::span<const std::size_t>(order).subspan(start, len), fb);
      pred.resize(len);
      weights.resize(len);
      model.predict_batch(fb, ws, pred);
      for (std::size_t j = 0; j < len; ++j) {
        const double r = train_rows[order[start + j]].y - pred[j];
        epoch_loss += r * r * inv_var;
        weights[j] = -2.0 * r * inv_var;
      }
      std::fill(grad.begin(), grad.end(), 0.0);
      model.accumulate_gradient(fb, ws, weights, grad);
      const double frac = static_cast<double>(len) / static_cast<double>(n_train);
      for (std::size_t i = 0; i < n_params; ++i) {
        const double d = params.values[i] - params.priors[i].mean;
        const double var = params.priors[i].sd * params.priors[i].sd;
        epoch_loss += frac * d * d / var;
        grad[i] += frac * 2.0 * d / var;
      }
      adam_step(adam, params.values, grad, lr, params.lower, params.upper);
    }

    double val_mse = epoch_loss / static_cast<double>(n_train);
    if (!val_rows.empty()) {
      model.predict_batch(val_f, ws, val_pred);
      double s = 0.0;
      for (std::size_t j = 0; j < val_pred.size(); ++j) s += (val_y[j] - val_pred[j]) * (val_y[j] - val_pred[j]);
      val_mse = s / static_cast<double>(val_pred.size());
    }
    report.epochs_run = epoch;
    report.train_loss.push_back(epoch_loss);
    report.val_loss.push_back(val_mse);

    const bool finite = std::isfinite(epoch_loss) && std::isfinite(val_mse) &&
                        std::all_of(params.values.begin(), params.values.end(), [](double v) { return std::isfinite(v); });
    if (!finite) {
      report.diverged = true;
      report.message = "non-finite loss at epoch " + std::to_string(epoch);
      break;
    }
    if (!early_stopping || val_mse < report.best_val_loss) {
      report.best_val_loss = val_mse;
      report.best_epoch = epoch;
      best = params.values;
    } else if (epoch - report.best_epoch >= config.patience) {
      break;
    }
  }

  params.values = best;
  report.final_params = params;
  return {std::move(model), std::move(report)};
}

std::pair<Model, TrainReport> train(Model model, const Dataset& dataset, TrainConfig config) {
  if (!config.sigma_eps_assumed)
    config.sigma_eps_assumed = dataset.provenance.sigma_eps > 0 ? dataset.provenance.sigma_eps : 1.0;
  const auto tr = dataset.subset(dataset.split.train);
  const auto va = dataset.subset(dataset.split.val);
  return train(std::move(model), tr, va, config);
}

}  // namespace vfm
