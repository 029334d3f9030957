#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "vfm/dataset.hpp"
#include "vfm/nn.hpp"
#include "vfm/process.hpp"

namespace vfm {

enum class ModelKind { MechPlain, MechOracle, DataDriven, HybridError, HybridArea };

inline constexpr std::array<ModelKind, 5> kAllModels = {ModelKind::MechOracle, ModelKind::MechPlain,
                                                        ModelKind::HybridArea, ModelKind::HybridError,
                                                        ModelKind::DataDriven};

std::string_view model_name(ModelKind kind);  // "M", "M*", "D", "H-E", "H-A"
ModelKind parse_model_kind(std::string_view name);
bool has_network(ModelKind kind);

struct Prior {
  double mean = 0.0;
  double sd = 1.0;
};

enum class ParamGroup { Physics, Network };

/// Flat trainable parameters with a Gaussian prior per entry.
///
/// step_scale is the per-entry Adam step multiplier (the group learning rate
/// is in units of step_scale), so c_d ~ 1 and a_max ~ 1e-4 move at comparable
/// relative rates.
struct ParamVector {
  std::vector<double> values;
  std::vector<Prior> priors;
  std::vector<std::string> names;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<ParamGroup> groups;
  std::vector<double> step_scale;

  std::size_t size() const { return values.size(); }
  void push(std::string name, double value, Prior prior, ParamGroup group, double step,
            double lo = -std::numeric_limits<double>::infinity(),
            double hi = std::numeric_limits<double>::infinity());
  void validate() const;
  void project();
  // Σ (φ_i − μ_i)² / σ_i²
  double prior_penalty() const;
};

/// Standardization stored with a model: x_std = (x − mean) / scale, and the
/// network head of D / H-E is mapped to flow units as offset + scale·z.
struct Normalization {
  std::array<double, 6> mean{0, 0, 0, 0, 0, 0};
  std::array<double, 6> scale{1, 1, 1, 1, 1, 1};
  double out_offset = 0.0;
  double out_scale = 1.0;
};

struct ModelContext {
  FluidSpec fluid;
  double flow_unit_scale = 1.0;
};

ModelContext default_context();

// Rows prepared for repeated evaluation: standardized inputs and the
// parameter-free part of the physics (flow per unit effective area).
struct FeatureBatch {
  Eigen::MatrixXd x_std;      // 6 × n
  std::vector<double> base;   // reporting-unit flow per m² of area
  std::vector<double> u;      // opening, percent

  std::size_t size() const { return u.size(); }
  void gather(std::span<const std::size_t> idx, FeatureBatch& out) const;
};

struct ModelWorkspace {
  NetWorkspace net;
  std::vector<double> z;     // raw network output
  std::vector<double> phys;  // physics prediction before hybrid composition
};

class Model {
 public:
  Model(ModelKind kind, ModelContext context, std::optional<NetSpec> net, ParamVector params,
        Normalization norm = {});

  ModelKind kind() const { return kind_; }
  const ModelContext& context() const { return context_; }
  const std::optional<NetSpec>& net_spec() const { return net_; }
  const ParamVector& params() const { return params_; }
  ParamVector& params() { return params_; }
  const Normalization& normalization() const { return norm_; }
  void set_normalization(const Normalization& n) { norm_ = n; }
  std::size_t physics_count() const { return physics_count_; }

  FeatureBatch features(std::span<const Inputs> xs) const;
  FeatureBatch features(std::span<const Observation> rows) const;

  double predict(const Inputs& x) const;
  // dŷ/dφ in ParamVector order.
  std::vector<double> predict_gradient(const Inputs& x) const;

  void predict_batch(const FeatureBatch& f, ModelWorkspace& ws, std::span<double> out) const;
  /// grad += Σ_j weights[j] · ∂ŷ_j/∂φ. Must follow predict_batch on the same
  /// batch and workspace.
  void accumulate_gradient(const FeatureBatch& f, ModelWorkspace& ws, std::span<const double> weights,
                           std::span<double> grad) const;

 private:
  std::span<const double> net_params() const;
  double physics_flow(double base, double u) const;

  ModelKind kind_;
  ModelContext context_;
  std::optional<NetSpec> net_;
  ParamVector params_;
  Normalization norm_;
  std::size_t physics_count_ = 0;
};

// Shift applied to the H-A head so a zero network output gives multiplier 1.
inline const double kAreaHeadShift = 0.5413248546129181;  // log(e − 1)

Model build(ModelKind kind, const ModelContext& context, const std::optional<NetSpec>& net, std::uint64_t seed);

// Statistics from the training rows; D and H-E heads are scaled by the target spread.
Normalization fit_normalization(std::span<const Observation> train, ModelKind kind);

std::string checkpoint(const Model& model);
Model restore(std::string_view record);

}  // namespace vfm
