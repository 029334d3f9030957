#include "vfm/model.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "vfm/error.hpp"

namespace vfm {

namespace {

constexpr int kCheckpointVersion = 1;
constexpr double kInf = std::numeric_limits<double>::infinity();

double softplus(double a) { return a > 0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a)); }
double sigmoid(double a) {
  if (a >= 0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

// Equal-percentage shape h(u; R) = (R^w − 1)/(R − 1), w = u/100, and ∂h/∂R.
double eq_shape(double u, double r) {
  if (u <= 0) return 0.0;
  if (u >= 100) return 1.0;
  return (std::pow(r, u / 100.0) - 1.0) / (r - 1.0);
}

double eq_shape_dr(double u, double r) {
  if (u <= 0 || u >= 100) return 0.0;
  const double w = u / 100.0;
  const double rw = std::pow(r, w);
  return (w * rw / r * (r - 1.0) - (rw - 1.0)) / ((r - 1.0) * (r - 1.0));
}

std::array<double, 6> as_array(const Inputs& x) {
  return {x.p1_bar, x.p2_bar, x.t1_c, x.u_pct, x.eta_oil, x.eta_water};
}

bool uses_slip(ModelKind kind) { return kind == ModelKind::MechOracle; }
bool has_physics(ModelKind kind) { return kind != ModelKind::DataDriven; }

void add_physics_params(ParamVector& p, ModelKind kind) {
  if (kind == ModelKind::MechOracle) {
    p.push("c_d", 0.7, {0.7, 0.2}, ParamGroup::Physics, 0.7, 0.05, 2.0);
    p.push("a_max", 4e-4, {4e-4, 2e-4}, ParamGroup::Physics, 4e-4, 1e-7, kInf);
    p.push("R", 30.0, {30.0, 20.0}, ParamGroup::Physics, 30.0, 1.01, 1000.0);
  } else {
    p.push("c_d", 0.84, {0.84, 0.1}, ParamGroup::Physics, 0.84, 0.05, 2.0);
    p.push("a_max", 5e-4, {5e-4, 2e-4}, ParamGroup::Physics, 5e-4, 1e-7, kInf);
  }
}

void add_network_params(ParamVector& p, const NetParams& net) {
  const auto& spec = net.spec;
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    const int rows = spec.layer_sizes[l + 1];
    const int cols = spec.layer_sizes[l];
    const std::size_t w0 = weight_offset(spec, l);
    const std::string layer = std::to_string(l + 1);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        p.push("W" + layer + "_" + std::to_string(r) + "_" + std::to_string(c),
               net.flat[w0 + static_cast<std::size_t>(r * cols + c)], {0.0, 10.0}, ParamGroup::Network, 1.0);
    const std::size_t b0 = bias_offset(spec, l);
    for (int r = 0; r < rows; ++r)
      p.push("b" + layer + "_" + std::to_string(r), net.flat[b0 + static_cast<std::size_t>(r)], {0.0, 10.0},
             ParamGroup::Network, 1.0);
  }
}

}  // namespace

std::string_view model_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::MechPlain: return "M";
    case ModelKind::MechOracle: return "M*";
    case ModelKind::DataDriven: return "D";
    case ModelKind::HybridError: return "H-E";
    case ModelKind::HybridArea: return "H-A";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view name) {
  for (auto k : kAllModels)
    if (model_name(k) == name) return k;
  if (name == "Mstar" || name == "M_star") return ModelKind::MechOracle;
  if (name == "HE") return ModelKind::HybridError;
  if (name == "HA") return ModelKind::HybridArea;
  throw Error(ErrorCode::Usage, "unknown model kind '" + std::string(name) + "'");
}

bool has_network(ModelKind kind) {
  return kind == ModelKind::DataDriven || kind == ModelKind::HybridError || kind == ModelKind::HybridArea;
}

void ParamVector::push(std::string name, double value, Prior prior, ParamGroup group, double step, double lo,
                       double hi) {
  values.push_back(value);
  priors.push_back(prior);
  names.push_back(std::move(name));
  groups.push_back(group);
  step_scale.push_back(step);
  lower.push_back(lo);
  upper.push_back(hi);
}

void ParamVector::validate() const {
  const std::size_t n = values.size();
  if (priors.size() != n || names.size() != n || lower.size() != n || upper.size() != n ||
      groups.size() != n || step_scale.size() != n)
    throw Error(ErrorCode::Shape, "parameter table columns have unequal lengths");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(priors[i].sd > 0)) throw Error(ErrorCode::Shape, "prior sd must be positive for " + names[i]);
    if (values[i] < lower[i] || values[i] > upper[i]) throw Error(ErrorCode::Shape, names[i] + " outside its bounds");
  }
}

void ParamVector::project() {
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = std::clamp(values[i], lower[i], upper[i]);
}

double ParamVector::prior_penalty() const {
  double s = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = (values[i] - priors[i].mean) / priors[i].sd;
    s += d * d;
  }
  return s;
}

ModelContext default_context() {
  const auto& p = default_process();
  return {p.fluid, p.flow_unit_scale};
}

void FeatureBatch::gather(std::span<const std::size_t> idx, FeatureBatch& out) const {
  const auto n = static_cast<Eigen::Index>(idx.size());
  out.x_std.resize(x_std.rows(), n);
  out.base.resize(idx.size());
  out.u.resize(idx.size());
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto i = idx[static_cast<std::size_t>(j)];
    out.x_std.col(j) = x_std.col(static_cast<Eigen::Index>(i));
    out.base[static_cast<std::size_t>(j)] = base[i];
    out.u[static_cast<std::size_t>(j)] = u[i];
  }
}

Model::Model(ModelKind kind, ModelContext context, std::optional<NetSpec> net, ParamVector params,
             Normalization norm)
    : kind_(kind), context_(context), net_(std::move(net)), params_(std::move(params)), norm_(norm) {
  params_.validate();
  if (has_network(kind_)) {
    if (!net_) throw Error(ErrorCode::InvalidInput, std::string(model_name(kind_)) + " requires a network spec");
    net_->validate();
    if (net_->input_width() != 6) throw Error(ErrorCode::Shape, "network input width must be 6");
  } else {
    net_.reset();
  }
  physics_count_ = !has_physics(kind_) ? 0 : kind_ == ModelKind::MechOracle ? 3 : 2;
  const std::size_t expected = physics_count_ + (net_ ? net_->parameter_count() : 0);
  if (params_.size() != expected)
    throw Error(ErrorCode::Shape, "parameter vector has " + std::to_string(params_.size()) + " entries, expected " +
                                      std::to_string(expected));
}

std::span<const double> Model::net_params() const {
  return std::span<const double>(params_.values).subspan(physics_count_);
}

double Model::physics_flow(double base, double u) const {
  const auto& v = params_.values;
  if (kind_ == ModelKind::MechOracle) return base * v[0] * v[1] * eq_shape(u, v[2]);
  return base * v[0] * v[1] * (u / 100.0);
}

FeatureBatch Model::features(std::span<const Inputs> xs) const {
  FeatureBatch f;
  const auto n = static_cast<Eigen::Index>(xs.size());
  f.x_std.resize(6, n);
  f.base.assign(xs.size(), 0.0);
  f.u.resize(xs.size());
  ChokeParams unit;
  unit.slip_enabled = uses_slip(kind_);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& x = xs[static_cast<std::size_t>(j)];
    x.validate();
    const auto raw = as_array(x);
    for (int c = 0; c < 6; ++c) f.x_std(c, j) = (raw[static_cast<std::size_t>(c)] - norm_.mean[static_cast<std::size_t>(c)]) /
                                                norm_.scale[static_cast<std::size_t>(c)];
    f.u[static_cast<std::size_t>(j)] = x.u_pct;
    if (has_physics(kind_)) {
      const auto fr = x.fractions();
      const double flux = sachdeva_mass_flow(x.conditions(), fr, context_.fluid, unit, 1.0);
      f.base[static_cast<std::size_t>(j)] =
          context_.flow_unit_scale * split_volumetric(flux, fr, context_.fluid).q_total;
    }
  }
  return f;
}

FeatureBatch Model::features(std::span<const Observation> rows) const {
  std::vector<Inputs> xs;
  xs.reserve(rows.size());
  for (const auto& o : rows) xs.push_back(o.x);
  return features(xs);
}

void Model::predict_batch(const FeatureBatch& f, ModelWorkspace& ws, std::span<double> out) const {
  const std::size_t n = f.size();
  if (out.size() != n) throw Error(ErrorCode::Shape, "prediction span has wrong length");
  ws.phys.assign(n, 0.0);
  if (has_physics(kind_))
    for (std::size_t j = 0; j < n; ++j) ws.phys[j] = physics_flow(f.base[j], f.u[j]);
  if (net_) {
    ws.z.resize(n);
    forward_batch(*net_, net_params(), f.x_std, ws.net, ws.z);
  }
  for (std::size_t j = 0; j < n; ++j) {
    switch (kind_) {
      case ModelKind::MechPlain:
      case ModelKind::MechOracle: out[j] = ws.phys[j]; break;
      case ModelKind::DataDriven: out[j] = norm_.out_offset + norm_.out_scale * ws.z[j]; break;
      case ModelKind::HybridError: out[j] = ws.phys[j] + norm_.out_scale * ws.z[j]; break;
      case ModelKind::HybridArea: out[j] = ws.phys[j] * softplus(ws.z[j] + kAreaHeadShift); break;
    }
  }
}

void Model::accumulate_gradient(const FeatureBatch& f, ModelWorkspace& ws, std::span<const double> weights,
                                std::span<double> grad) const {
  const std::size_t n = f.size();
  if (weights.size() != n) throw Error(ErrorCode::Shape, "weight span has wrong length");
  if (grad.size() != params_.size()) throw Error(ErrorCode::Shape, "gradient span has wrong length");
  const auto& v = params_.values;

  // Multiplier of the physics term and of the network output in ŷ.
  std::vector<double> phys_w(n, 0.0);
  std::vector<double> net_w(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    switch (kind_) {
      case ModelKind::MechPlain:
      case ModelKind::MechOracle: phys_w[j] = weights[j]; break;
      case ModelKind::DataDriven:
      case ModelKind::HybridError:
        phys_w[j] = weights[j];
        net_w[j] = weights[j] * norm_.out_scale;
        break;
      case ModelKind::HybridArea: {
        const double a = ws.z[j] + kAreaHeadShift;
        phys_w[j] = weights[j] * softplus(a);
        net_w[j] = weights[j] * ws.phys[j] * sigmoid(a);
        break;
      }
    }
  }

  if (kind_ == ModelKind::MechOracle) {
    for (std::size_t j = 0; j < n; ++j) {
      const double h = eq_shape(f.u[j], v[2]);
      const double b = f.base[j] * phys_w[j];
      grad[0] += b * v[1] * h;
      grad[1] += b * v[0] * h;
      grad[2] += b * v[0] * v[1] * eq_shape_dr(f.u[j], v[2]);
    }
  } else if (has_physics(kind_)) {
    for (std::size_t j = 0; j < n; ++j) {
      const double b = f.base[j] * phys_w[j] * (f.u[j] / 100.0);
      grad[0] += b * v[1];
      grad[1] += b * v[0];
    }
  }
  if (net_) backward_batch(*net_, net_params(), ws.net, net_w, grad.subspan(physics_count_));
}

double Model::predict(const Inputs& x) const {
  const auto f = features(std::span<const Inputs>(&x, 1));
  ModelWorkspace ws;
  double y = 0.0;
  predict_batch(f, ws, std::span<double>(&y, 1));
  return y;
}

std::vector<double> Model::predict_gradient(const Inputs& x) const {
  const auto f = features(std::span<const Inputs>(&x, 1));
  ModelWorkspace ws;
  double y = 0.0;
  predict_batch(f, ws, std::span<double>(&y, 1));
  std::vector<double> grad(params_.size(), 0.0);
  const double one = 1.0;
  accumulate_gradient(f, ws, std::span<const double>(&one, 1), grad);
  return grad;
}

Model build(ModelKind kind, const ModelContext& context, const std::optional<NetSpec>& net, std::uint64_t seed) {
  if (has_network(kind) && !net)
    throw Error(ErrorCode::InvalidInput, std::string(model_name(kind)) + " requires a network spec");
  ParamVector p;
  if (has_physics(kind)) add_physics_params(p, kind);
  std::optional<NetSpec> spec;
  if (has_network(kind)) {
    spec = *net;
    spec->seed = seed;
    NetParams np = init(*spec);
    if (kind != ModelKind::DataDriven) {
      // Hybrids start exactly at M: zero output layer.
      const std::size_t last = spec->layers() - 1;
      std::fill(np.flat.begin() + static_cast<std::ptrdiff_t>(weight_offset(*spec, last)), np.flat.end(), 0.0);
    }
    add_network_params(p, np);
  }
  return Model(kind, context, spec, std::move(p));
}

Normalization fit_normalization(std::span<const Observation> train, ModelKind kind) {
  Normalization n;
  if (train.empty()) return n;
  const double count = static_cast<double>(train.size());
  std::array<double, 6> sum{}, sq{};
  double ys = 0.0, yq = 0.0;
  for (const auto& o : train) {
    const auto a = as_array(o.x);
    for (std::size_t c = 0; c < 6; ++c) {
      sum[c] += a[c];
      sq[c] += a[c] * a[c];
    }
    ys += o.y;
    yq += o.y * o.y;
  }
  for (std::size_t c = 0; c < 6; ++c) {
    n.mean[c] = sum[c] / count;
    const double var = std::max(sq[c] / count - n.mean[c] * n.mean[c], 0.0);
    const double sd = std::sqrt(var);
    n.scale[c] = sd > 1e-9 * std::max(1.0, std::abs(n.mean[c])) ? sd : 1.0;
  }
  const double y_mean = ys / count;
  const double y_sd = std::sqrt(std::max(yq / count - y_mean * y_mean, 0.0));
  const double head = y_sd > 1e-9 * std::max(1.0, std::abs(y_mean)) ? y_sd : 1.0;
  if (kind == ModelKind::DataDriven) {
    n.out_offset = y_mean;
    n.out_scale = head;
  } else if (kind == ModelKind::HybridError) {
    n.out_scale = head;
  }
  return n;
}

std::string checkpoint(const Model& model) {
  using nlohmann::json;
  json j;
  j["format"] = "vfm-checkpoint";
  j["version"] = kCheckpointVersion;
  j["kind"] = std::string(model_name(model.kind()));
  if (model.net_spec()) j["net"] = {{"layers", model.net_spec()->layer_sizes}, {"seed", model.net_spec()->seed}};
  const auto& fl = model.context().fluid;
  j["context"] = {{"flow_unit_scale", model.context().flow_unit_scale},
                  {"fluid",
                   {{"rho_oil_sc", fl.rho_oil_sc}, {"rho_water_sc", fl.rho_water_sc}, {"rho_gas_sc", fl.rho_gas_sc},
                    {"k", fl.k}, {"r_gas", fl.r_gas}, {"c_liq", fl.c_liq}, {"c_v", fl.c_v}, {"c_p", fl.c_p}}}};
  const auto& nm = model.normalization();
  j["normalization"] = {{"mean", nm.mean}, {"scale", nm.scale}, {"out_offset", nm.out_offset},
                        {"out_scale", nm.out_scale}};
  const auto& p = model.params();
  json bound_lo = json::array(), bound_hi = json::array(), prior_mu = json::array(), prior_sd = json::array(),
       groups = json::array();
  for (std::size_t i = 0; i < p.size(); ++i) {
    bound_lo.push_back(std::isinf(p.lower[i]) ? json(nullptr) : json(p.lower[i]));
    bound_hi.push_back(std::isinf(p.upper[i]) ? json(nullptr) : json(p.upper[i]));
    prior_mu.push_back(p.priors[i].mean);
    prior_sd.push_back(p.priors[i].sd);
    groups.push_back(p.groups[i] == ParamGroup::Physics ? "physics" : "network");
  }
  j["params"] = {{"count", p.size()}, {"names", p.names}, {"prior_mean", prior_mu}, {"prior_sd", prior_sd},
                 {"lower", bound_lo}, {"upper", bound_hi}, {"group", groups}, {"step_scale", p.step_scale},
                 {"values", p.values}};
  return j.dump(1) + "\n";
}

Model restore(std::string_view record) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(record);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Shape, std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "vfm-checkpoint") throw Error(ErrorCode::Shape, "not a vfm checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw Error(ErrorCode::Shape, "unsupported checkpoint version " + std::to_string(j.at("version").get<int>()));
    const ModelKind kind = parse_model_kind(j.at("kind").get<std::string>());
    std::optional<NetSpec> net;
    if (j.contains("net"))
      net = NetSpec{j["net"].at("layers").get<std::vector<int>>(), j["net"].at("seed").get<std::uint64_t>()};
    ModelContext ctx;
    const auto& c = j.at("context");
    ctx.flow_unit_scale = c.at("flow_unit_scale").get<double>();
    const auto& fl = c.at("fluid");
    ctx.fluid = {fl.at("rho_oil_sc"), fl.at("rho_water_sc"), fl.at("rho_gas_sc"), fl.at("k"),
                 fl.at("r_gas"), fl.at("c_liq"), fl.at("c_v"), fl.at("c_p")};
    ctx.fluid.validate();
    Normalization nm;
    const auto& nj = j.at("normalization");
    nm.mean = nj.at("mean").get<std::array<double, 6>>();
    nm.scale = nj.at("scale").get<std::array<double, 6>>();
    nm.out_offset = nj.at("out_offset").get<double>();
    nm.out_scale = nj.at("out_scale").get<double>();

    const auto& pj = j.at("params");
    const auto count = pj.at("count").get<std::size_t>();
    ParamVector p;
    p.names = pj.at("names").get<std::vector<std::string>>();
    p.values = pj.at("values").get<std::vector<double>>();
    p.step_scale = pj.at("step_scale").get<std::vector<double>>();
    const auto& mu = pj.at("prior_mean");
    const auto& sd = pj.at("prior_sd");
    const auto& lo = pj.at("lower");
    const auto& hi = pj.at("upper");
    const auto& gr = pj.at("group");
    if (mu.size() != count || sd.size() != count || lo.size() != count || hi.size() != count ||
        gr.size() != count || p.values.size() != count)
      throw Error(ErrorCode::Shape, "checkpoint parameter table does not match its count");
    for (std::size_t i = 0; i < count; ++i) {
      p.priors.push_back({mu[i].get<double>(), sd[i].get<double>()});
      p.lower.push_back(lo[i].is_null() ? -kInf : lo[i].get<double>());
      p.upper.push_back(hi[i].is_null() ? kInf : hi[i].get<double>());
      p.groups.push_back(gr[i].get<std::string>() == "physics" ? ParamGroup::Physics : ParamGroup::Network);
    }
    return Model(kind, ctx, net, std::move(p), nm);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Shape, std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace vfm
