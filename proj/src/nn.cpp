#include "vfm/nn.hpp"

#include <cmath>
#include <string>

#include "vfm/error.hpp"
#include "vfm/rng.hpp"

namespace vfm {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeights = Eigen::Map<const RowMajor>;
using Weights = Eigen::Map<RowMajor>;
using ConstBias = Eigen::Map<const Eigen::VectorXd>;
using Bias = Eigen::Map<Eigen::VectorXd>;

void check_params(const NetSpec& spec, std::size_t n_params) {
  if (n_params != spec.parameter_count())
    throw Error(ErrorCode::Shape, "network parameter vector has " + std::to_string(n_params) +
                                      " entries, expected " + std::to_string(spec.parameter_count()));
}

}  // namespace

void NetSpec::validate() const {
  if (layer_sizes.size() < 3) throw Error(ErrorCode::Shape, "network needs at least one hidden layer");
  for (int w : layer_sizes)
    if (w < 1) throw Error(ErrorCode::Shape, "network layer widths must be at least 1");
  if (layer_sizes.back() != 1) throw Error(ErrorCode::Shape, "network output width must be 1");
}

std::size_t NetSpec::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
    n += static_cast<std::size_t>(layer_sizes[l + 1]) * (static_cast<std::size_t>(layer_sizes[l]) + 1);
  return n;
}

NetSpec default_net_spec(int inputs, std::uint64_t seed) { return NetSpec{{inputs, 50, 50, 1}, seed}; }

std::size_t weight_offset(const NetSpec& spec, std::size_t layer) {
  std::size_t off = 0;
  for (std::size_t l = 0; l < layer; ++l)
    off += static_cast<std::size_t>(spec.layer_sizes[l + 1]) * (static_cast<std::size_t>(spec.layer_sizes[l]) + 1);
  return off;
}

std::size_t bias_offset(const NetSpec& spec, std::size_t layer) {
  return weight_offset(spec, layer) +
         static_cast<std::size_t>(spec.layer_sizes[layer + 1]) * static_cast<std::size_t>(spec.layer_sizes[layer]);
}

NetParams init(const NetSpec& spec) {
  spec.validate();
  NetParams p{spec, std::vector<double>(spec.parameter_count(), 0.0)};
  CounterRng rng(spec.seed, 0x6e6e);
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    const int fan_in = spec.layer_sizes[l];
    const int fan_out = spec.layer_sizes[l + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    const std::size_t off = weight_offset(spec, l);
    for (std::size_t i = 0; i < static_cast<std::size_t>(fan_in * fan_out); ++i)
      p.flat[off + i] = rng.uniform(-limit, limit);
  }
  return p;
}

double forward(const NetSpec& spec, std::span<const double> params, std::span<const double> x) {
  if (x.size() != static_cast<std::size_t>(spec.input_width()))
    throw Error(ErrorCode::Shape, "network input has wrong dimension");
  check_params(spec, params.size());
  Eigen::MatrixXd in = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  NetWorkspace ws;
  double out = 0.0;
  forward_batch(spec, params, in, ws, std::span<double>(&out, 1));
  return out;
}

NetGradients gradients(const NetSpec& spec, std::span<const double> params, std::span<const double> x) {
  if (x.size() != static_cast<std::size_t>(spec.input_width()))
    throw Error(ErrorCode::Shape, "network input has wrong dimension");
  check_params(spec, params.size());
  Eigen::MatrixXd in = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  NetWorkspace ws;
  double out = 0.0;
  forward_batch(spec, params, in, ws, std::span<double>(&out, 1));
  NetGradients g;
  g.d_params.assign(params.size(), 0.0);
  const double one = 1.0;
  Eigen::MatrixXd d_in;
  backward_batch(spec, params, ws, std::span<const double>(&one, 1), g.d_params, &d_in);
  g.d_inputs.assign(d_in.data(), d_in.data() + d_in.size());
  return g;
}

void forward_batch(const NetSpec& spec, std::span<const double> params, const Eigen::MatrixXd& x,
                   NetWorkspace& ws, std::span<double> out) {
  check_params(spec, params.size());
  if (x.rows() != spec.input_width()) throw Error(ErrorCode::Shape, "network input has wrong dimension");
  if (out.size() != static_cast<std::size_t>(x.cols())) throw Error(ErrorCode::Shape, "output span has wrong length");
  const std::size_t n_layers = spec.layers();
  ws.pre.resize(n_layers);
  ws.post.resize(n_layers - 1);
  ws.input = x;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto rows = spec.layer_sizes[l + 1];
    const auto cols = spec.layer_sizes[l];
    ConstWeights w(params.data() + weight_offset(spec, l), rows, cols);
    ConstBias b(params.data() + bias_offset(spec, l), rows);
    const Eigen::MatrixXd& prev = l == 0 ? ws.input : ws.post[l - 1];
    ws.pre[l].noalias() = w * prev;
    ws.pre[l].colwise() += b;
    if (l + 1 < n_layers) ws.post[l] = ws.pre[l].cwiseMax(0.0);
  }
  const auto& last = ws.pre.back();
  for (Eigen::Index j = 0; j < last.cols(); ++j) out[static_cast<std::size_t>(j)] = last(0, j);
}

void backward_batch(const NetSpec& spec, std::span<const double> params, NetWorkspace& ws,
                    std::span<const double> d_out, std::span<double> d_params, Eigen::MatrixXd* d_inputs) {
  check_params(spec, params.size());
  check_params(spec, d_params.size());
  const std::size_t n_layers = spec.layers();
  const auto batch = ws.input.cols();
  if (d_out.size() != static_cast<std::size_t>(batch)) throw Error(ErrorCode::Shape, "d_out has wrong length");

  ws.delta = Eigen::Map<const Eigen::RowVectorXd>(d_out.data(), batch);
  for (std::size_t l = n_layers; l-- > 0;) {
    const auto rows = spec.layer_sizes[l + 1];
    const auto cols = spec.layer_sizes[l];
    const Eigen::MatrixXd& prev = l == 0 ? ws.input : ws.post[l - 1];
    Weights dw(d_params.data() + weight_offset(spec, l), rows, cols);
    Bias db(d_params.data() + bias_offset(spec, l), rows);
    dw.noalias() += ws.delta * prev.transpose();
    db += ws.delta.rowwise().sum();
    ConstWeights w(params.data() + weight_offset(spec, l), rows, cols);
    if (l > 0) {
      Eigen::MatrixXd next = w.transpose() * ws.delta;
      ws.delta = next.cwiseProduct((ws.pre[l - 1].array() > 0.0).cast<double>().matrix());
    } else if (d_inputs) {
      *d_inputs = w.transpose() * ws.delta;
    }
  }
}

}  // namespace vfm
