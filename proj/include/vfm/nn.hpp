#pragma once

// Fully connected feed-forward network: ReLU hidden layers, identity output.
//
// Parameters live in one flat vector. Layer l contributes its weight matrix
// (fan_out × fan_in, row-major) followed by its bias vector, in layer order.
// The functions take the flat parameters as a span so a network can be
// evaluated in place inside a larger model parameter vector.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace vfm {

struct NetSpec {
  std::vector<int> layer_sizes;  // input, hidden..., output (= 1)
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t parameter_count() const;
  int input_width() const { return layer_sizes.front(); }
  std::size_t layers() const { return layer_sizes.size() - 1; }
};

NetSpec default_net_spec(int inputs = 6, std::uint64_t seed = 0);

struct NetParams {
  NetSpec spec;
  std::vector<double> flat;
};

// Glorot-uniform weights, zero biases; deterministic per spec.seed.
NetParams init(const NetSpec& spec);

// Offset of the weights / bias of layer l (0-based) inside the flat vector.
std::size_t weight_offset(const NetSpec& spec, std::size_t layer);
std::size_t bias_offset(const NetSpec& spec, std::size_t layer);

double forward(const NetSpec& spec, std::span<const double> params, std::span<const double> x);
inline double forward(const NetParams& p, std::span<const double> x) { return forward(p.spec, p.flat, x); }

struct NetGradients {
  std::vector<double> d_params;
  std::vector<double> d_inputs;
};

// Reverse-mode gradients of the scalar output. Subgradient 0 at ReLU kinks.
NetGradients gradients(const NetSpec& spec, std::span<const double> params, std::span<const double> x);
inline NetGradients gradients(const NetParams& p, std::span<const double> x) { return gradients(p.spec, p.flat, x); }

// Activations kept between forward_batch and backward_batch.
struct NetWorkspace {
  std::vector<Eigen::MatrixXd> pre;   // per layer, fan_out × batch
  std::vector<Eigen::MatrixXd> post;  // hidden activations
  Eigen::MatrixXd input;
  Eigen::MatrixXd delta;
};

// x is input_width × batch (column per sample).
void forward_batch(const NetSpec& spec, std::span<const double> params, const Eigen::MatrixXd& x,
                   NetWorkspace& ws, std::span<double> out);

/// d_params += Σ_j d_out[j] · ∂out_j/∂params, using the activations from the
/// preceding forward_batch. d_inputs (optional) receives ∂(Σ d_out·out)/∂x.
void backward_batch(const NetSpec& spec, std::span<const double> params, NetWorkspace& ws,
                    std::span<const double> d_out, std::span<double> d_params,
                    Eigen::MatrixXd* d_inputs = nullptr);

}  // namespace vfm
