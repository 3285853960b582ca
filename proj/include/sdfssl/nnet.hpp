#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sdfssl/common.hpp"

namespace sdfssl {

// Minimal reverse-mode MLP core. Everything is a pure function over flat
// parameter vectors; the trainer owns all mutation by replacing vectors.

enum class Activation { identity, relu, tanh, sigmoid };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

struct NetworkSpec {
  std::vector<int> layer_sizes;          // includes input and output widths
  std::vector<Activation> activations;   // one per affine layer
  std::uint64_t seed = 0;

  int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }
  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  void validate() const;  // throws ConfigError
};

// Convenience builder: `hidden` activation on all but the last layer.
NetworkSpec make_mlp_spec(std::vector<int> sizes, Activation hidden, Activation output,
                          std::uint64_t seed);

struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t len = 0;
};

struct ParamVector {
  std::vector<ParamBlock> blocks;
  std::vector<double> values;

  std::size_t total_len() const { return values.size(); }
  std::string scalar_name(std::size_t idx) const;
};

struct Gradient {
  std::vector<double> values;
};

std::size_t param_count(const NetworkSpec& spec);

// Uniform Glorot-style init in [-sqrt(6/(fan_in+fan_out)), +...], biases zero.
// Driven only by spec.seed; identical spec+seed gives bit-identical vectors.
ParamVector init_network(const NetworkSpec& spec);

std::vector<double> forward(const ParamVector& params, const NetworkSpec& spec,
                            std::span<const double> input);

// Row-major batch of inputs -> row-major outputs (rows * output_dim).
void forward_batch(const ParamVector& params, const NetworkSpec& spec,
                   std::span<const double> inputs, std::size_t rows, std::span<double> outputs);

struct Batch {
  std::size_t input_dim = 0;
  std::vector<double> inputs;       // rows * input_dim
  std::vector<double> targets;      // rows * output_dim; may be empty
  std::vector<double> row_weights;  // rows, or empty for all-ones

  std::size_t rows() const { return input_dim ? inputs.size() / input_dim : 0; }
};

enum class LossKind {
  squared_norm,  // sum of squared outputs over the whole batch
  l1,            // mean |out - target|
  l2,            // mean (out - target)^2
  grad_penalty,  // mean (|d out / d point| - 1)^2, finite differences over the
                 // trailing `point_dims` input coordinates
};

struct LossSpec {
  LossKind kind = LossKind::l1;
  int point_dims = 2;
  double fd_step = 1e-4;
};

struct LossGrad {
  double loss = 0.0;
  Gradient grad;
};

// Returns the scalar loss and its exact derivative w.r.t. every parameter
// (grad_penalty differentiates the stencil expression exactly).
LossGrad forward_backward(const ParamVector& params, const NetworkSpec& spec, const Batch& batch,
                          const LossSpec& loss);

ParamVector sgd_step(const ParamVector& params, const Gradient& grad, double lr);

// ---------------------------------------------------------------------------
// Checkpoint container (JSON, bit-exact round trip)
// ---------------------------------------------------------------------------

struct CheckpointMeta {
  std::string phase;
  int epoch = 0;
  std::uint64_t seed = 0;
};

struct Checkpoint {
  NetworkSpec spec;
  ParamVector params;
  CheckpointMeta meta;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace sdfssl
