#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tom/common.hpp"
#include "tom/rng.hpp"

namespace tom {

enum class Activation { kIdentity, kRelu, kTanh, kSigmoid };

Activation activation_from_name(const std::string& name);
const char* activation_name(Activation a);

// Fixed-depth multilayer perceptron description. Parameters live in a flat
// vector (see param_count / init_params); for each layer the weight matrix
// (out x in, row-major) is followed by the bias vector.
struct MlpSpec {
  int input_dim = 1;
  std::vector<int> hidden_layers;
  int output_dim = 1;
  Activation hidden_activation = Activation::kRelu;
  Activation output_activation = Activation::kIdentity;

  int layer_count() const { return static_cast<int>(hidden_layers.size()) + 1; }
  int layer_in(int layer) const;
  int layer_out(int layer) const;
  Eigen::Index param_count() const;
  void validate() const;  // throws std::invalid_argument on bad dimensions
};

using ParamVector = Eigen::VectorXd;

// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per layer.
ParamVector init_params(const MlpSpec& spec, Rng& rng);

Eigen::VectorXd mlp_forward(const MlpSpec& spec, const ParamVector& params,
                            const Eigen::VectorXd& input);

// Batched forward; rows are samples.
Eigen::MatrixXd mlp_forward_batch(const MlpSpec& spec, const ParamVector& params,
                                  const Eigen::MatrixXd& inputs);

// Post-activation values per layer, kept around for the backward pass.
// acts[0] is the input batch, acts[L] the network output.
struct MlpForwardCache {
  std::vector<Eigen::MatrixXd> acts;
};

Eigen::MatrixXd mlp_forward_batch_cached(const MlpSpec& spec, const ParamVector& params,
                                         const Eigen::MatrixXd& inputs,
                                         MlpForwardCache& cache);

struct MlpGradients {
  ParamVector params;
  Eigen::VectorXd input;
};

struct MlpBatchGradients {
  ParamVector params;       // summed over rows
  Eigen::MatrixXd inputs;   // per-row input gradients
};

// Gradients of <upstream, output> w.r.t. parameters and input.
MlpGradients mlp_gradient(const MlpSpec& spec, const ParamVector& params,
                          const Eigen::VectorXd& input,
                          const Eigen::VectorXd& upstream);

// Batched reverse pass from a cached forward. upstream rows align with
// cache.acts[0] rows; the parameter gradient is summed over rows.
MlpBatchGradients mlp_backward_batch(const MlpSpec& spec, const ParamVector& params,
                                     const MlpForwardCache& cache,
                                     const Eigen::MatrixXd& upstream);

MlpBatchGradients mlp_gradient_batch(const MlpSpec& spec, const ParamVector& params,
                                     const Eigen::MatrixXd& inputs,
                                     const Eigen::MatrixXd& upstream);

struct AdamState {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  std::int64_t step_count = 0;

  AdamState() = default;
  explicit AdamState(Eigen::Index n, double lr = 3e-4)
      : learning_rate(lr),
        first_moment(Eigen::VectorXd::Zero(n)),
        second_moment(Eigen::VectorXd::Zero(n)) {}
};

// Bias-corrected Adam update, in place. Throws NumericalError on a
// non-finite gradient.
void adam_step(ParamVector& params, const Eigen::VectorXd& grad, AdamState& state);

// A differentiable scalar loss: value plus analytic gradient.
struct ScalarObjective {
  std::function<double(const ParamVector&)> value;
  std::function<ParamVector(const ParamVector&)> gradient;
};

// Max relative error between analytic and central-difference gradients over
// a random subset of coordinates (>= max_coords, all if fewer). The error
// denominator is floored at 1 so near-zero coordinates are judged on
// absolute error.
double finite_diff_check(const ScalarObjective& objective, const ParamVector& params,
                         double h, Rng& rng, int max_coords = 100);

}  // namespace tom
