#include "tom/mlp.hpp"

#include <algorithm>
#include <cmath>

namespace tom {
namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeightMap = Eigen::Map<const RowMajorMatrix>;
using WeightMap = Eigen::Map<RowMajorMatrix>;

void apply_activation(Activation act, Eigen::MatrixXd& z) {
  switch (act) {
    case Activation::kIdentity:
      break;
    case Activation::kRelu:
      z = z.cwiseMax(0.0);
      break;
    case Activation::kTanh:
      z = z.array().tanh();
      break;
    case Activation::kSigmoid:
      z = 0.5 * (1.0 + (0.5 * z.array()).tanh());
      break;
  }
}

// Derivative expressed through the post-activation value.
Eigen::MatrixXd activation_deriv_from_output(Activation act, const Eigen::MatrixXd& a) {
  switch (act) {
    case Activation::kIdentity:
      return Eigen::MatrixXd::Ones(a.rows(), a.cols());
    case Activation::kRelu:
      return (a.array() > 0.0).cast<double>();
    case Activation::kTanh:
      return 1.0 - a.array().square();
    case Activation::kSigmoid:
      return a.array() * (1.0 - a.array());
  }
  return Eigen::MatrixXd::Ones(a.rows(), a.cols());
}

}  // namespace

Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "sigmoid") return Activation::kSigmoid;
  throw std::invalid_argument("unknown activation: " + name);
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "identity";
}

int MlpSpec::layer_in(int layer) const {
  return layer == 0 ? input_dim : hidden_layers[layer - 1];
}

int MlpSpec::layer_out(int layer) const {
  return layer == layer_count() - 1 ? output_dim : hidden_layers[layer];
}

Eigen::Index MlpSpec::param_count() const {
  Eigen::Index n = 0;
  for (int l = 0; l < layer_count(); ++l) {
    n += static_cast<Eigen::Index>(layer_out(l)) * layer_in(l) + layer_out(l);
  }
  return n;
}

void MlpSpec::validate() const {
  require(input_dim >= 1, "MlpSpec: input_dim must be >= 1");
  require(output_dim >= 1, "MlpSpec: output_dim must be >= 1");
  for (int h : hidden_layers) require(h >= 1, "MlpSpec: hidden sizes must be >= 1");
}

ParamVector init_params(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  ParamVector p(spec.param_count());
  Eigen::Index off = 0;
  for (int l = 0; l < spec.layer_count(); ++l) {
    const int in = spec.layer_in(l);
    const int out = spec.layer_out(l);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(out) * in + out; ++i) {
      p[off + i] = rng.uniform(-bound, bound);
    }
    off += static_cast<Eigen::Index>(out) * in + out;
  }
  return p;
}

Eigen::MatrixXd mlp_forward_batch_cached(const MlpSpec& spec, const ParamVector& params,
                                         const Eigen::MatrixXd& inputs,
                                         MlpForwardCache& cache) {
  require(inputs.cols() == spec.input_dim, "mlp_forward: input dimension mismatch");
  require(params.size() == spec.param_count(), "mlp_forward: parameter count mismatch");
  cache.acts.clear();
  cache.acts.reserve(spec.layer_count() + 1);
  cache.acts.push_back(inputs);
  Eigen::Index off = 0;
  for (int l = 0; l < spec.layer_count(); ++l) {
    const int in = spec.layer_in(l);
    const int out = spec.layer_out(l);
    ConstWeightMap w(params.data() + off, out, in);
    Eigen::Map<const Eigen::VectorXd> b(params.data() + off + static_cast<Eigen::Index>(out) * in, out);
    Eigen::MatrixXd z = cache.acts.back() * w.transpose();
    z.rowwise() += b.transpose();
    const bool last = (l == spec.layer_count() - 1);
    apply_activation(last ? spec.output_activation : spec.hidden_activation, z);
    cache.acts.push_back(std::move(z));
    off += static_cast<Eigen::Index>(out) * in + out;
  }
  return cache.acts.back();
}

Eigen::MatrixXd mlp_forward_batch(const MlpSpec& spec, const ParamVector& params,
                                  const Eigen::MatrixXd& inputs) {
  MlpForwardCache cache;
  return mlp_forward_batch_cached(spec, params, inputs, cache);
}

Eigen::VectorXd mlp_forward(const MlpSpec& spec, const ParamVector& params,
                            const Eigen::VectorXd& input) {
  Eigen::MatrixXd out = mlp_forward_batch(spec, params, input.transpose());
  return out.row(0).transpose();
}

MlpBatchGradients mlp_backward_batch(const MlpSpec& spec, const ParamVector& params,
                                     const MlpForwardCache& cache,
                                     const Eigen::MatrixXd& upstream) {
  require(upstream.cols() == spec.output_dim, "mlp_backward: upstream dimension mismatch");
  require(upstream.rows() == cache.acts.front().rows(), "mlp_backward: upstream rows mismatch");

  MlpBatchGradients g;
  g.params = ParamVector::Zero(spec.param_count());

  // Offsets of each layer's parameter block.
  std::vector<Eigen::Index> offsets(spec.layer_count());
  Eigen::Index off = 0;
  for (int l = 0; l < spec.layer_count(); ++l) {
    offsets[l] = off;
    off += static_cast<Eigen::Index>(spec.layer_out(l)) * spec.layer_in(l) + spec.layer_out(l);
  }

  Eigen::MatrixXd delta = upstream;  // dL/d(post-activation of current layer)
  for (int l = spec.layer_count() - 1; l >= 0; --l) {
    const int in = spec.layer_in(l);
    const int out = spec.layer_out(l);
    const bool last = (l == spec.layer_count() - 1);
    const Activation act = last ? spec.output_activation : spec.hidden_activation;
    // dL/dz = dL/da * a'(z)
    Eigen::MatrixXd dz = delta.cwiseProduct(activation_deriv_from_output(act, cache.acts[l + 1]));
    ConstWeightMap w(params.data() + offsets[l], out, in);
    WeightMap dw(g.params.data() + offsets[l], out, in);
    dw = dz.transpose() * cache.acts[l];
    Eigen::Map<Eigen::VectorXd> db(g.params.data() + offsets[l] + static_cast<Eigen::Index>(out) * in, out);
    db = dz.colwise().sum().transpose();
    delta = dz * w;
  }
  g.inputs = std::move(delta);
  return g;
}

MlpBatchGradients mlp_gradient_batch(const MlpSpec& spec, const ParamVector& params,
                                     const Eigen::MatrixXd& inputs,
                                     const Eigen::MatrixXd& upstream) {
  MlpForwardCache cache;
  mlp_forward_batch_cached(spec, params, inputs, cache);
  return mlp_backward_batch(spec, params, cache, upstream);
}

MlpGradients mlp_gradient(const MlpSpec& spec, const ParamVector& params,
                          const Eigen::VectorXd& input,
                          const Eigen::VectorXd& upstream) {
  MlpBatchGradients bg = mlp_gradient_batch(spec, params, input.transpose(), upstream.transpose());
  return MlpGradients{std::move(bg.params), bg.inputs.row(0).transpose()};
}

void adam_step(ParamVector& params, const Eigen::VectorXd& grad, AdamState& state) {
  require(params.size() == grad.size(), "adam_step: gradient size mismatch");
  require(state.first_moment.size() == params.size(), "adam_step: state size mismatch");
  if (!grad.allFinite()) throw NumericalError("adam_step: non-finite gradient");

  state.step_count += 1;
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad;
  state.second_moment =
      state.beta2 * state.second_moment.array() + (1.0 - state.beta2) * grad.array().square();
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  params.array() -= state.learning_rate * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + state.epsilon);
}

double finite_diff_check(const ScalarObjective& objective, const ParamVector& params,
                         double h, Rng& rng, int max_coords) {
  const Eigen::Index n = params.size();
  ParamVector analytic = objective.gradient(params);
  require(analytic.size() == n, "finite_diff_check: gradient size mismatch");

  std::vector<Eigen::Index> coords(n);
  for (Eigen::Index i = 0; i < n; ++i) coords[i] = i;
  Eigen::Index n_check = n;
  if (n > max_coords) {
    n_check = max_coords;
    for (Eigen::Index i = 0; i < n_check; ++i) {
      const Eigen::Index j = i + rng.uniform_int(n - i);
      std::swap(coords[i], coords[j]);
    }
  }

  ParamVector p = params;
  double worst = 0.0;
  for (Eigen::Index k = 0; k < n_check; ++k) {
    const Eigen::Index i = coords[k];
    const double orig = p[i];
    p[i] = orig + h;
    const double up = objective.value(p);
    p[i] = orig - h;
    const double down = objective.value(p);
    p[i] = orig;
    const double fd = (up - down) / (2.0 * h);
    const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(fd)});
    worst = std::max(worst, std::abs(analytic[i] - fd) / denom);
  }
  return worst;
}

}  // namespace tom
