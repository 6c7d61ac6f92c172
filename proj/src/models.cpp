#include "tom/models.hpp"

#include <cmath>

namespace tom {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2*pi)

double diag_gaussian_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                                 const Eigen::VectorXd& stddev) {
  double ll = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double z = (x[j] - mean[j]) / stddev[j];
    ll -= 0.5 * z * z + std::log(stddev[j]) + kHalfLog2Pi;
  }
  return ll;
}

}  // namespace

double LinearGaussianModel::log_likelihood(const Eigen::VectorXd& s, const Eigen::VectorXd& act,
                                           const Eigen::VectorXd& s2) const {
  return diag_gaussian_log_density(s2, mean(s, act), noise_std);
}

Eigen::VectorXd LinearGaussianModel::sample(const Eigen::VectorXd& s, const Eigen::VectorXd& act,
                                            Rng& rng) const {
  Eigen::VectorXd out = mean(s, act);
  for (Eigen::Index j = 0; j < out.size(); ++j) out[j] += noise_std[j] * rng.normal();
  return out;
}

LinearGaussianModel fit_linear_gaussian_closed_form(const ReplayBuffer& buffer,
                                                    const Eigen::VectorXd& weights,
                                                    double ridge, double noise_floor) {
  require(!buffer.empty(), "fit_linear_gaussian: empty buffer");
  require(static_cast<std::size_t>(weights.size()) == buffer.size(),
          "fit_linear_gaussian: weights length mismatch");
  require((weights.array() >= 0.0).all() && weights.sum() > 0.0,
          "fit_linear_gaussian: weights must be nonnegative with positive sum");

  const Eigen::Index sd = buffer[0].state.size();
  const Eigen::Index ad = buffer[0].action.size();
  const Eigen::Index n = static_cast<Eigen::Index>(buffer.size());
  const Eigen::Index k = sd + ad + 1;

  Eigen::MatrixXd x(n, k);
  Eigen::MatrixXd y(n, sd);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& t = buffer[static_cast<std::size_t>(i)];
    x.row(i) << t.state.transpose(), t.action.transpose(), 1.0;
    y.row(i) = t.next_state.transpose();
  }
  const Eigen::VectorXd w = weights / weights.sum();
  const Eigen::MatrixXd xw = x.array().colwise() * w.array();
  Eigen::MatrixXd gram = xw.transpose() * x;
  gram.diagonal().array() += ridge;
  const Eigen::MatrixXd beta = gram.ldlt().solve(xw.transpose() * y);  // k x sd
  if (!beta.allFinite()) {
    throw NumericalError("fit_linear_gaussian: rank-deficient system beyond ridge rescue");
  }

  LinearGaussianModel model;
  model.a = beta.topRows(sd).transpose();
  model.b = beta.middleRows(sd, ad).transpose();
  model.c = beta.bottomRows(1).transpose();
  const Eigen::MatrixXd resid = y - x * beta;
  model.noise_std.resize(sd);
  for (Eigen::Index j = 0; j < sd; ++j) {
    const double var = (w.array() * resid.col(j).array().square()).sum();
    model.noise_std[j] = std::max(noise_floor, std::sqrt(var));
  }
  return model;
}

GaussianMlpModel GaussianMlpModel::make(int state_dim, int action_dim,
                                        const std::vector<int>& hidden, Rng& rng) {
  GaussianMlpModel m;
  m.state_dim = state_dim;
  m.action_dim = action_dim;
  m.mean_net.input_dim = state_dim + action_dim;
  m.mean_net.hidden_layers = hidden;
  m.mean_net.output_dim = state_dim;
  m.mean_net.hidden_activation = Activation::kSigmoid;
  m.mean_net.output_activation = Activation::kIdentity;
  ParamVector net = init_params(m.mean_net, rng);
  m.params.resize(net.size() + state_dim);
  m.params.head(net.size()) = net;
  m.params.tail(state_dim).setConstant(-1.0);
  return m;
}

Eigen::VectorXd GaussianMlpModel::clamped_log_std() const {
  return params.tail(state_dim).cwiseMax(log_std_min).cwiseMin(log_std_max);
}

Eigen::MatrixXd GaussianMlpModel::mean_batch(const Eigen::MatrixXd& states,
                                             const Eigen::MatrixXd& actions) const {
  Eigen::MatrixXd sa(states.rows(), states.cols() + actions.cols());
  sa << states, actions;
  Eigen::MatrixXd delta =
      mlp_forward_batch(mean_net, params.head(net_param_count()), sa);
  return predicts_delta ? Eigen::MatrixXd(states + delta) : delta;
}

Eigen::VectorXd GaussianMlpModel::mean(const Eigen::VectorXd& s, const Eigen::VectorXd& a) const {
  return mean_batch(s.transpose(), a.transpose()).row(0).transpose();
}

double GaussianMlpModel::log_likelihood(const Eigen::VectorXd& s, const Eigen::VectorXd& a,
                                        const Eigen::VectorXd& s2) const {
  return diag_gaussian_log_density(s2, mean(s, a), clamped_log_std().array().exp());
}

Eigen::VectorXd GaussianMlpModel::sample(const Eigen::VectorXd& s, const Eigen::VectorXd& a,
                                         Rng& rng) const {
  Eigen::VectorXd out = mean(s, a);
  const Eigen::VectorXd stddev = clamped_log_std().array().exp();
  for (Eigen::Index j = 0; j < out.size(); ++j) out[j] += stddev[j] * rng.normal();
  return out;
}

namespace {

Eigen::VectorXd normalized_batch_weights(const Eigen::VectorXd& weights) {
  require((weights.array() >= 0.0).all(), "weighted MLE: negative weight");
  const double mean = weights.mean();
  require(mean > 0.0, "weighted MLE: weights are all zero");
  return weights / mean;
}

}  // namespace

double model_nll(const GaussianMlpModel& model, const Eigen::MatrixXd& states,
                 const Eigen::MatrixXd& actions, const Eigen::MatrixXd& next_states,
                 const Eigen::VectorXd& weights) {
  const Eigen::VectorXd w = normalized_batch_weights(weights);
  const Eigen::MatrixXd mu = model.mean_batch(states, actions);
  const Eigen::VectorXd log_std = model.clamped_log_std();
  const Eigen::VectorXd inv_var = (-2.0 * log_std.array()).exp();
  const Eigen::Index n = states.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double nll = 0.0;
    for (Eigen::Index j = 0; j < model.state_dim; ++j) {
      const double diff = next_states(i, j) - mu(i, j);
      nll += 0.5 * diff * diff * inv_var[j] + log_std[j] + kHalfLog2Pi;
    }
    total += w[i] * nll;
  }
  return total / static_cast<double>(n);
}

ParamVector model_nll_gradient(const GaussianMlpModel& model, const Eigen::MatrixXd& states,
                               const Eigen::MatrixXd& actions,
                               const Eigen::MatrixXd& next_states,
                               const Eigen::VectorXd& weights) {
  const Eigen::VectorXd w = normalized_batch_weights(weights);
  const Eigen::Index n = states.rows();
  const Eigen::Index sd = model.state_dim;

  Eigen::MatrixXd sa(n, states.cols() + actions.cols());
  sa << states, actions;
  MlpForwardCache cache;
  const Eigen::MatrixXd delta =
      mlp_forward_batch_cached(model.mean_net, model.params.head(model.net_param_count()), sa, cache);
  const Eigen::MatrixXd mu = model.predicts_delta ? Eigen::MatrixXd(states + delta) : delta;

  const Eigen::VectorXd raw_log_std = model.params.tail(sd);
  const Eigen::VectorXd log_std = model.clamped_log_std();
  const Eigen::VectorXd inv_var = (-2.0 * log_std.array()).exp();

  Eigen::MatrixXd upstream(n, sd);
  Eigen::VectorXd log_std_grad = Eigen::VectorXd::Zero(sd);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < sd; ++j) {
      const double diff = mu(i, j) - next_states(i, j);
      upstream(i, j) = w[i] * diff * inv_var[j] / static_cast<double>(n);
      log_std_grad[j] +=
          w[i] * (1.0 - diff * diff * inv_var[j]) / static_cast<double>(n);
    }
  }
  // Clamped coordinates stop receiving gradient.
  for (Eigen::Index j = 0; j < sd; ++j) {
    if (raw_log_std[j] <= model.log_std_min || raw_log_std[j] >= model.log_std_max) {
      log_std_grad[j] = 0.0;
    }
  }

  const ParamVector net_grad =
      mlp_backward_batch(model.mean_net, model.params.head(model.net_param_count()), cache,
                         upstream)
          .params;
  ParamVector grad(model.params.size());
  grad.head(net_grad.size()) = net_grad;
  grad.tail(sd) = log_std_grad;
  return grad;
}

void weighted_mle_step(GaussianMlpModel& model, const Eigen::MatrixXd& states,
                       const Eigen::MatrixXd& actions, const Eigen::MatrixXd& next_states,
                       const Eigen::VectorXd& weights, AdamState& adam) {
  adam_step(model.params, model_nll_gradient(model, states, actions, next_states, weights), adam);
}

WeightSchemeKind weight_scheme_from_name(const std::string& name) {
  if (name == "uniform") return WeightSchemeKind::kUniform;
  if (name == "tom") return WeightSchemeKind::kTom;
  if (name == "pmac") return WeightSchemeKind::kPmac;
  throw std::invalid_argument("unknown weight scheme: " + name);
}

const char* weight_scheme_name(WeightSchemeKind kind) {
  switch (kind) {
    case WeightSchemeKind::kUniform: return "uniform";
    case WeightSchemeKind::kTom: return "tom";
    case WeightSchemeKind::kPmac: return "pmac";
  }
  return "uniform";
}

Eigen::VectorXd compute_weights(const WeightScheme& scheme, const ReplayBuffer& buffer,
                                const Eigen::VectorXd* tom_weights) {
  const Eigen::Index n = static_cast<Eigen::Index>(buffer.size());
  switch (scheme.kind) {
    case WeightSchemeKind::kUniform:
      return Eigen::VectorXd::Ones(n);
    case WeightSchemeKind::kTom: {
      require(tom_weights != nullptr, "compute_weights: tom scheme needs importance weights");
      require(tom_weights->size() == n, "compute_weights: misaligned importance weights");
      return *tom_weights;
    }
    case WeightSchemeKind::kPmac:
      break;
  }

  // PMAC: unroll the recursive decay over collection rounds. Each new round
  // multiplies all prior round masses by the decay rate and takes 1 - decay
  // for itself, so the oldest round holds decay^(R-1).
  const std::vector<int> round_of = buffer.rounds();
  std::vector<Eigen::Index> counts;
  for (int r : round_of) {
    if (r >= static_cast<int>(counts.size())) counts.resize(static_cast<std::size_t>(r) + 1, 0);
    counts[static_cast<std::size_t>(r)] += 1;
  }
  // Compact away empty rounds so the geometric ladder runs over rounds that
  // actually hold data.
  std::vector<int> compact(counts.size(), -1);
  int n_rounds = 0;
  for (std::size_t r = 0; r < counts.size(); ++r) {
    if (counts[r] > 0) compact[r] = n_rounds++;
  }
  const double decay = scheme.decay_rate;
  std::vector<double> mass(static_cast<std::size_t>(n_rounds), 0.0);
  for (int r = 0; r < n_rounds; ++r) {
    if (r == n_rounds - 1) {
      mass[static_cast<std::size_t>(r)] =
          (n_rounds == 1) ? 1.0 : (1.0 - decay);
    } else if (r == 0) {
      mass[0] = std::pow(decay, n_rounds - 1);
    } else {
      mass[static_cast<std::size_t>(r)] = (1.0 - decay) * std::pow(decay, n_rounds - 1 - r);
    }
  }
  std::vector<Eigen::Index> compact_counts(static_cast<std::size_t>(n_rounds), 0);
  for (std::size_t r = 0; r < counts.size(); ++r) {
    if (compact[r] >= 0) compact_counts[static_cast<std::size_t>(compact[r])] = counts[r];
  }
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int r = compact[static_cast<std::size_t>(round_of[static_cast<std::size_t>(i)])];
    w[i] = mass[static_cast<std::size_t>(r)] /
           static_cast<double>(compact_counts[static_cast<std::size_t>(r)]);
  }
  return w;
}

ModelRollout model_rollout(const ModelSampleFn& model, const PolicyFn& policy,
                           const RewardFn& reward, const std::vector<Eigen::VectorXd>& starts,
                           int k, Rng& rng) {
  ModelRollout out;
  out.transitions.reserve(starts.size() * static_cast<std::size_t>(std::max(k, 0)));
  for (const Eigen::VectorXd& start : starts) {
    Eigen::VectorXd s = start;
    for (int step = 0; step < k; ++step) {
      Eigen::VectorXd a = policy(s, rng);
      Eigen::VectorXd s2 = model(s, a, rng);
      if (!s2.allFinite()) {
        ++out.truncated;
        break;
      }
      Transition t;
      t.state = s;
      t.action = std::move(a);
      t.next_state = s2;
      t.reward = reward(s, t.action);
      t.episode_start = (step == 0);
      out.transitions.push_back(std::move(t));
      s = std::move(s2);
    }
  }
  return out;
}

ModelSampleFn make_sampler(const GaussianMlpModel& model) {
  return [&model](const Eigen::VectorXd& s, const Eigen::VectorXd& a, Rng& rng) {
    return model.sample(s, a, rng);
  };
}

ModelSampleFn make_sampler(const LinearGaussianModel& model) {
  return [&model](const Eigen::VectorXd& s, const Eigen::VectorXd& a, Rng& rng) {
    return model.sample(s, a, rng);
  };
}

}  // namespace tom
