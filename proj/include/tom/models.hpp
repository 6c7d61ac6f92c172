#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>

#include "tom/buffer.hpp"
#include "tom/mlp.hpp"

namespace tom {

// Next-state mean A s + B a + c with diagonal Gaussian noise; fit in closed
// form by weighted least squares.
struct LinearGaussianModel {
  Eigen::MatrixXd a;  // state_dim x state_dim
  Eigen::MatrixXd b;  // state_dim x action_dim
  Eigen::VectorXd c;
  Eigen::VectorXd noise_std;

  Eigen::VectorXd mean(const Eigen::VectorXd& s, const Eigen::VectorXd& act) const {
    return a * s + b * act + c;
  }
  double log_likelihood(const Eigen::VectorXd& s, const Eigen::VectorXd& act,
                        const Eigen::VectorXd& s2) const;
  Eigen::VectorXd sample(const Eigen::VectorXd& s, const Eigen::VectorXd& act, Rng& rng) const;
};

LinearGaussianModel fit_linear_gaussian_closed_form(const ReplayBuffer& buffer,
                                                    const Eigen::VectorXd& weights,
                                                    double ridge = 1e-6,
                                                    double noise_floor = 1e-3);

// Diagonal-Gaussian MLP dynamics model predicting the state delta. The flat
// parameter vector holds the mean network followed by the per-dimension
// log-std, the latter clamped to [-5, 2].
struct GaussianMlpModel {
  MlpSpec mean_net;
  ParamVector params;  // [net params; log_std]
  int state_dim = 0;
  int action_dim = 0;
  bool predicts_delta = true;
  double log_std_min = -5.0;
  double log_std_max = 2.0;

  static GaussianMlpModel make(int state_dim, int action_dim, const std::vector<int>& hidden,
                               Rng& rng);

  Eigen::Index net_param_count() const { return mean_net.param_count(); }
  Eigen::VectorXd clamped_log_std() const;
  Eigen::VectorXd mean(const Eigen::VectorXd& s, const Eigen::VectorXd& a) const;
  Eigen::MatrixXd mean_batch(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) const;
  double log_likelihood(const Eigen::VectorXd& s, const Eigen::VectorXd& a,
                        const Eigen::VectorXd& s2) const;
  Eigen::VectorXd sample(const Eigen::VectorXd& s, const Eigen::VectorXd& a, Rng& rng) const;
};

// Mean weighted negative log-likelihood over a batch; weights are
// normalized to mean 1 inside.
double model_nll(const GaussianMlpModel& model, const Eigen::MatrixXd& states,
                 const Eigen::MatrixXd& actions, const Eigen::MatrixXd& next_states,
                 const Eigen::VectorXd& weights);
ParamVector model_nll_gradient(const GaussianMlpModel& model, const Eigen::MatrixXd& states,
                               const Eigen::MatrixXd& actions,
                               const Eigen::MatrixXd& next_states,
                               const Eigen::VectorXd& weights);

// One Adam step on the weighted NLL. Throws on all-zero weights.
void weighted_mle_step(GaussianMlpModel& model, const Eigen::MatrixXd& states,
                       const Eigen::MatrixXd& actions, const Eigen::MatrixXd& next_states,
                       const Eigen::VectorXd& weights, AdamState& adam);

enum class WeightSchemeKind { kUniform, kTom, kPmac };

WeightSchemeKind weight_scheme_from_name(const std::string& name);
const char* weight_scheme_name(WeightSchemeKind kind);

struct WeightScheme {
  WeightSchemeKind kind = WeightSchemeKind::kUniform;
  double decay_rate = 0.996;  // pmac
};

// Per-transition weights aligned with buffer order. uniform: all ones.
// tom: the provided importance weights, verbatim. pmac: geometric recency
// decay over collection rounds, newest round holding mass (1 - decay),
// normalized to sum 1 and spread evenly within each round.
Eigen::VectorXd compute_weights(const WeightScheme& scheme, const ReplayBuffer& buffer,
                                const Eigen::VectorXd* tom_weights = nullptr);

using ModelSampleFn =
    std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&, Rng&)>;
using RewardFn = std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>;

struct ModelRollout {
  std::vector<Transition> transitions;
  int truncated = 0;  // rollouts cut short by a non-finite sample
};

// k-step synthetic rollouts from each start state; rewards come from the
// environment's known reward function.
ModelRollout model_rollout(const ModelSampleFn& model, const PolicyFn& policy,
                           const RewardFn& reward, const std::vector<Eigen::VectorXd>& starts,
                           int k, Rng& rng);

ModelSampleFn make_sampler(const GaussianMlpModel& model);
ModelSampleFn make_sampler(const LinearGaussianModel& model);

}  // namespace tom
