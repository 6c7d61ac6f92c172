#pragma once

#include <Eigen/Dense>

#include "tom/buffer.hpp"
#include "tom/mlp.hpp"

namespace tom {

class Env;

// Squashed-Gaussian actor. The network emits per-dimension mean and raw
// log-std (clamped to [-5, 2]); samples pass through tanh and are rescaled
// to the action bounds, so they land strictly inside them.
struct StochasticPolicy {
  MlpSpec actor;
  ParamVector params;
  Eigen::VectorXd action_low;
  Eigen::VectorXd action_high;
  double log_std_min = -5.0;
  double log_std_max = 2.0;

  static StochasticPolicy make(int state_dim, int action_dim, const std::vector<int>& hidden,
                               const Eigen::VectorXd& low, const Eigen::VectorXd& high, Rng& rng);

  int action_dim() const { return static_cast<int>(action_low.size()); }
  Eigen::VectorXd scale() const { return 0.5 * (action_high - action_low); }
  Eigen::VectorXd center() const { return 0.5 * (action_high + action_low); }

  // Mean and clamped log-std heads for a batch of states.
  void heads(const Eigen::MatrixXd& states, Eigen::MatrixXd& mean,
             Eigen::MatrixXd& log_std) const;

  Eigen::VectorXd act(const Eigen::VectorXd& state, bool deterministic, Rng& rng) const;
  // One stochastic action per row; usable as an ActionSampler.
  Eigen::MatrixXd act_batch(const Eigen::MatrixXd& states, Rng& rng) const;

  // Log-density including the tanh/rescale Jacobian correction. Throws if
  // the action sits on or outside the bounds.
  double log_prob(const Eigen::VectorXd& state, const Eigen::VectorXd& action) const;
};

// Twin critics with polyak-averaged target copies and a fixed entropy
// coefficient.
struct CriticPair {
  MlpSpec net;
  ParamVector q1, q2, q1_target, q2_target;
  double polyak = 0.995;
  double alpha = 0.2;

  static CriticPair make(int state_dim, int action_dim, const std::vector<int>& hidden, Rng& rng);

  Eigen::VectorXd q_min_target(const Eigen::MatrixXd& sa) const;
};

struct SacBatch {
  Eigen::MatrixXd states;
  Eigen::MatrixXd actions;
  Eigen::VectorXd rewards;
  Eigen::MatrixXd next_states;
};

struct SacUpdateResult {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
};

struct LossGrad {
  double loss = 0.0;
  ParamVector grad;
};

// Joint MSE of both critics against fixed targets; params = [q1; q2].
LossGrad critic_loss_grad(const MlpSpec& net, const ParamVector& joint_params,
                          const Eigen::MatrixXd& sa, const Eigen::VectorXd& targets);

// Reparameterized actor objective alpha*log pi - min Q on pinned noise, as a
// pure function of the actor parameters.
LossGrad actor_loss_grad(const StochasticPolicy& policy, const ParamVector& actor_params,
                         const CriticPair& critics, const Eigen::MatrixXd& states,
                         const Eigen::MatrixXd& eps);

// One soft-Bellman critic step plus one reparameterized actor step, then a
// polyak target update. Throws NumericalError on a non-finite loss.
SacUpdateResult policy_update(StochasticPolicy& policy, CriticPair& critics,
                              const SacBatch& batch, AdamState& actor_adam,
                              AdamState& critic_adam, double gamma, Rng& rng);

// Mean undiscounted return of the deterministic policy over full episodes.
double evaluate_policy(const Env& env, const StochasticPolicy& policy, int episodes, Rng& rng);

}  // namespace tom
