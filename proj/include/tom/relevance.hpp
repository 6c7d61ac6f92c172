#pragma once

#include <Eigen/Dense>
#include <functional>

#include "tom/buffer.hpp"
#include "tom/fdiv.hpp"
#include "tom/mlp.hpp"
#include "tom/tabular.hpp"

namespace tom {

// Draws one action per row of `states`.
using ActionSampler = std::function<Eigen::MatrixXd(const Eigen::MatrixXd& states, Rng& rng)>;

// Transition classifier c(s,a,s') in (0,1); its logit estimates the log
// density ratio between the current policy's transition footprint and the
// replay buffer's.
struct Discriminator {
  MlpSpec net;
  ParamVector params;
  double clamp_epsilon = 1e-6;
  double reward_clip = 10.0;

  static Discriminator make(int state_dim, int action_dim, const std::vector<int>& hidden,
                            Rng& rng);

  // Rows of `sas` are concatenated (state, action, next_state).
  Eigen::VectorXd output_batch(const Eigen::MatrixXd& sas) const;
  double output(const Eigen::VectorXd& s, const Eigen::VectorXd& a,
                const Eigen::VectorXd& s2) const;
};

// r = -log(1/c - 1), clamped and clipped.
double relevance_reward(const Discriminator& disc, const Eigen::VectorXd& s,
                        const Eigen::VectorXd& a, const Eigen::VectorXd& s2);
Eigen::VectorXd relevance_reward_batch(const Discriminator& disc, const Eigen::MatrixXd& sas);
double reward_from_output(const Discriminator& disc, double c);

// Cross-entropy with policy transitions labeled 1 and replay transitions 0.
double discriminator_loss(const Discriminator& disc, const Eigen::MatrixXd& policy_sas,
                          const Eigen::MatrixXd& replay_sas);
ParamVector discriminator_loss_gradient(const Discriminator& disc,
                                        const Eigen::MatrixXd& policy_sas,
                                        const Eigen::MatrixXd& replay_sas);

struct DiscriminatorTrainConfig {
  int steps = 100;
  int batch = 256;
};

void train_discriminator(Discriminator& disc, const ReplayBuffer& policy_buffer,
                         const ReplayBuffer& replay_buffer,
                         const DiscriminatorTrainConfig& config, AdamState& adam, Rng& rng);

// Lagrangian Q-function of the transition-flow constraint.
struct DualQ {
  MlpSpec net;
  ParamVector params;
  double gamma = 0.99;
  int value_action_samples = 4;  // P

  static DualQ make(int state_dim, int action_dim, const std::vector<int>& hidden, double gamma,
                    Rng& rng);

  Eigen::VectorXd q_batch(const Eigen::MatrixXd& sa) const;
  double q(const Eigen::VectorXd& s, const Eigen::VectorXd& a) const;
};

// Monte-Carlo V(s') = mean_p Q(s', a^p), a^p drawn from the policy.
double state_value(const DualQ& q, const ActionSampler& policy, const Eigen::VectorXd& s2,
                   Rng& rng);

// One minibatch of the dual objective with every sample pinned down, so the
// loss is a pure deterministic function of the Q parameters.
struct DualBatch {
  Eigen::MatrixXd states;
  Eigen::MatrixXd actions;
  Eigen::MatrixXd next_states;
  Eigen::VectorXd rewards;                    // relevance rewards
  std::vector<Eigen::MatrixXd> next_actions;  // P entries, rows align with next_states
  Eigen::MatrixXd init_states;
  std::vector<Eigen::MatrixXd> init_actions;  // P entries, rows align with init_states
};

DualBatch make_dual_batch(const ReplayBuffer& replay, std::size_t batch,
                          const ActionSampler& policy, int action_samples,
                          const Discriminator& disc, Rng& rng);

// (1-g) E[V(s0)] + E[f*(r + g V(s') - Q(s,a))] on the fixed batch.
double dual_q_loss(const DualQ& q, const FDivergence& div, const DualBatch& batch);
ParamVector dual_q_loss_gradient(const DualQ& q, const FDivergence& div, const DualBatch& batch);

struct DualQTrainConfig {
  int steps = 1000;
  int batch = 256;
};

struct DualQTrainResult {
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

// SGD on dual_q_loss over replay minibatches. Throws NumericalError if the
// loss diverges.
DualQTrainResult train_dual_q(DualQ& q, const ActionSampler& policy, const FDivergence& div,
                              const ReplayBuffer& replay, const Discriminator& disc,
                              const DualQTrainConfig& config, AdamState& adam, Rng& rng);

// xi* = f*'(r + g V(s') - Q(s,a)) for every buffer transition, in buffer
// order. No normalization; consumers normalize.
Eigen::VectorXd importance_weights(const DualQ& q, const ActionSampler& policy,
                                   const Discriminator& disc, const ReplayBuffer& buffer,
                                   const FDivergence& div, int action_samples, Rng& rng);

// ---- exact tabular instantiation (used by the dual-primal consistency
// checks; expectations are enumerated, nothing is sampled) ----

// r(s,a,s') = log(policy_dtod / replay_dtod), floored where the numerator
// vanishes; entries outside the replay support are zero.
SasTable exact_relevance_reward(const SasTable& policy_dtod, const SasTable& replay_dtod);

double tabular_dual_loss(const Eigen::MatrixXd& q_table, const TabularMDP& mdp,
                         const TabularPolicy& policy, const SasTable& replay_dtod,
                         const SasTable& relevance, const FDivergence& div);
Eigen::MatrixXd tabular_dual_gradient(const Eigen::MatrixXd& q_table, const TabularMDP& mdp,
                                      const TabularPolicy& policy, const SasTable& replay_dtod,
                                      const SasTable& relevance, const FDivergence& div);

struct TabularDualOptions {
  int iters = 60000;
  double learning_rate = 0.05;
};

// Full-batch Adam on the convex dual objective over a Q table.
Eigen::MatrixXd train_dual_q_tabular(const TabularMDP& mdp, const TabularPolicy& policy,
                                     const SasTable& replay_dtod, const SasTable& relevance,
                                     const FDivergence& div,
                                     const TabularDualOptions& options = {});

// xi per (s,a,s') from a tabular Q; the advantage uses the exact
// policy-expected next value.
SasTable tabular_importance_weights(const Eigen::MatrixXd& q_table, const TabularMDP& mdp,
                                    const TabularPolicy& policy, const SasTable& relevance,
                                    const FDivergence& div);

}  // namespace tom
