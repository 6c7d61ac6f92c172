#include "tom/relevance.hpp"

#include <cmath>

namespace tom {
namespace {

Eigen::MatrixXd gather_sas(const ReplayBuffer& buffer, const std::vector<std::size_t>& idx) {
  const Eigen::Index sd = buffer[0].state.size();
  const Eigen::Index ad = buffer[0].action.size();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), 2 * sd + ad);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const Transition& t = buffer[idx[i]];
    out.row(static_cast<Eigen::Index>(i)) << t.state.transpose(), t.action.transpose(),
        t.next_state.transpose();
  }
  return out;
}

}  // namespace

Discriminator Discriminator::make(int state_dim, int action_dim, const std::vector<int>& hidden,
                                  Rng& rng) {
  Discriminator d;
  d.net.input_dim = 2 * state_dim + action_dim;
  d.net.hidden_layers = hidden;
  d.net.output_dim = 1;
  d.net.hidden_activation = Activation::kTanh;
  d.net.output_activation = Activation::kSigmoid;
  d.params = init_params(d.net, rng);
  return d;
}

Eigen::VectorXd Discriminator::output_batch(const Eigen::MatrixXd& sas) const {
  Eigen::VectorXd c = mlp_forward_batch(net, params, sas).col(0);
  return c.cwiseMax(clamp_epsilon).cwiseMin(1.0 - clamp_epsilon);
}

double Discriminator::output(const Eigen::VectorXd& s, const Eigen::VectorXd& a,
                             const Eigen::VectorXd& s2) const {
  Eigen::MatrixXd sas(1, s.size() + a.size() + s2.size());
  sas << s.transpose(), a.transpose(), s2.transpose();
  return output_batch(sas)[0];
}

double reward_from_output(const Discriminator& disc, double c) {
  const double clamped = std::clamp(c, disc.clamp_epsilon, 1.0 - disc.clamp_epsilon);
  const double r = -std::log(1.0 / clamped - 1.0);
  return std::clamp(r, -disc.reward_clip, disc.reward_clip);
}

double relevance_reward(const Discriminator& disc, const Eigen::VectorXd& s,
                        const Eigen::VectorXd& a, const Eigen::VectorXd& s2) {
  return reward_from_output(disc, disc.output(s, a, s2));
}

Eigen::VectorXd relevance_reward_batch(const Discriminator& disc, const Eigen::MatrixXd& sas) {
  Eigen::VectorXd c = disc.output_batch(sas);
  for (Eigen::Index i = 0; i < c.size(); ++i) c[i] = reward_from_output(disc, c[i]);
  return c;
}

double discriminator_loss(const Discriminator& disc, const Eigen::MatrixXd& policy_sas,
                          const Eigen::MatrixXd& replay_sas) {
  const Eigen::VectorXd cp =
      mlp_forward_batch(disc.net, disc.params, policy_sas).col(0).cwiseMax(1e-12).cwiseMin(
          1.0 - 1e-12);
  const Eigen::VectorXd cr =
      mlp_forward_batch(disc.net, disc.params, replay_sas).col(0).cwiseMax(1e-12).cwiseMin(
          1.0 - 1e-12);
  return -cp.array().log().mean() - (1.0 - cr.array()).log().mean();
}

ParamVector discriminator_loss_gradient(const Discriminator& disc,
                                        const Eigen::MatrixXd& policy_sas,
                                        const Eigen::MatrixXd& replay_sas) {
  MlpForwardCache cache_p, cache_r;
  Eigen::VectorXd cp = mlp_forward_batch_cached(disc.net, disc.params, policy_sas, cache_p)
                           .col(0).cwiseMax(1e-12).cwiseMin(1.0 - 1e-12);
  Eigen::VectorXd cr = mlp_forward_batch_cached(disc.net, disc.params, replay_sas, cache_r)
                           .col(0).cwiseMax(1e-12).cwiseMin(1.0 - 1e-12);
  Eigen::MatrixXd up_p = (-1.0 / (cp.array() * static_cast<double>(cp.size()))).matrix();
  Eigen::MatrixXd up_r = (1.0 / ((1.0 - cr.array()) * static_cast<double>(cr.size()))).matrix();
  ParamVector g = mlp_backward_batch(disc.net, disc.params, cache_p, up_p).params;
  g += mlp_backward_batch(disc.net, disc.params, cache_r, up_r).params;
  return g;
}

void train_discriminator(Discriminator& disc, const ReplayBuffer& policy_buffer,
                         const ReplayBuffer& replay_buffer,
                         const DiscriminatorTrainConfig& config, AdamState& adam, Rng& rng) {
  require(!policy_buffer.empty() && !replay_buffer.empty(),
          "train_discriminator: both buffers must be non-empty");
  for (int step = 0; step < config.steps; ++step) {
    const auto pol_idx = policy_buffer.sample_indices(config.batch, rng);
    const auto rep_idx = replay_buffer.sample_indices(config.batch, rng);
    const Eigen::MatrixXd pol = gather_sas(policy_buffer, pol_idx);
    const Eigen::MatrixXd rep = gather_sas(replay_buffer, rep_idx);
    adam_step(disc.params, discriminator_loss_gradient(disc, pol, rep), adam);
  }
}

DualQ DualQ::make(int state_dim, int action_dim, const std::vector<int>& hidden, double gamma,
                  Rng& rng) {
  DualQ q;
  q.net.input_dim = state_dim + action_dim;
  q.net.hidden_layers = hidden;
  q.net.output_dim = 1;
  q.net.hidden_activation = Activation::kRelu;
  q.net.output_activation = Activation::kIdentity;
  q.gamma = gamma;
  q.params = init_params(q.net, rng);
  return q;
}

Eigen::VectorXd DualQ::q_batch(const Eigen::MatrixXd& sa) const {
  return mlp_forward_batch(net, params, sa).col(0);
}

double DualQ::q(const Eigen::VectorXd& s, const Eigen::VectorXd& a) const {
  Eigen::MatrixXd sa(1, s.size() + a.size());
  sa << s.transpose(), a.transpose();
  return q_batch(sa)[0];
}

double state_value(const DualQ& q, const ActionSampler& policy, const Eigen::VectorXd& s2,
                   Rng& rng) {
  double total = 0.0;
  for (int p = 0; p < q.value_action_samples; ++p) {
    const Eigen::MatrixXd a = policy(s2.transpose(), rng);
    Eigen::MatrixXd sa(1, s2.size() + a.cols());
    sa << s2.transpose(), a.row(0);
    total += q.q_batch(sa)[0];
  }
  return total / q.value_action_samples;
}

DualBatch make_dual_batch(const ReplayBuffer& replay, std::size_t batch,
                          const ActionSampler& policy, int action_samples,
                          const Discriminator& disc, Rng& rng) {
  require(!replay.empty(), "make_dual_batch: replay buffer is empty");
  const Eigen::Index sd = replay[0].state.size();
  const Eigen::Index ad = replay[0].action.size();

  DualBatch b;
  const auto idx = replay.sample_indices(batch, rng);
  const Eigen::Index n = static_cast<Eigen::Index>(batch);
  b.states.resize(n, sd);
  b.actions.resize(n, ad);
  b.next_states.resize(n, sd);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& t = replay[idx[static_cast<std::size_t>(i)]];
    b.states.row(i) = t.state.transpose();
    b.actions.row(i) = t.action.transpose();
    b.next_states.row(i) = t.next_state.transpose();
  }
  Eigen::MatrixXd sas(n, 2 * sd + ad);
  sas << b.states, b.actions, b.next_states;
  b.rewards = relevance_reward_batch(disc, sas);

  const auto inits = replay.initial_state_batch(batch, rng);
  b.init_states.resize(n, sd);
  for (Eigen::Index i = 0; i < n; ++i) b.init_states.row(i) = inits[static_cast<std::size_t>(i)];

  for (int p = 0; p < action_samples; ++p) b.next_actions.push_back(policy(b.next_states, rng));
  for (int p = 0; p < action_samples; ++p) b.init_actions.push_back(policy(b.init_states, rng));
  return b;
}

namespace {

// Stacks every row the dual objective touches into one matrix so a single
// forward/backward pass covers Q(s,a), all Q(s',a'^p) and all Q(s0,a0^p).
Eigen::MatrixXd stack_dual_inputs(const DualBatch& batch) {
  const Eigen::Index n = batch.states.rows();
  const Eigen::Index m = batch.init_states.rows();
  const int P = static_cast<int>(batch.next_actions.size());
  const Eigen::Index sd = batch.states.cols();
  const Eigen::Index ad = batch.actions.cols();
  Eigen::MatrixXd all(n + P * n + P * m, sd + ad);
  all.topRows(n) << batch.states, batch.actions;
  for (int p = 0; p < P; ++p) {
    all.middleRows(n + p * n, n) << batch.next_states, batch.next_actions[p];
  }
  for (int p = 0; p < P; ++p) {
    all.middleRows(n + P * n + p * m, m) << batch.init_states, batch.init_actions[p];
  }
  return all;
}

}  // namespace

double dual_q_loss(const DualQ& q, const FDivergence& div, const DualBatch& batch) {
  const Eigen::Index n = batch.states.rows();
  const Eigen::Index m = batch.init_states.rows();
  const int P = static_cast<int>(batch.next_actions.size());
  const Eigen::VectorXd all_q = q.q_batch(stack_dual_inputs(batch));

  Eigen::VectorXd v_next = Eigen::VectorXd::Zero(n);
  for (int p = 0; p < P; ++p) v_next += all_q.segment(n + p * n, n);
  v_next /= P;
  double v0 = 0.0;
  for (int p = 0; p < P; ++p) v0 += all_q.segment(n + P * n + p * m, m).sum();
  v0 /= static_cast<double>(P) * m;

  double conj = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    conj += div.conjugate(batch.rewards[i] + q.gamma * v_next[i] - all_q[i]);
  }
  return (1.0 - q.gamma) * v0 + conj / n;
}

ParamVector dual_q_loss_gradient(const DualQ& q, const FDivergence& div,
                                 const DualBatch& batch) {
  const Eigen::Index n = batch.states.rows();
  const Eigen::Index m = batch.init_states.rows();
  const int P = static_cast<int>(batch.next_actions.size());
  const Eigen::MatrixXd all = stack_dual_inputs(batch);

  MlpForwardCache cache;
  const Eigen::VectorXd all_q = mlp_forward_batch_cached(q.net, q.params, all, cache).col(0);

  Eigen::VectorXd v_next = Eigen::VectorXd::Zero(n);
  for (int p = 0; p < P; ++p) v_next += all_q.segment(n + p * n, n);
  v_next /= P;

  Eigen::MatrixXd upstream(all.rows(), 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double slope =
        div.conjugate_prime(batch.rewards[i] + q.gamma * v_next[i] - all_q[i]) / n;
    upstream(i, 0) = -slope;
    for (int p = 0; p < P; ++p) upstream(n + p * n + i, 0) = q.gamma * slope / P;
  }
  const double init_up = (1.0 - q.gamma) / (static_cast<double>(P) * m);
  for (Eigen::Index i = 0; i < P * m; ++i) upstream(n + P * n + i, 0) = init_up;

  return mlp_backward_batch(q.net, q.params, cache, upstream).params;
}

DualQTrainResult train_dual_q(DualQ& q, const ActionSampler& policy, const FDivergence& div,
                              const ReplayBuffer& replay, const Discriminator& disc,
                              const DualQTrainConfig& config, AdamState& adam, Rng& rng) {
  DualQTrainResult result;
  for (int step = 0; step < config.steps; ++step) {
    DualBatch batch =
        make_dual_batch(replay, config.batch, policy, q.value_action_samples, disc, rng);
    if (step == 0) result.initial_loss = dual_q_loss(q, div, batch);
    adam_step(q.params, dual_q_loss_gradient(q, div, batch), adam);
    if (step == config.steps - 1) {
      result.final_loss = dual_q_loss(q, div, batch);
      if (!std::isfinite(result.final_loss)) {
        throw NumericalError("train_dual_q: loss diverged to non-finite values");
      }
    }
  }
  return result;
}

Eigen::VectorXd importance_weights(const DualQ& q, const ActionSampler& policy,
                                   const Discriminator& disc, const ReplayBuffer& buffer,
                                   const FDivergence& div, int action_samples, Rng& rng) {
  require(!buffer.empty(), "importance_weights: buffer is empty");
  const Eigen::Index sd = buffer[0].state.size();
  const Eigen::Index ad = buffer[0].action.size();
  const Eigen::Index n = static_cast<Eigen::Index>(buffer.size());
  Eigen::VectorXd weights(n);

  const Eigen::Index chunk = 8192;
  for (Eigen::Index begin = 0; begin < n; begin += chunk) {
    const Eigen::Index len = std::min(chunk, n - begin);
    Eigen::MatrixXd sa(len, sd + ad);
    Eigen::MatrixXd next(len, sd);
    Eigen::MatrixXd sas(len, 2 * sd + ad);
    for (Eigen::Index i = 0; i < len; ++i) {
      const Transition& t = buffer[static_cast<std::size_t>(begin + i)];
      sa.row(i) << t.state.transpose(), t.action.transpose();
      next.row(i) = t.next_state.transpose();
      sas.row(i) << t.state.transpose(), t.action.transpose(), t.next_state.transpose();
    }
    const Eigen::VectorXd r = relevance_reward_batch(disc, sas);
    const Eigen::VectorXd q_sa = q.q_batch(sa);
    Eigen::VectorXd v_next = Eigen::VectorXd::Zero(len);
    for (int p = 0; p < action_samples; ++p) {
      Eigen::MatrixXd na = policy(next, rng);
      Eigen::MatrixXd nsa(len, sd + ad);
      nsa << next, na;
      v_next += q.q_batch(nsa);
    }
    v_next /= action_samples;
    for (Eigen::Index i = 0; i < len; ++i) {
      weights[begin + i] = div.conjugate_prime(r[i] + q.gamma * v_next[i] - q_sa[i]);
    }
  }
  return weights;
}

SasTable exact_relevance_reward(const SasTable& policy_dtod, const SasTable& replay_dtod) {
  SasTable r = replay_dtod;
  r.v.setZero();
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (replay_dtod.v[i] > 0.0) {
      r.v[i] = std::log(std::max(policy_dtod.v[i], 1e-300) / replay_dtod.v[i]);
    }
  }
  return r;
}

namespace {

// Advantage e(s,a,s') = r + g sum_a' pi(a'|s') Q(s',a') - Q(s,a).
double tabular_advantage(const Eigen::MatrixXd& q_table, const TabularMDP& mdp,
                         const TabularPolicy& policy, const SasTable& relevance, int s, int a,
                         int s2) {
  double v_next = 0.0;
  for (int a2 = 0; a2 < mdp.n_actions; ++a2) v_next += policy.pi(s2, a2) * q_table(s2, a2);
  return relevance.at(s, a, s2) + mdp.gamma * v_next - q_table(s, a);
}

}  // namespace

double tabular_dual_loss(const Eigen::MatrixXd& q_table, const TabularMDP& mdp,
                         const TabularPolicy& policy, const SasTable& replay_dtod,
                         const SasTable& relevance, const FDivergence& div) {
  double loss = 0.0;
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      loss += (1.0 - mdp.gamma) * mdp.initial_dist[s] * policy.pi(s, a) * q_table(s, a);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      for (int s2 = 0; s2 < mdp.n_states; ++s2) {
        const double q = replay_dtod.at(s, a, s2);
        if (q > 0.0) {
          loss += q * div.conjugate(tabular_advantage(q_table, mdp, policy, relevance, s, a, s2));
        }
      }
    }
  }
  return loss;
}

Eigen::MatrixXd tabular_dual_gradient(const Eigen::MatrixXd& q_table, const TabularMDP& mdp,
                                      const TabularPolicy& policy, const SasTable& replay_dtod,
                                      const SasTable& relevance, const FDivergence& div) {
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      grad(s, a) = (1.0 - mdp.gamma) * mdp.initial_dist[s] * policy.pi(s, a);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      for (int s2 = 0; s2 < mdp.n_states; ++s2) {
        const double q = replay_dtod.at(s, a, s2);
        if (q <= 0.0) continue;
        const double w =
            div.conjugate_prime(tabular_advantage(q_table, mdp, policy, relevance, s, a, s2));
        grad(s, a) -= q * w;
        for (int a2 = 0; a2 < mdp.n_actions; ++a2) {
          grad(s2, a2) += q * w * mdp.gamma * policy.pi(s2, a2);
        }
      }
    }
  }
  return grad;
}

Eigen::MatrixXd train_dual_q_tabular(const TabularMDP& mdp, const TabularPolicy& policy,
                                     const SasTable& replay_dtod, const SasTable& relevance,
                                     const FDivergence& div, const TabularDualOptions& options) {
  Eigen::MatrixXd q_table = Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_actions);
  const Eigen::Index n = static_cast<Eigen::Index>(mdp.n_states) * mdp.n_actions;
  AdamState adam(n, options.learning_rate);
  ParamVector flat = ParamVector::Zero(n);
  for (int it = 0; it < options.iters; ++it) {
    const Eigen::MatrixXd grad =
        tabular_dual_gradient(q_table, mdp, policy, replay_dtod, relevance, div);
    Eigen::VectorXd flat_grad(n);
    for (int s = 0; s < mdp.n_states; ++s)
      for (int a = 0; a < mdp.n_actions; ++a)
        flat_grad[static_cast<Eigen::Index>(s) * mdp.n_actions + a] = grad(s, a);
    adam_step(flat, flat_grad, adam);
    for (int s = 0; s < mdp.n_states; ++s)
      for (int a = 0; a < mdp.n_actions; ++a)
        q_table(s, a) = flat[static_cast<Eigen::Index>(s) * mdp.n_actions + a];
  }
  return q_table;
}

SasTable tabular_importance_weights(const Eigen::MatrixXd& q_table, const TabularMDP& mdp,
                                    const TabularPolicy& policy, const SasTable& relevance,
                                    const FDivergence& div) {
  SasTable xi(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      for (int s2 = 0; s2 < mdp.n_states; ++s2)
        xi.at(s, a, s2) =
            div.conjugate_prime(tabular_advantage(q_table, mdp, policy, relevance, s, a, s2));
  return xi;
}

}  // namespace tom
