#include "tom/policy.hpp"

#include <cmath>

#include "tom/envs.hpp"

namespace tom {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

// log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u)), stable for large |u|.
double log_one_minus_tanh_sq(double u) {
  const double x = -2.0 * u;
  const double softplus = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  return 2.0 * (std::log(2.0) - u - softplus);
}

}  // namespace

StochasticPolicy StochasticPolicy::make(int state_dim, int action_dim,
                                        const std::vector<int>& hidden,
                                        const Eigen::VectorXd& low, const Eigen::VectorXd& high,
                                        Rng& rng) {
  require(low.size() == action_dim && high.size() == action_dim,
          "StochasticPolicy: bound dimensions");
  StochasticPolicy p;
  p.actor.input_dim = state_dim;
  p.actor.hidden_layers = hidden;
  p.actor.output_dim = 2 * action_dim;
  p.actor.hidden_activation = Activation::kRelu;
  p.actor.output_activation = Activation::kIdentity;
  p.params = init_params(p.actor, rng);
  p.action_low = low;
  p.action_high = high;
  return p;
}

void StochasticPolicy::heads(const Eigen::MatrixXd& states, Eigen::MatrixXd& mean,
                             Eigen::MatrixXd& log_std) const {
  const Eigen::MatrixXd out = mlp_forward_batch(actor, params, states);
  const int ad = action_dim();
  mean = out.leftCols(ad);
  log_std = out.rightCols(ad).cwiseMax(log_std_min).cwiseMin(log_std_max);
}

Eigen::VectorXd StochasticPolicy::act(const Eigen::VectorXd& state, bool deterministic,
                                      Rng& rng) const {
  Eigen::MatrixXd mean, log_std;
  heads(state.transpose(), mean, log_std);
  const int ad = action_dim();
  Eigen::VectorXd u(ad);
  for (int j = 0; j < ad; ++j) {
    u[j] = mean(0, j) + (deterministic ? 0.0 : std::exp(log_std(0, j)) * rng.normal());
  }
  return center() + scale().cwiseProduct(u.array().tanh().matrix());
}

Eigen::MatrixXd StochasticPolicy::act_batch(const Eigen::MatrixXd& states, Rng& rng) const {
  Eigen::MatrixXd mean, log_std;
  heads(states, mean, log_std);
  const int ad = action_dim();
  const Eigen::VectorXd sc = scale(), ce = center();
  Eigen::MatrixXd a(states.rows(), ad);
  for (Eigen::Index i = 0; i < states.rows(); ++i) {
    for (int j = 0; j < ad; ++j) {
      const double u = mean(i, j) + std::exp(log_std(i, j)) * rng.normal();
      a(i, j) = ce[j] + sc[j] * std::tanh(u);
    }
  }
  return a;
}

double StochasticPolicy::log_prob(const Eigen::VectorXd& state,
                                  const Eigen::VectorXd& action) const {
  Eigen::MatrixXd mean, log_std;
  heads(state.transpose(), mean, log_std);
  const Eigen::VectorXd sc = scale(), ce = center();
  double logp = 0.0;
  for (int j = 0; j < action_dim(); ++j) {
    const double t = (action[j] - ce[j]) / sc[j];
    require(std::abs(t) < 1.0, "log_prob: action on or outside the bounds");
    const double u = std::atanh(t);
    const double sigma = std::exp(log_std(0, j));
    const double z = (u - mean(0, j)) / sigma;
    logp += -0.5 * z * z - log_std(0, j) - kHalfLog2Pi;
    logp -= std::log(sc[j]) + log_one_minus_tanh_sq(u);
  }
  return logp;
}

CriticPair CriticPair::make(int state_dim, int action_dim, const std::vector<int>& hidden,
                            Rng& rng) {
  CriticPair c;
  c.net.input_dim = state_dim + action_dim;
  c.net.hidden_layers = hidden;
  c.net.output_dim = 1;
  c.net.hidden_activation = Activation::kRelu;
  c.net.output_activation = Activation::kIdentity;
  c.q1 = init_params(c.net, rng);
  c.q2 = init_params(c.net, rng);
  c.q1_target = c.q1;
  c.q2_target = c.q2;
  return c;
}

Eigen::VectorXd CriticPair::q_min_target(const Eigen::MatrixXd& sa) const {
  const Eigen::VectorXd a = mlp_forward_batch(net, q1_target, sa).col(0);
  const Eigen::VectorXd b = mlp_forward_batch(net, q2_target, sa).col(0);
  return a.cwiseMin(b);
}

LossGrad critic_loss_grad(const MlpSpec& net, const ParamVector& joint_params,
                          const Eigen::MatrixXd& sa, const Eigen::VectorXd& targets) {
  const Eigen::Index n = sa.rows();
  const Eigen::Index half = joint_params.size() / 2;
  const ParamVector p1 = joint_params.head(half);
  const ParamVector p2 = joint_params.tail(half);
  MlpForwardCache cache1, cache2;
  const Eigen::VectorXd q1 = mlp_forward_batch_cached(net, p1, sa, cache1).col(0);
  const Eigen::VectorXd q2 = mlp_forward_batch_cached(net, p2, sa, cache2).col(0);
  LossGrad out;
  out.loss = ((q1 - targets).squaredNorm() + (q2 - targets).squaredNorm()) / n;
  const Eigen::MatrixXd up1 = (2.0 / n) * (q1 - targets);
  const Eigen::MatrixXd up2 = (2.0 / n) * (q2 - targets);
  out.grad.resize(joint_params.size());
  out.grad.head(half) = mlp_backward_batch(net, p1, cache1, up1).params;
  out.grad.tail(half) = mlp_backward_batch(net, p2, cache2, up2).params;
  return out;
}

LossGrad actor_loss_grad(const StochasticPolicy& policy, const ParamVector& actor_params,
                         const CriticPair& critics, const Eigen::MatrixXd& states,
                         const Eigen::MatrixXd& eps) {
  const Eigen::Index n = states.rows();
  const int ad = policy.action_dim();
  const Eigen::VectorXd sc = policy.scale(), ce = policy.center();

  MlpForwardCache actor_cache;
  const Eigen::MatrixXd heads_out =
      mlp_forward_batch_cached(policy.actor, actor_params, states, actor_cache);

  Eigen::MatrixXd t_val(n, ad), a_new(n, ad), sigma(n, ad);
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> clamp_ok(n, ad);
  double logp_total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < ad; ++j) {
      const double raw = heads_out(i, ad + j);
      const double ls = std::clamp(raw, policy.log_std_min, policy.log_std_max);
      clamp_ok(i, j) = raw > policy.log_std_min && raw < policy.log_std_max;
      sigma(i, j) = std::exp(ls);
      const double u = heads_out(i, j) + sigma(i, j) * eps(i, j);
      t_val(i, j) = std::tanh(u);
      a_new(i, j) = ce[j] + sc[j] * t_val(i, j);
      logp_total += -0.5 * eps(i, j) * eps(i, j) - ls - kHalfLog2Pi - std::log(sc[j]) -
                    log_one_minus_tanh_sq(u);
    }
  }
  Eigen::MatrixXd sa_new(n, states.cols() + ad);
  sa_new << states, a_new;
  MlpForwardCache qc1, qc2;
  const Eigen::VectorXd q1n =
      mlp_forward_batch_cached(critics.net, critics.q1, sa_new, qc1).col(0);
  const Eigen::VectorXd q2n =
      mlp_forward_batch_cached(critics.net, critics.q2, sa_new, qc2).col(0);
  const Eigen::VectorXd qmin = q1n.cwiseMin(q2n);

  LossGrad out;
  out.loss = (critics.alpha * logp_total - qmin.sum()) / n;

  // dQ/da of the per-row smaller critic.
  Eigen::MatrixXd pick1 = Eigen::MatrixXd::Zero(n, 1), pick2 = Eigen::MatrixXd::Zero(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) (q1n[i] <= q2n[i] ? pick1(i, 0) : pick2(i, 0)) = 1.0;
  const Eigen::MatrixXd in_grad1 = mlp_backward_batch(critics.net, critics.q1, qc1, pick1).inputs;
  const Eigen::MatrixXd in_grad2 = mlp_backward_batch(critics.net, critics.q2, qc2, pick2).inputs;
  const Eigen::MatrixXd g_action = in_grad1.rightCols(ad) + in_grad2.rightCols(ad);

  Eigen::MatrixXd actor_upstream = Eigen::MatrixXd::Zero(n, 2 * ad);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < ad; ++j) {
      const double dadu = sc[j] * (1.0 - t_val(i, j) * t_val(i, j));
      const double dlogp_du = 2.0 * t_val(i, j);
      actor_upstream(i, j) = inv_n * (critics.alpha * dlogp_du - g_action(i, j) * dadu);
      if (clamp_ok(i, j)) {
        const double du_dls = sigma(i, j) * eps(i, j);
        actor_upstream(i, ad + j) =
            inv_n * (critics.alpha * (-1.0 + dlogp_du * du_dls) - g_action(i, j) * dadu * du_dls);
      }
    }
  }
  out.grad =
      mlp_backward_batch(policy.actor, actor_params, actor_cache, actor_upstream).params;
  return out;
}

SacUpdateResult policy_update(StochasticPolicy& policy, CriticPair& critics,
                              const SacBatch& batch, AdamState& actor_adam,
                              AdamState& critic_adam, double gamma, Rng& rng) {
  const Eigen::Index n = batch.states.rows();
  const int ad = policy.action_dim();
  const Eigen::VectorXd sc = policy.scale(), ce = policy.center();
  SacUpdateResult result;

  // ---- critic step: targets from next-state policy samples ----
  Eigen::MatrixXd next_mean, next_log_std;
  policy.heads(batch.next_states, next_mean, next_log_std);
  Eigen::MatrixXd next_a(n, ad);
  Eigen::VectorXd next_logp = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < ad; ++j) {
      const double eps = rng.normal();
      const double u = next_mean(i, j) + std::exp(next_log_std(i, j)) * eps;
      const double t = std::tanh(u);
      next_a(i, j) = ce[j] + sc[j] * t;
      next_logp[i] += -0.5 * eps * eps - next_log_std(i, j) - kHalfLog2Pi -
                      std::log(sc[j]) - log_one_minus_tanh_sq(u);
    }
  }
  Eigen::MatrixXd next_sa(n, batch.states.cols() + ad);
  next_sa << batch.next_states, next_a;
  const Eigen::VectorXd y =
      batch.rewards + gamma * (critics.q_min_target(next_sa) - critics.alpha * next_logp);

  Eigen::MatrixXd sa(n, batch.states.cols() + ad);
  sa << batch.states, batch.actions;
  ParamVector critic_params(critics.q1.size() + critics.q2.size());
  critic_params << critics.q1, critics.q2;
  const LossGrad critic = critic_loss_grad(critics.net, critic_params, sa, y);
  result.critic_loss = critic.loss;
  if (!std::isfinite(result.critic_loss)) {
    throw NumericalError("policy_update: critic loss is non-finite");
  }
  adam_step(critic_params, critic.grad, critic_adam);
  critics.q1 = critic_params.head(critics.q1.size());
  critics.q2 = critic_params.tail(critics.q2.size());

  // ---- actor step: reparameterized sample through the fresh critics ----
  Eigen::MatrixXd eps(n, ad);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < ad; ++j) eps(i, j) = rng.normal();
  const LossGrad actor = actor_loss_grad(policy, policy.params, critics, batch.states, eps);
  result.actor_loss = actor.loss;
  if (!std::isfinite(result.actor_loss)) {
    throw NumericalError("policy_update: actor loss is non-finite");
  }
  adam_step(policy.params, actor.grad, actor_adam);

  // ---- polyak target trail ----
  critics.q1_target = critics.polyak * critics.q1_target + (1.0 - critics.polyak) * critics.q1;
  critics.q2_target = critics.polyak * critics.q2_target + (1.0 - critics.polyak) * critics.q2;
  return result;
}

double evaluate_policy(const Env& env, const StochasticPolicy& policy, int episodes, Rng& rng) {
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    Eigen::VectorXd s = env.reset(rng);
    for (int step = 0; step < env.spec().horizon; ++step) {
      const Eigen::VectorXd a = policy.act(s, true, rng);
      auto [s2, r] = env.step(s, a, rng);
      total += r;
      s = std::move(s2);
    }
  }
  return total / episodes;
}

}  // namespace tom
