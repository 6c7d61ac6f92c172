#include "tom/loop.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace tom {
namespace {

Eigen::VectorXd decile_means(const Eigen::VectorXd& w) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(10);
  const Eigen::Index n = w.size();
  if (n == 0) return out;
  for (int d = 0; d < 10; ++d) {
    const Eigen::Index lo = n * d / 10;
    const Eigen::Index hi = std::max(n * (d + 1) / 10, lo + 1);
    if (lo >= n) break;
    out[d] = w.segment(lo, std::min(hi, n) - lo).mean();
  }
  return out;
}

std::size_t sample_categorical(const Eigen::VectorXd& cum, Rng& rng) {
  const double u = rng.uniform() * cum[cum.size() - 1];
  const double* it = std::upper_bound(cum.data(), cum.data() + cum.size(), u);
  return std::min(static_cast<std::size_t>(it - cum.data()),
                  static_cast<std::size_t>(cum.size() - 1));
}

SacBatch gather_sac_batch(const ReplayBuffer& buf, const std::vector<std::size_t>& idx) {
  const Eigen::Index n = static_cast<Eigen::Index>(idx.size());
  const Eigen::Index sd = buf[0].state.size();
  const Eigen::Index ad = buf[0].action.size();
  SacBatch b;
  b.states.resize(n, sd);
  b.actions.resize(n, ad);
  b.rewards.resize(n);
  b.next_states.resize(n, sd);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& t = buf[idx[static_cast<std::size_t>(i)]];
    b.states.row(i) = t.state.transpose();
    b.actions.row(i) = t.action.transpose();
    b.rewards[i] = t.reward;
    b.next_states.row(i) = t.next_state.transpose();
  }
  return b;
}

void gather_model_batch(const ReplayBuffer& buf, const std::vector<std::size_t>& idx,
                        Eigen::MatrixXd& s, Eigen::MatrixXd& a, Eigen::MatrixXd& s2) {
  const Eigen::Index n = static_cast<Eigen::Index>(idx.size());
  const Eigen::Index sd = buf[0].state.size();
  const Eigen::Index ad = buf[0].action.size();
  s.resize(n, sd);
  a.resize(n, ad);
  s2.resize(n, sd);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& t = buf[idx[static_cast<std::size_t>(i)]];
    s.row(i) = t.state.transpose();
    a.row(i) = t.action.transpose();
    s2.row(i) = t.next_state.transpose();
  }
}

// Everything one run touches; phases below mutate this in Alg-2 order.
struct LoopState {
  const LoopConfig& cfg;
  const Env& env;
  RunResult out;

  ReplayBuffer replay;
  CurrentPolicyBuffer policy_pool{make_current_policy_buffer()};
  ReplayBuffer model_buffer;

  StochasticPolicy policy;
  CriticPair critics;
  GaussianMlpModel mlp_model;
  std::optional<LinearGaussianModel> linear_model;
  Discriminator disc;
  DualQ dualq;
  FDivergence div;

  AdamState actor_adam, critic_adam, model_adam, disc_adam, q_adam;

  Rng rng_env, rng_policy, rng_model, rng_disc, rng_dualq, rng_weights, rng_eval;

  Eigen::VectorXd xi;       // raw importance weights over the replay snapshot
  Eigen::VectorXd weights;  // scheme weights used this epoch
  std::int64_t weights_front_index = 0;  // front insertion_index at snapshot time

  Eigen::VectorXd current_state;
  int steps_in_episode = 0;
  bool need_reset = true;
  std::int64_t env_steps = 0;
  std::int64_t phase_seq = 0;

  LoopState(const LoopConfig& c, const Env& e, Rng& rng)
      : cfg(c),
        env(e),
        replay(c.replay_capacity),
        model_buffer(c.model_buffer_capacity),
        rng_env(rng.split(1)),
        rng_policy(rng.split(2)),
        rng_model(rng.split(3)),
        rng_disc(rng.split(4)),
        rng_dualq(rng.split(5)),
        rng_weights(rng.split(6)),
        rng_eval(rng.split(7)) {
    Rng rng_init = rng.split(8);
    const EnvSpec& spec = env.spec();
    policy = StochasticPolicy::make(spec.state_dim, spec.action_dim, cfg.actor_hidden,
                                    spec.action_low, spec.action_high, rng_init);
    critics = CriticPair::make(spec.state_dim, spec.action_dim, cfg.critic_hidden, rng_init);
    critics.alpha = cfg.alpha;
    critics.polyak = cfg.polyak;
    mlp_model = GaussianMlpModel::make(spec.state_dim, spec.action_dim, cfg.model_hidden,
                                       rng_init);
    Rng rng_disc_init = rng.split(9);
    Rng rng_q_init = rng.split(10);
    disc = Discriminator::make(spec.state_dim, spec.action_dim, cfg.disc_hidden, rng_disc_init);
    dualq = DualQ::make(spec.state_dim, spec.action_dim, cfg.q_hidden, spec.gamma, rng_q_init);
    dualq.value_action_samples = cfg.value_action_samples;
    div = FDivergence{cfg.divergence};

    actor_adam = AdamState(policy.params.size(), cfg.learning_rate);
    critic_adam = AdamState(critics.q1.size() + critics.q2.size(), cfg.learning_rate);
    model_adam = AdamState(mlp_model.params.size(), cfg.learning_rate);
    disc_adam = AdamState(disc.params.size(), cfg.learning_rate);
    q_adam = AdamState(dualq.params.size(), cfg.learning_rate);
  }

  void phase(int epoch, const char* name) {
    out.phases.push_back({epoch, name, phase_seq++});
  }

  bool tom_active() const { return cfg.scheme.kind == WeightSchemeKind::kTom; }

  void env_step_into_replay(bool random_action) {
    if (need_reset || steps_in_episode >= env.spec().horizon) {
      current_state = env.reset(rng_env);
      steps_in_episode = 0;
      need_reset = false;
    }
    Eigen::VectorXd a;
    if (random_action) {
      const EnvSpec& spec = env.spec();
      a.resize(spec.action_dim);
      for (int j = 0; j < spec.action_dim; ++j) {
        a[j] = rng_env.uniform(spec.action_low[j], spec.action_high[j]);
      }
    } else {
      a = policy.act(current_state, false, rng_env);
    }
    auto [s2, r] = env.step(current_state, a, rng_env);
    Transition t;
    t.state = current_state;
    t.action = std::move(a);
    t.next_state = s2;
    t.reward = r;
    t.episode_start = (steps_in_episode == 0);
    replay.push(std::move(t));
    current_state = std::move(s2);
    ++steps_in_episode;
    ++env_steps;
  }

  void refresh_policy_pool() {
    policy_pool = make_current_policy_buffer();
    const std::size_t n = replay.size();
    const std::size_t take = std::min<std::size_t>(n, ReplayBuffer::kCurrentPolicyCapacity);
    for (std::size_t i = n - take; i < n; ++i) policy_pool.push(replay[i]);
  }

  void phase_discriminator(int epoch) {
    phase(epoch, "discriminator");
    train_discriminator(disc, policy_pool, replay,
                        {cfg.discriminator_steps, cfg.batch_size}, disc_adam, rng_disc);
  }

  void phase_dual_q(int epoch) {
    phase(epoch, "dual_q");
    train_dual_q(dualq, make_action_sampler(policy), div, replay, disc,
                 {cfg.dual_q_steps, cfg.batch_size}, q_adam, rng_dualq);
  }

  void phase_weights(int epoch) {
    phase(epoch, "weights");
    xi = importance_weights(dualq, make_action_sampler(policy), disc, replay, div,
                            cfg.weight_action_samples, rng_weights);
    if (cfg.force_unit_weights) xi.setOnes();
  }

  void compute_scheme_weights() {
    if (tom_active()) {
      weights = compute_weights(cfg.scheme, replay, &xi);
    } else {
      weights = compute_weights(cfg.scheme, replay, nullptr);
    }
    if (!(weights.sum() > 0.0)) weights.setOnes();  // degenerate weights: fall back
    weights_front_index = replay.empty() ? 0 : replay[0].insertion_index;
  }

  void phase_model(int epoch) {
    phase(epoch, "model");
    compute_scheme_weights();
    if (cfg.model_kind == ModelKind::kLinearGaussian) {
      linear_model = fit_linear_gaussian_closed_form(replay, weights);
      return;
    }
    Eigen::MatrixXd s, a, s2;
    for (int h = 0; h < cfg.model_steps; ++h) {
      std::vector<std::size_t> idx;
      Eigen::VectorXd batch_w;
      if (cfg.loss_weighting) {
        idx = replay.sample_indices(cfg.batch_size, rng_model);
        batch_w.resize(cfg.batch_size);
        for (int i = 0; i < cfg.batch_size; ++i) batch_w[i] = weights[idx[i]];
        if (!(batch_w.sum() > 0.0)) continue;
      } else {
        idx = replay.sample_indices(cfg.batch_size, weights, rng_model);
        batch_w = Eigen::VectorXd::Ones(cfg.batch_size);
      }
      gather_model_batch(replay, idx, s, a, s2);
      weighted_mle_step(mlp_model, s, a, s2, batch_w, model_adam);
    }
  }

  std::vector<Eigen::VectorXd> sample_rollout_starts(std::size_t count,
                                                     const Eigen::VectorXd& cum) {
    std::vector<Eigen::VectorXd> starts;
    starts.reserve(count);
    const std::int64_t shift =
        replay.empty() ? 0 : replay[0].insertion_index - weights_front_index;
    for (std::size_t i = 0; i < count; ++i) {
      std::int64_t idx = static_cast<std::int64_t>(sample_categorical(cum, rng_model)) - shift;
      idx = std::clamp<std::int64_t>(idx, 0, static_cast<std::int64_t>(replay.size()) - 1);
      starts.push_back(replay[static_cast<std::size_t>(idx)].state);
    }
    return starts;
  }

  ModelSampleFn model_sampler() {
    if (cfg.model_kind == ModelKind::kLinearGaussian) return make_sampler(*linear_model);
    return make_sampler(mlp_model);
  }

  void rollout_into_model_buffer(std::size_t count, const Eigen::VectorXd& cum) {
    const auto starts = sample_rollout_starts(count, cum);
    const RewardFn reward = [this](const Eigen::VectorXd& s, const Eigen::VectorXd& a) {
      return env.reward(s, a);
    };
    const PolicyFn act = [this](const Eigen::VectorXd& s, Rng& r) {
      return policy.act(s, false, r);
    };
    ModelRollout roll =
        model_rollout(model_sampler(), act, reward, starts, cfg.rollout_length, rng_model);
    for (auto& t : roll.transitions) model_buffer.push(std::move(t));
  }

  void policy_updates(int count) {
    if (model_buffer.empty()) return;
    for (int u = 0; u < count; ++u) {
      const auto idx = model_buffer.sample_indices(cfg.batch_size, rng_policy);
      policy_update(policy, critics, gather_sac_batch(model_buffer, idx), actor_adam,
                    critic_adam, env.spec().gamma, rng_policy);
    }
  }

  void phase_interaction_online(int epoch) {
    phase(epoch, "interaction");
    replay.begin_round();
    const Eigen::VectorXd cum = cumulative(weights);
    const std::size_t per_step =
        std::max<std::size_t>(1, static_cast<std::size_t>(cfg.rollout_batch) /
                                     std::max(1, cfg.env_steps_per_epoch));
    for (int e = 0; e < cfg.env_steps_per_epoch; ++e) {
      env_step_into_replay(false);
      rollout_into_model_buffer(per_step, cum);
      policy_updates(cfg.policy_updates_per_step);
    }
  }

  void phase_interaction_offline(int epoch) {
    phase(epoch, "interaction");
    const Eigen::VectorXd cum = cumulative(weights);
    rollout_into_model_buffer(static_cast<std::size_t>(cfg.rollout_batch), cum);
    policy_updates(cfg.env_steps_per_epoch * cfg.policy_updates_per_step);
  }

  static Eigen::VectorXd cumulative(const Eigen::VectorXd& w) {
    Eigen::VectorXd cum(w.size());
    double total = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      total += w[i];
      cum[i] = total;
    }
    return cum;
  }

  double model_nll_on_pool() {
    if (policy_pool.empty()) return 0.0;
    if (cfg.model_kind == ModelKind::kLinearGaussian) {
      if (!linear_model) return 0.0;
      double total = 0.0;
      for (std::size_t i = 0; i < policy_pool.size(); ++i) {
        const Transition& t = policy_pool[i];
        total -= linear_model->log_likelihood(t.state, t.action, t.next_state);
      }
      return total / static_cast<double>(policy_pool.size());
    }
    Eigen::MatrixXd s, a, s2;
    std::vector<std::size_t> idx(policy_pool.size());
    for (std::size_t i = 0; i < policy_pool.size(); ++i) idx[i] = i;
    gather_model_batch(policy_pool, idx, s, a, s2);
    return model_nll(mlp_model, s, a, s2, Eigen::VectorXd::Ones(s.rows()));
  }

  void record_metrics(int epoch) {
    MetricsRow row;
    row.epoch = epoch;
    row.env_steps = env_steps;
    Rng eval_rng = rng_eval.split(static_cast<std::uint64_t>(epoch));
    row.eval_return_mean = evaluate_policy(env, policy, cfg.eval_episodes, eval_rng);
    row.eval_return_max = out.metrics.empty()
                              ? row.eval_return_mean
                              : std::max(out.metrics.back().eval_return_max,
                                         row.eval_return_mean);
    row.model_nll = model_nll_on_pool();
    row.weight_mean = weights.size() ? weights.mean() : 0.0;
    row.weight_max = weights.size() ? weights.maxCoeff() : 0.0;
    row.weight_decile_mean = decile_means(weights);
    out.metrics.push_back(std::move(row));
  }

  void finalize() {
    out.policy = policy;
    out.critics = critics;
    if (cfg.model_kind == ModelKind::kLinearGaussian) {
      out.linear_model = linear_model;
    } else {
      out.mlp_model = mlp_model;
    }
    if (tom_active()) {
      out.discriminator = disc;
      out.dual_q = dualq;
    }
    out.last_weights = weights;
    out.replay = replay;
  }
};

}  // namespace

ActionSampler make_action_sampler(const StochasticPolicy& policy) {
  return [&policy](const Eigen::MatrixXd& states, Rng& rng) {
    return policy.act_batch(states, rng);
  };
}

RunResult run_online(const LoopConfig& config, const Env& env, Rng& rng) {
  LoopState st(config, env, rng);
  st.replay.begin_round();
  for (int i = 0; i < config.init_env_steps; ++i) st.env_step_into_replay(true);
  st.refresh_policy_pool();
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    try {
      if (st.tom_active()) {
        st.phase_discriminator(epoch);
        st.phase_dual_q(epoch);
        st.phase_weights(epoch);
      }
      st.phase_model(epoch);
      st.phase_interaction_online(epoch);
      st.refresh_policy_pool();
      st.record_metrics(epoch);
    } catch (const NumericalError& e) {
      st.out.failed = true;
      st.out.failure = e.what();
      break;
    }
  }
  st.finalize();
  return st.out;
}

RunResult run_offline(const LoopConfig& config, const ReplayBuffer& dataset,
                      const ReplayBuffer& current_policy_data, const Env& eval_env, Rng& rng) {
  require(!dataset.empty(), "run_offline: dataset is empty");
  LoopState st(config, eval_env, rng);
  st.replay = dataset;
  st.policy_pool = current_policy_data;
  const std::size_t frozen_size = st.replay.size();
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    try {
      if (st.tom_active()) {
        st.phase_discriminator(epoch);
        st.phase_dual_q(epoch);
        st.phase_weights(epoch);
      }
      st.phase_model(epoch);
      st.phase_interaction_offline(epoch);
      st.record_metrics(epoch);
    } catch (const NumericalError& e) {
      st.out.failed = true;
      st.out.failure = e.what();
      break;
    }
  }
  require(st.replay.size() == frozen_size, "run_offline: dataset must stay fixed");
  st.finalize();
  return st.out;
}

WeightProgression run_weight_progression(const LoopConfig& config,
                                         const ReplayBuffer& curated_buffer, const Env& env,
                                         const StochasticPolicy& policy_of_interest, Rng& rng) {
  require(!curated_buffer.empty(), "run_weight_progression: empty buffer");
  Rng rng_pool = rng.split(1);
  Rng rng_disc = rng.split(2);
  Rng rng_q = rng.split(3);
  Rng rng_w = rng.split(4);
  Rng rng_init = rng.split(5);

  CurrentPolicyBuffer pool = make_current_policy_buffer();
  while (pool.size() < ReplayBuffer::kCurrentPolicyCapacity) {
    auto traj = collect_rollout(
        env,
        [&](const Eigen::VectorXd& s, Rng& r) { return policy_of_interest.act(s, false, r); },
        env.spec().horizon, rng_pool);
    for (auto& t : traj) pool.push(std::move(t));
  }

  const EnvSpec& spec = env.spec();
  Discriminator disc =
      Discriminator::make(spec.state_dim, spec.action_dim, config.disc_hidden, rng_init);
  DualQ dualq = DualQ::make(spec.state_dim, spec.action_dim, config.q_hidden, spec.gamma,
                            rng_init);
  dualq.value_action_samples = config.value_action_samples;
  const FDivergence div{config.divergence};

  AdamState disc_adam(disc.params.size(), config.learning_rate);
  train_discriminator(disc, pool, curated_buffer,
                      {config.discriminator_steps, config.batch_size}, disc_adam, rng_disc);
  AdamState q_adam(dualq.params.size(), config.learning_rate);
  train_dual_q(dualq, make_action_sampler(policy_of_interest), div, curated_buffer, disc,
               {config.dual_q_steps, config.batch_size}, q_adam, rng_q);

  WeightProgression out;
  out.weights = importance_weights(dualq, make_action_sampler(policy_of_interest), disc,
                                   curated_buffer, div, config.weight_action_samples, rng_w);
  out.decile_mean = decile_means(out.weights);
  const Eigen::Index n = out.weights.size();
  const Eigen::Index half = n / 2;
  out.first_half_mean = out.weights.head(half).mean();
  out.second_half_mean = out.weights.tail(n - half).mean();
  out.second_half_decile_mean = decile_means(out.weights.tail(n - half));
  return out;
}

SacTrainResult train_sac(const Env& env, int total_steps, int updates_per_step,
                         const LoopConfig& config, const std::vector<int>& checkpoint_steps,
                         Rng& rng) {
  Rng rng_env = rng.split(1);
  Rng rng_updates = rng.split(2);
  Rng rng_init = rng.split(3);
  const EnvSpec& spec = env.spec();

  SacTrainResult result{
      StochasticPolicy::make(spec.state_dim, spec.action_dim, config.actor_hidden,
                             spec.action_low, spec.action_high, rng_init),
      {}};
  CriticPair critics =
      CriticPair::make(spec.state_dim, spec.action_dim, config.critic_hidden, rng_init);
  critics.alpha = config.alpha;
  critics.polyak = config.polyak;
  AdamState actor_adam(result.policy.params.size(), config.learning_rate);
  AdamState critic_adam(critics.q1.size() + critics.q2.size(), config.learning_rate);

  ReplayBuffer replay(config.replay_capacity);
  Eigen::VectorXd s = env.reset(rng_env);
  int steps_in_episode = 0;
  auto step_env = [&](bool random) {
    if (steps_in_episode >= spec.horizon) {
      s = env.reset(rng_env);
      steps_in_episode = 0;
    }
    Eigen::VectorXd a(spec.action_dim);
    if (random) {
      for (int j = 0; j < spec.action_dim; ++j)
        a[j] = rng_env.uniform(spec.action_low[j], spec.action_high[j]);
    } else {
      a = result.policy.act(s, false, rng_env);
    }
    auto [s2, r] = env.step(s, a, rng_env);
    Transition t;
    t.state = s;
    t.action = std::move(a);
    t.next_state = s2;
    t.reward = r;
    t.episode_start = (steps_in_episode == 0);
    replay.push(std::move(t));
    s = std::move(s2);
    ++steps_in_episode;
  };

  const int warmup = std::min(1000, total_steps);
  for (int i = 0; i < warmup; ++i) step_env(true);
  std::size_t next_checkpoint = 0;
  for (int step = warmup; step < total_steps; ++step) {
    step_env(false);
    for (int u = 0; u < updates_per_step; ++u) {
      const auto idx = replay.sample_indices(config.batch_size, rng_updates);
      policy_update(result.policy, critics, gather_sac_batch(replay, idx), actor_adam,
                    critic_adam, spec.gamma, rng_updates);
    }
    while (next_checkpoint < checkpoint_steps.size() &&
           step + 1 >= checkpoint_steps[next_checkpoint]) {
      result.checkpoints.push_back(result.policy);
      ++next_checkpoint;
    }
  }
  while (next_checkpoint < checkpoint_steps.size()) {
    result.checkpoints.push_back(result.policy);
    ++next_checkpoint;
  }
  return result;
}

ProgressionData build_progression_buffer(const Env& env, int half_size, int n_checkpoints,
                                         int sac_steps, const LoopConfig& config, Rng& rng) {
  Rng rng_sac = rng.split(1);
  Rng rng_random = rng.split(2);
  Rng rng_chunks = rng.split(3);
  Rng rng_ref = rng.split(4);

  std::vector<int> checkpoint_steps;
  for (int k = 1; k <= n_checkpoints; ++k) {
    checkpoint_steps.push_back(sac_steps * k / n_checkpoints);
  }
  SacTrainResult sac = train_sac(env, sac_steps, 1, config, checkpoint_steps, rng_sac);

  ProgressionData out{ReplayBuffer(ReplayBuffer::kDefaultCapacity), sac.policy,
                      StochasticPolicy::make(env.spec().state_dim, env.spec().action_dim,
                                             config.actor_hidden, env.spec().action_low,
                                             env.spec().action_high, rng_ref)};

  const EnvSpec& spec = env.spec();
  int pushed = 0;
  while (pushed < half_size) {
    auto traj = collect_rollout(
        env,
        [&spec](const Eigen::VectorXd&, Rng& r) {
          Eigen::VectorXd a(spec.action_dim);
          for (int j = 0; j < spec.action_dim; ++j)
            a[j] = r.uniform(spec.action_low[j], spec.action_high[j]);
          return a;
        },
        spec.horizon, rng_random);
    for (auto& t : traj) {
      if (pushed >= half_size) break;
      out.curated.push(std::move(t));
      ++pushed;
    }
  }
  const int per_chunk = half_size / n_checkpoints;
  for (int k = 0; k < n_checkpoints; ++k) {
    out.curated.begin_round();
    const StochasticPolicy& ck = sac.checkpoints[static_cast<std::size_t>(k)];
    int chunk_pushed = 0;
    const int target = (k == n_checkpoints - 1) ? half_size - per_chunk * (n_checkpoints - 1)
                                                : per_chunk;
    while (chunk_pushed < target) {
      auto traj = collect_rollout(
          env, [&ck](const Eigen::VectorXd& s, Rng& r) { return ck.act(s, false, r); },
          spec.horizon, rng_chunks);
      for (auto& t : traj) {
        if (chunk_pushed >= target) break;
        out.curated.push(std::move(t));
        ++chunk_pushed;
      }
    }
  }
  return out;
}

void write_metrics_csv(const RunResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_metrics_csv: cannot open " + path);
  out << "# tom-metrics v1\n";
  out << "epoch,env_steps,eval_return_mean,eval_return_max,model_nll,weight_mean,weight_max";
  for (int d = 0; d < 10; ++d) out << ",weight_decile_" << d;
  out << "\n";
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
  };
  for (const auto& row : result.metrics) {
    out << row.epoch << ',' << row.env_steps << ',';
    put(row.eval_return_mean);
    out << ',';
    put(row.eval_return_max);
    out << ',';
    put(row.model_nll);
    out << ',';
    put(row.weight_mean);
    out << ',';
    put(row.weight_max);
    for (int d = 0; d < 10; ++d) {
      out << ',';
      put(row.weight_decile_mean.size() > d ? row.weight_decile_mean[d] : 0.0);
    }
    out << "\n";
  }
  if (result.failed) out << "# run failed: " << result.failure << "\n";
}

void write_phases_csv(const RunResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_phases_csv: cannot open " + path);
  out << "# tom-phases v1\nepoch,sequence,phase\n";
  for (const auto& p : result.phases) {
    out << p.epoch << ',' << p.sequence << ',' << p.phase << "\n";
  }
}

void write_weights_csv(const Eigen::VectorXd& weights, const ReplayBuffer& buffer,
                       const std::function<int(const Transition&)>& flag,
                       const std::string& path) {
  require(static_cast<std::size_t>(weights.size()) == buffer.size(),
          "write_weights_csv: weights/buffer mismatch");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_weights_csv: cannot open " + path);
  out << "# tom-weights v1\n";
  out << "insertion_index,weight" << (flag ? ",flag" : "") << "\n";
  char buf[32];
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    const Transition& t = buffer[static_cast<std::size_t>(i)];
    std::snprintf(buf, sizeof(buf), "%.17g", weights[i]);
    out << t.insertion_index << ',' << buf;
    if (flag) out << ',' << flag(t);
    out << "\n";
  }
  const Eigen::VectorXd deciles = decile_means(weights);
  for (int d = 0; d < 10; ++d) {
    std::snprintf(buf, sizeof(buf), "%.17g", deciles[d]);
    out << "# decile," << d << ',' << buf << "\n";
  }
}

}  // namespace tom
