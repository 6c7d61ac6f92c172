#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "tom/buffer.hpp"
#include "tom/envs.hpp"
#include "tom/models.hpp"
#include "tom/policy.hpp"
#include "tom/relevance.hpp"

namespace tom {

enum class ModelKind { kGaussianMlp, kLinearGaussian };

struct LoopConfig {
  int epochs = 20;
  int env_steps_per_epoch = 250;     // E
  int init_env_steps = 250;          // random seed data before the first epoch
  int rollout_batch = 4000;          // model rollouts per epoch, spread over steps
  int rollout_length = 1;            // k
  int policy_updates_per_step = 20;  // G
  int discriminator_steps = 100;
  int dual_q_steps = 1000;
  int model_steps = 30;              // H
  int batch_size = 256;
  int eval_episodes = 10;
  int value_action_samples = 4;      // P while training the dual Q
  int weight_action_samples = 16;    // P for the final weight computation
  std::vector<int> actor_hidden = {64, 64};
  std::vector<int> critic_hidden = {64, 64};
  std::vector<int> model_hidden = {64, 64};
  std::vector<int> disc_hidden = {64, 64};
  std::vector<int> q_hidden = {64, 64};
  double learning_rate = 3e-4;
  double alpha = 0.2;
  double polyak = 0.995;
  std::size_t replay_capacity = ReplayBuffer::kDefaultCapacity;
  std::size_t model_buffer_capacity = 40'000;
  WeightScheme scheme;
  DivergenceKind divergence = DivergenceKind::kChiSquared;
  ModelKind model_kind = ModelKind::kGaussianMlp;
  bool loss_weighting = false;       // consume weights in the loss, not by sampling
  bool force_unit_weights = false;   // diagnostic: tom machinery with xi pinned to 1
  std::uint64_t seed = 0;
};

struct MetricsRow {
  int epoch = 0;
  std::int64_t env_steps = 0;
  double eval_return_mean = 0.0;
  double eval_return_max = 0.0;  // running max of eval_return_mean
  double model_nll = 0.0;        // held-out NLL on the current-policy pool
  double weight_mean = 0.0;
  double weight_max = 0.0;
  Eigen::VectorXd weight_decile_mean;  // 10 entries, oldest decile first
};

// Logical phase sequencing per epoch (deterministic; no wall clock).
struct PhaseEvent {
  int epoch = 0;
  std::string phase;
  std::int64_t sequence = 0;
};

struct RunResult {
  std::vector<MetricsRow> metrics;
  std::vector<PhaseEvent> phases;
  bool failed = false;
  std::string failure;

  StochasticPolicy policy;
  CriticPair critics;
  std::optional<GaussianMlpModel> mlp_model;
  std::optional<LinearGaussianModel> linear_model;
  std::optional<Discriminator> discriminator;
  std::optional<DualQ> dual_q;
  Eigen::VectorXd last_weights;  // aligned with the final buffer
  ReplayBuffer replay{ReplayBuffer::kDefaultCapacity};
};

// Full online loop: per epoch, discriminator -> dual Q -> importance
// weights -> weighted model training -> E environment steps with model
// rollouts and policy updates -> current-policy pool refresh.
RunResult run_online(const LoopConfig& config, const Env& env, Rng& rng);

// Same epoch structure on a frozen dataset; the environment is touched only
// to evaluate the policy for reporting.
RunResult run_offline(const LoopConfig& config, const ReplayBuffer& dataset,
                      const ReplayBuffer& current_policy_data, const Env& eval_env, Rng& rng);

struct WeightProgression {
  Eigen::VectorXd weights;                 // per curated-buffer transition
  Eigen::VectorXd decile_mean;             // 10 over the whole buffer
  Eigen::VectorXd second_half_decile_mean; // 10 over the second half
  double first_half_mean = 0.0;
  double second_half_mean = 0.0;
};

// Trains discriminator + dual Q offline against the curated buffer with the
// given policy of interest and reports mean weights per buffer decile.
WeightProgression run_weight_progression(const LoopConfig& config,
                                         const ReplayBuffer& curated_buffer, const Env& env,
                                         const StochasticPolicy& policy_of_interest, Rng& rng);

// ---- experiment scaffolding ----

// Plain SAC on real environment transitions; snapshots the policy at the
// requested step counts (ascending).
struct SacTrainResult {
  StochasticPolicy policy;
  std::vector<StochasticPolicy> checkpoints;
};

SacTrainResult train_sac(const Env& env, int total_steps, int updates_per_step,
                         const LoopConfig& config, const std::vector<int>& checkpoint_steps,
                         Rng& rng);

// Curated buffer for the weight-progression analysis: first half random
// transitions, second half equal chunks from checkpoints of increasing
// quality (a boundary is recorded per chunk).
struct ProgressionData {
  ReplayBuffer curated{ReplayBuffer::kDefaultCapacity};
  StochasticPolicy final_policy;
  StochasticPolicy random_reference;  // untrained policy for the negative control
};

ProgressionData build_progression_buffer(const Env& env, int half_size, int n_checkpoints,
                                         int sac_steps, const LoopConfig& config, Rng& rng);

ActionSampler make_action_sampler(const StochasticPolicy& policy);

void write_metrics_csv(const RunResult& result, const std::string& path);
void write_phases_csv(const RunResult& result, const std::string& path);
void write_weights_csv(const Eigen::VectorXd& weights, const ReplayBuffer& buffer,
                       const std::function<int(const Transition&)>& flag,
                       const std::string& path);

}  // namespace tom
