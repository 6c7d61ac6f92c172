#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "tom/common.hpp"
#include "tom/rng.hpp"

namespace tom {

// One environment step. Tabular environments store state/action as
// 1-element vectors holding the index.
struct Transition {
  Eigen::VectorXd state;
  Eigen::VectorXd action;
  Eigen::VectorXd next_state;
  double reward = 0.0;
  bool episode_start = false;
  std::int64_t insertion_index = 0;
};

struct EnvSpec {
  int state_dim = 0;
  int action_dim = 0;
  Eigen::VectorXd action_low;
  Eigen::VectorXd action_high;
  double gamma = 0.99;
  double reward_low = 0.0;
  double reward_high = 1.0;
  int horizon = 200;
};

// Bounded FIFO of transitions. push() stamps a monotone insertion_index
// that is never reused; eviction is oldest-first. Collection-round
// boundaries (one per outer epoch) can be recorded for recency-based
// weighting schemes.
class ReplayBuffer {
 public:
  static constexpr std::size_t kDefaultCapacity = 1'000'000;
  static constexpr std::size_t kCurrentPolicyCapacity = 1'000;

  explicit ReplayBuffer(std::size_t capacity = kDefaultCapacity);

  void push(Transition t);
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& operator[](std::size_t i) const { return data_[i]; }

  // With-replacement sampling. Weights (aligned with buffer order) must be
  // nonnegative with positive sum; uniform when omitted.
  std::vector<std::size_t> sample_indices(std::size_t batch, Rng& rng) const;
  std::vector<std::size_t> sample_indices(std::size_t batch, const Eigen::VectorXd& weights,
                                          Rng& rng) const;

  // Marks the start of a new collection round (the next pushed transition
  // opens the round).
  void begin_round();
  // Round membership per buffer slot; a buffer without recorded rounds is
  // one round. Rounds are indexed oldest-first, 0-based.
  std::vector<int> rounds() const;
  int round_count() const;

  // Uniform sample over episode-start states. Throws if none are present.
  std::vector<Eigen::VectorXd> initial_state_batch(std::size_t batch, Rng& rng) const;

  void save_csv(const std::string& path) const;
  static ReplayBuffer load_csv(const std::string& path,
                               std::size_t capacity = kDefaultCapacity);

 private:
  std::deque<Transition> data_;
  std::size_t capacity_;
  std::int64_t next_index_ = 0;
  std::vector<std::int64_t> round_starts_;  // insertion_index opening each round
};

// The "last ~1000 environment transitions" pool approximating the current
// policy's footprint; same FIFO mechanics, smaller capacity.
using CurrentPolicyBuffer = ReplayBuffer;

inline CurrentPolicyBuffer make_current_policy_buffer() {
  return CurrentPolicyBuffer(ReplayBuffer::kCurrentPolicyCapacity);
}

// Count-ratio policy pi_D(a|s) = n(s,a)/n(s) of a buffer over a discrete
// state/action grid. Rows of unvisited states are flagged, not filled.
struct EmpiricalPolicy {
  Eigen::MatrixXd pi;         // n_states x n_actions
  std::vector<bool> visited;  // per state
};

EmpiricalPolicy empirical_policy(const ReplayBuffer& buffer, int n_states, int n_actions);

// Steps an environment-like step function from a reset state. The policy
// maps state -> action. The first transition carries episode_start.
using PolicyFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&, Rng&)>;

class Env;  // envs.hpp
std::vector<Transition> collect_rollout(const Env& env, const PolicyFn& policy, int max_steps,
                                        Rng& rng);

}  // namespace tom
