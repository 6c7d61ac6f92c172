#include "tom/envs.hpp"

#include <cmath>

namespace tom {

TabularMDP make_grid_chain(const GridChainConfig& config) {
  const int S = config.n_states;
  const int A = config.n_actions;
  require(S >= 2 && A >= 2, "make_grid_chain: need at least 2 states and 2 actions");

  double slip = config.stochasticity;
  TabularMDP mdp;
  mdp.n_states = S;
  mdp.n_actions = A;
  mdp.gamma = config.gamma;
  mdp.transition = SasTable(S, A);
  mdp.reward.resize(S, A);
  mdp.initial_dist = Eigen::VectorXd::Zero(S);
  mdp.initial_dist[0] = 1.0;

  if (config.seed != 0) {
    Rng rng(config.seed);
    slip = rng.uniform(0.05, 0.3);
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) mdp.reward(s, a) = rng.uniform(0.1, 1.0);
  } else {
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a)
        mdp.reward(s, a) = 0.1 + 0.9 * static_cast<double>(s) / (S - 1);
  }

  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      // Action A-1 steps right, action 0 steps left; anything between mixes.
      const int direction = (a == 0) ? -1 : (a == A - 1 ? 1 : (a % 2 == 0 ? -1 : 1));
      const int target = std::clamp(s + direction, 0, S - 1);
      mdp.transition.at(s, a, target) += 1.0 - slip;
      mdp.transition.at(s, a, s) += slip;
    }
  }
  mdp.validate();
  return mdp;
}

RoadAndRocks::RoadAndRocks(std::uint64_t map_seed) {
  spec_.state_dim = 2;
  spec_.action_dim = 2;
  spec_.action_low = Eigen::Vector2d(-kMaxStep, -kMaxStep);
  spec_.action_high = Eigen::Vector2d(kMaxStep, kMaxStep);
  spec_.gamma = 0.99;
  spec_.reward_low = 0.01;
  spec_.reward_high = 1.0;
  spec_.horizon = 200;
  goal_ = Eigen::Vector2d(0.95, 0.5);

  Rng rng(map_seed);
  cells_.resize(kGridSize * kGridSize);
  for (auto& m : cells_) {
    const double theta = rng.uniform(0.0, 2.0 * M_PI);
    const double sx = rng.uniform(0.2, 1.8);
    const double sy = rng.uniform(0.2, 1.8);
    Eigen::Matrix2d rot;
    rot << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    m = rot * Eigen::Vector2d(sx, sy).asDiagonal();
  }
}

bool RoadAndRocks::is_on_road(const Eigen::VectorXd& state) const {
  return state[1] >= 0.45 && state[1] <= 0.55;
}

Eigen::Matrix2d RoadAndRocks::cell_distortion(const Eigen::VectorXd& state) const {
  const int cx = std::clamp(static_cast<int>(state[0] * kGridSize), 0, kGridSize - 1);
  const int cy = std::clamp(static_cast<int>(state[1] * kGridSize), 0, kGridSize - 1);
  return cells_[static_cast<std::size_t>(cy) * kGridSize + cx];
}

Eigen::VectorXd RoadAndRocks::reset(Rng& rng) const {
  Eigen::VectorXd s(2);
  s[0] = rng.uniform(0.02, 0.08);
  s[1] = rng.uniform(0.47, 0.53);
  return s;
}

double RoadAndRocks::reward(const Eigen::VectorXd& state, const Eigen::VectorXd&) const {
  return std::max(0.01, 1.0 - (state.head<2>() - goal_).norm());
}

Eigen::VectorXd RoadAndRocks::mean_step(const Eigen::VectorXd& state,
                                        const Eigen::VectorXd& action) const {
  Eigen::Vector2d a = action.head<2>().cwiseMax(-kMaxStep).cwiseMin(kMaxStep);
  Eigen::Vector2d next;
  if (is_on_road(state)) {
    next = state.head<2>() + a;
  } else {
    next = state.head<2>() + cell_distortion(state) * a;
  }
  return next.cwiseMax(0.0).cwiseMin(1.0);
}

std::pair<Eigen::VectorXd, double> RoadAndRocks::step(const Eigen::VectorXd& state,
                                                      const Eigen::VectorXd& action,
                                                      Rng& rng) const {
  Eigen::VectorXd next = mean_step(state, action);
  next[0] += rng.normal(0.0, kNoiseStd);
  next[1] += rng.normal(0.0, kNoiseStd);
  next = next.cwiseMax(0.0).cwiseMin(1.0);
  return {next, reward(state, action)};
}

Eigen::VectorXd RoadAndRocks::expert_action(const Eigen::VectorXd& state) const {
  // Hold the corridor center line, then drive down the road to the goal.
  Eigen::Vector2d target(goal_[0], 0.5);
  if (std::abs(state[0] - goal_[0]) < 2.0 * kMaxStep) target = goal_;
  Eigen::Vector2d a = target - state.head<2>();
  return a.cwiseMax(-kMaxStep).cwiseMin(kMaxStep);
}

OfflineDataset make_offline_dataset(const RoadAndRocks& env, int n_random, int n_expert_traj,
                                    Rng& rng) {
  OfflineDataset out{ReplayBuffer(ReplayBuffer::kDefaultCapacity), 0};
  const int episode_len = 50;
  int pushed = 0;
  while (pushed < n_random) {
    Eigen::VectorXd s(2);
    s[0] = rng.uniform(0.0, 1.0);
    s[1] = rng.uniform(0.0, 1.0);
    const int len = std::min(episode_len, n_random - pushed);
    for (int i = 0; i < len; ++i) {
      Eigen::VectorXd a(2);
      a[0] = rng.uniform(-RoadAndRocks::kMaxStep, RoadAndRocks::kMaxStep);
      a[1] = rng.uniform(-RoadAndRocks::kMaxStep, RoadAndRocks::kMaxStep);
      auto [s2, r] = env.step(s, a, rng);
      Transition t;
      t.state = s;
      t.action = a;
      t.next_state = s2;
      t.reward = r;
      t.episode_start = (i == 0);
      out.buffer.push(std::move(t));
      s = std::move(s2);
      ++pushed;
    }
  }
  out.expert_begin = out.buffer.size();
  out.buffer.begin_round();
  for (int e = 0; e < n_expert_traj; ++e) {
    auto traj = collect_rollout(
        env, [&env](const Eigen::VectorXd& s, Rng&) { return env.expert_action(s); },
        env.spec().horizon, rng);
    for (auto& t : traj) out.buffer.push(std::move(t));
  }
  return out;
}

PointMassReach::PointMassReach() {
  spec_.state_dim = 4;
  spec_.action_dim = 2;
  spec_.action_low = Eigen::Vector2d(-1.0, -1.0);
  spec_.action_high = Eigen::Vector2d(1.0, 1.0);
  spec_.gamma = 0.99;
  spec_.reward_low = 0.01;
  spec_.reward_high = 1.0;
  spec_.horizon = 200;
  goal_ = Eigen::Vector2d(0.6, 0.6);
}

Eigen::VectorXd PointMassReach::reset(Rng& rng) const {
  Eigen::VectorXd s(4);
  s[0] = rng.uniform(-0.9, -0.7);
  s[1] = rng.uniform(-0.9, -0.7);
  s[2] = 0.0;
  s[3] = 0.0;
  return s;
}

double PointMassReach::reward(const Eigen::VectorXd& state, const Eigen::VectorXd&) const {
  return std::max(0.01, 1.0 - 0.5 * (state.head<2>() - goal_).norm());
}

std::pair<Eigen::VectorXd, double> PointMassReach::step(const Eigen::VectorXd& state,
                                                        const Eigen::VectorXd& action,
                                                        Rng&) const {
  Eigen::Vector2d a = action.head<2>().cwiseMax(-1.0).cwiseMin(1.0);
  Eigen::VectorXd next(4);
  Eigen::Vector2d vel = (1.0 - kDrag) * state.segment<2>(2) + kDt * a;
  vel = vel.cwiseMax(-1.0).cwiseMin(1.0);
  Eigen::Vector2d pos = state.head<2>() + kDt * vel;
  pos = pos.cwiseMax(-1.0).cwiseMin(1.0);
  next << pos, vel;
  return {next, reward(state, action)};
}

}  // namespace tom
