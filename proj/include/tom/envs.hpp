#pragma once

#include <Eigen/Dense>
#include <memory>
#include <utility>

#include "tom/buffer.hpp"
#include "tom/rng.hpp"
#include "tom/tabular.hpp"

namespace tom {

// Environments are value-like: stepping maps (state, action) to a new state
// without interior mutation, so many rollouts can run concurrently.
class Env {
 public:
  virtual ~Env() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual Eigen::VectorXd reset(Rng& rng) const = 0;
  virtual std::pair<Eigen::VectorXd, double> step(const Eigen::VectorXd& state,
                                                  const Eigen::VectorXd& action,
                                                  Rng& rng) const = 0;
  // Known analytic reward, reused for synthetic model rollouts.
  virtual double reward(const Eigen::VectorXd& state, const Eigen::VectorXd& action) const = 0;
};

// Small chain MDP used as the oracle substrate for the tabular machinery.
// Action 1 steps right, action 0 steps left; moves slip with probability
// `stochasticity`; rewards grow toward the right end and stay positive.
struct GridChainConfig {
  int n_states = 5;
  int n_actions = 2;
  double stochasticity = 0.1;
  double gamma = 0.95;
  std::uint64_t seed = 0;  // nonzero seed randomizes rewards and slip
};

TabularMDP make_grid_chain(const GridChainConfig& config = {});

// 2-D driving task: inside an axis-aligned road corridor an action moves the
// agent directly; outside, a fixed per-cell linear distortion (rotation and
// scaling, 20x20 grid) garbles the motion. Rewards stay strictly positive.
class RoadAndRocks final : public Env {
 public:
  explicit RoadAndRocks(std::uint64_t map_seed = 7);

  const EnvSpec& spec() const override { return spec_; }
  Eigen::VectorXd reset(Rng& rng) const override;
  std::pair<Eigen::VectorXd, double> step(const Eigen::VectorXd& state,
                                          const Eigen::VectorXd& action,
                                          Rng& rng) const override;
  double reward(const Eigen::VectorXd& state, const Eigen::VectorXd& action) const override;

  bool is_on_road(const Eigen::VectorXd& state) const;
  Eigen::VectorXd goal() const { return goal_; }
  double goal_tolerance() const { return 0.05; }
  // Distortion matrix of the rocks cell containing the position.
  Eigen::Matrix2d cell_distortion(const Eigen::VectorXd& state) const;
  // Deterministic next-position mean (noise-free dynamics).
  Eigen::VectorXd mean_step(const Eigen::VectorXd& state, const Eigen::VectorXd& action) const;

  // Road-following controller that reaches the goal from the start region.
  Eigen::VectorXd expert_action(const Eigen::VectorXd& state) const;

  static constexpr double kNoiseStd = 0.002;
  static constexpr double kMaxStep = 0.05;
  static constexpr int kGridSize = 20;

 private:
  EnvSpec spec_;
  Eigen::VectorXd goal_;
  std::vector<Eigen::Matrix2d> cells_;  // kGridSize * kGridSize distortions
};

// Uniform-random exploration over the whole map plus a few scripted expert
// trajectories that follow the road to the goal. Expert transitions land at
// the end of the buffer; one boundary is recorded between the random part
// and the expert part. Returns the buffer plus the index where expert data
// begins.
struct OfflineDataset {
  ReplayBuffer buffer;
  std::size_t expert_begin = 0;
};

OfflineDataset make_offline_dataset(const RoadAndRocks& env, int n_random, int n_expert_traj,
                                    Rng& rng);

// Bounded double integrator with linear drag; reward is 1 minus the clamped
// distance of the position to a fixed goal. Positions and velocities clip at
// the box walls, which is the only nonlinearity.
class PointMassReach final : public Env {
 public:
  PointMassReach();

  const EnvSpec& spec() const override { return spec_; }
  Eigen::VectorXd reset(Rng& rng) const override;
  std::pair<Eigen::VectorXd, double> step(const Eigen::VectorXd& state,
                                          const Eigen::VectorXd& action,
                                          Rng& rng) const override;
  double reward(const Eigen::VectorXd& state, const Eigen::VectorXd& action) const override;

  Eigen::Vector2d goal() const { return goal_; }

  static constexpr double kDt = 0.05;
  static constexpr double kDrag = 0.05;

 private:
  EnvSpec spec_;
  Eigen::Vector2d goal_;
};

}  // namespace tom
