#pragma once

#include <Eigen/Dense>

#include "tom/common.hpp"
#include "tom/fdiv.hpp"
#include "tom/rng.hpp"

namespace tom {

// Dense (s, a, s') table with flat storage; used for transition tensors
// and transition occupancy distributions.
struct SasTable {
  int n_states = 0;
  int n_actions = 0;
  Eigen::VectorXd v;

  SasTable() = default;
  SasTable(int s, int a)
      : n_states(s), n_actions(a),
        v(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s) * a * s)) {}

  Eigen::Index idx(int s, int a, int s2) const {
    return (static_cast<Eigen::Index>(s) * n_actions + a) * n_states + s2;
  }
  double at(int s, int a, int s2) const { return v[idx(s, a, s2)]; }
  double& at(int s, int a, int s2) { return v[idx(s, a, s2)]; }
  Eigen::Index size() const { return v.size(); }
};

struct TabularMDP {
  int n_states = 0;
  int n_actions = 0;
  SasTable transition;          // transition.at(s,a,s') = T(s'|s,a)
  Eigen::MatrixXd reward;       // n_states x n_actions
  Eigen::VectorXd initial_dist; // mu0
  double gamma = 0.95;

  void validate(double tol = 1e-9) const;
};

struct TabularPolicy {
  Eigen::MatrixXd pi;  // n_states x n_actions, rows sum to 1

  void validate(double tol = 1e-9) const;
};

// Discounted state-action visitation distribution; entries >= 0, sums to 1.
using OccupancyTable = Eigen::MatrixXd;

// Solves the transpose Bellman flow system (I - gamma M) d = (1-gamma) mu0*pi
// exactly. Throws NumericalError if the system is singular.
OccupancyTable exact_occupancy(const TabularMDP& mdp, const TabularPolicy& policy);

// Max-norm residual of the per-(s,a) transpose Bellman equation.
double bellman_flow_residual(const OccupancyTable& d, const TabularMDP& mdp,
                             const TabularPolicy& policy);

// Max-norm residual of the state-marginal Bellman flow constraint.
double state_flow_residual(const OccupancyTable& d, const TabularMDP& mdp);

// d((s,a),s') = T(s'|s,a) d(s,a).
SasTable transition_occupancy(const OccupancyTable& d, const TabularMDP& mdp);

struct RecoveredTransition {
  SasTable transition;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> defined;  // per (s,a)
};

// Backs out T(s'|s,a) by normalizing over s'. Zero-mass (s,a) rows come
// back flagged undefined.
RecoveredTransition recover_transition(const SasTable& dtod);

// Max-norm residual of the transition-level Bellman flow identity.
double bellman_transition_flow_residual(const SasTable& dtod, const TabularMDP& mdp,
                                        const TabularPolicy& policy);

// Per-(s,a) residual of the model-free transition flow constraint
// sum_{s'} d((s,a),s') = (1-g) mu0(s) pi(a|s) + g pi(a|s) sum_in d((.,.),s).
// This is the constraint set of the regularized model-learning problem; no
// transition function appears in it.
Eigen::VectorXd sa_flow_residual(const SasTable& dtod, const Eigen::VectorXd& initial_dist,
                                 const TabularPolicy& policy, double gamma);

// J = 1/(1-gamma) * sum d(s,a) R(s,a).
double return_from_occupancy(const OccupancyTable& d, const TabularMDP& mdp);

struct LowerBoundResult {
  double lhs;  // log E_{d_T}[R]
  double rhs;  // -D_f(d_That || d_T) + E_{d_That}[log R]
};

// Evaluates both sides of the transition-occupancy lower bound from exact
// occupancies under the true and model dynamics. Rewards must be strictly
// positive. The additive constant common to both sides is dropped.
LowerBoundResult verify_lower_bound(const TabularMDP& mdp, const TabularPolicy& policy,
                                    const SasTable& model_transition, const FDivergence& div);

struct PrimalSolveOptions {
  double penalty_initial = 1.0;
  double penalty_max = 1e8;
  double flow_tolerance = 1e-5;       // max-norm target on flow residual
  double objective_tolerance = 1e-8;  // stop when the objective stalls
  int max_iters_per_level = 400000;
};

// Ground-truth oracle for the regularized model-learning problem: maximizes
//   E_d[r] - D_f(d || replay_dtod)   with   r = log(d_pi / replay_dtod)
// over transition-occupancy candidates satisfying the flow constraints,
// by accelerated projected gradient ascent on the simplex with an escalating
// quadratic penalty on the flow residual. The optimum is the distribution
// whose replay-relative ratios the dual Q-problem's weights must reproduce.
SasTable primal_tom_solve(const TabularMDP& mdp_true, const TabularPolicy& policy,
                          const SasTable& replay_dtod, const FDivergence& div,
                          const PrimalSolveOptions& options = {});

// Value of the oracle objective E_d[r] - D_f(d || q) for a candidate d.
double primal_objective(const SasTable& d, const SasTable& replay_dtod,
                        const SasTable& policy_dtod, const FDivergence& div);

// Random instance generators (strictly positive rows).
TabularMDP random_tabular_mdp(int n_states, int n_actions, double gamma, Rng& rng);
TabularPolicy random_tabular_policy(int n_states, int n_actions, Rng& rng);

// Multiplicative noise on the transition tensor, renormalized; preserves
// support. strength ~ 0.5 gives a clearly different but comparable model.
SasTable perturb_transition(const SasTable& transition, double strength, Rng& rng);

// Same MDP with a different transition tensor (for occupancies under a model).
TabularMDP with_transition(const TabularMDP& mdp, const SasTable& transition);

}  // namespace tom
