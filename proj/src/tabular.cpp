#include "tom/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace tom {

void TabularMDP::validate(double tol) const {
  require(n_states >= 1 && n_actions >= 1, "TabularMDP: sizes must be positive");
  require(gamma > 0.0 && gamma < 1.0, "TabularMDP: gamma must lie in (0,1)");
  require(reward.rows() == n_states && reward.cols() == n_actions, "TabularMDP: reward shape");
  require(initial_dist.size() == n_states, "TabularMDP: initial_dist shape");
  require(reward.allFinite(), "TabularMDP: rewards must be finite");
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      double row = 0.0;
      for (int s2 = 0; s2 < n_states; ++s2) {
        const double t = transition.at(s, a, s2);
        require(t >= -tol, "TabularMDP: negative transition probability");
        row += t;
      }
      require(std::abs(row - 1.0) <= tol, "TabularMDP: transition row does not sum to 1");
    }
  }
  require(std::abs(initial_dist.sum() - 1.0) <= tol, "TabularMDP: mu0 does not sum to 1");
}

void TabularPolicy::validate(double tol) const {
  for (Eigen::Index s = 0; s < pi.rows(); ++s) {
    require(std::abs(pi.row(s).sum() - 1.0) <= tol, "TabularPolicy: row does not sum to 1");
    require((pi.row(s).array() >= -tol).all(), "TabularPolicy: negative probability");
  }
}

OccupancyTable exact_occupancy(const TabularMDP& mdp, const TabularPolicy& policy) {
  const int S = mdp.n_states, A = mdp.n_actions;
  const Eigen::Index n = static_cast<Eigen::Index>(S) * A;
  // x = (1-g) b + g M x with M[(s,a),(s~,a~)] = pi(a|s) T(s|s~,a~)
  Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd b(n);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      const Eigen::Index row = static_cast<Eigen::Index>(s) * A + a;
      b[row] = (1.0 - mdp.gamma) * mdp.initial_dist[s] * policy.pi(s, a);
      for (int s0 = 0; s0 < S; ++s0) {
        for (int a0 = 0; a0 < A; ++a0) {
          const Eigen::Index col = static_cast<Eigen::Index>(s0) * A + a0;
          system(row, col) -= mdp.gamma * policy.pi(s, a) * mdp.transition.at(s0, a0, s);
        }
      }
    }
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
  Eigen::VectorXd x = lu.solve(b);
  if (!x.allFinite() || (system * x - b).cwiseAbs().maxCoeff() > 1e-7) {
    throw NumericalError("exact_occupancy: Bellman flow system is singular or ill-conditioned");
  }
  OccupancyTable d(S, A);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) d(s, a) = x[static_cast<Eigen::Index>(s) * A + a];
  return d;
}

double bellman_flow_residual(const OccupancyTable& d, const TabularMDP& mdp,
                             const TabularPolicy& policy) {
  const int S = mdp.n_states, A = mdp.n_actions;
  double worst = 0.0;
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      double inflow = 0.0;
      for (int s0 = 0; s0 < S; ++s0)
        for (int a0 = 0; a0 < A; ++a0) inflow += mdp.transition.at(s0, a0, s) * d(s0, a0);
      const double rhs =
          (1.0 - mdp.gamma) * mdp.initial_dist[s] * policy.pi(s, a) +
          mdp.gamma * policy.pi(s, a) * inflow;
      worst = std::max(worst, std::abs(d(s, a) - rhs));
    }
  }
  return worst;
}

double state_flow_residual(const OccupancyTable& d, const TabularMDP& mdp) {
  const int S = mdp.n_states, A = mdp.n_actions;
  double worst = 0.0;
  for (int s = 0; s < S; ++s) {
    double inflow = 0.0;
    for (int s0 = 0; s0 < S; ++s0)
      for (int a0 = 0; a0 < A; ++a0) inflow += mdp.transition.at(s0, a0, s) * d(s0, a0);
    const double rhs = (1.0 - mdp.gamma) * mdp.initial_dist[s] + mdp.gamma * inflow;
    worst = std::max(worst, std::abs(d.row(s).sum() - rhs));
  }
  return worst;
}

SasTable transition_occupancy(const OccupancyTable& d, const TabularMDP& mdp) {
  SasTable out(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      for (int s2 = 0; s2 < mdp.n_states; ++s2)
        out.at(s, a, s2) = mdp.transition.at(s, a, s2) * d(s, a);
  return out;
}

RecoveredTransition recover_transition(const SasTable& dtod) {
  const int S = dtod.n_states, A = dtod.n_actions;
  RecoveredTransition out;
  out.transition = SasTable(S, A);
  out.defined.setConstant(S, A, false);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      double mass = 0.0;
      for (int s2 = 0; s2 < S; ++s2) mass += dtod.at(s, a, s2);
      if (mass > 0.0) {
        out.defined(s, a) = true;
        for (int s2 = 0; s2 < S; ++s2) out.transition.at(s, a, s2) = dtod.at(s, a, s2) / mass;
      }
    }
  }
  return out;
}

double bellman_transition_flow_residual(const SasTable& dtod, const TabularMDP& mdp,
                                        const TabularPolicy& policy) {
  const int S = mdp.n_states, A = mdp.n_actions;
  // inflow(s) = sum_{s~,a~} d((s~,a~), s)
  Eigen::VectorXd inflow = Eigen::VectorXd::Zero(S);
  for (int s0 = 0; s0 < S; ++s0)
    for (int a0 = 0; a0 < A; ++a0)
      for (int s = 0; s < S; ++s) inflow[s] += dtod.at(s0, a0, s);
  double worst = 0.0;
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      for (int s2 = 0; s2 < S; ++s2) {
        const double t = mdp.transition.at(s, a, s2);
        const double rhs = (1.0 - mdp.gamma) * mdp.initial_dist[s] * t * policy.pi(s, a) +
                           mdp.gamma * t * policy.pi(s, a) * inflow[s];
        worst = std::max(worst, std::abs(dtod.at(s, a, s2) - rhs));
      }
    }
  }
  return worst;
}

Eigen::VectorXd sa_flow_residual(const SasTable& dtod, const Eigen::VectorXd& initial_dist,
                                 const TabularPolicy& policy, double gamma) {
  const int S = dtod.n_states, A = dtod.n_actions;
  Eigen::VectorXd inflow = Eigen::VectorXd::Zero(S);
  for (int s0 = 0; s0 < S; ++s0)
    for (int a0 = 0; a0 < A; ++a0)
      for (int s = 0; s < S; ++s) inflow[s] += dtod.at(s0, a0, s);
  Eigen::VectorXd res(static_cast<Eigen::Index>(S) * A);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      double mass = 0.0;
      for (int s2 = 0; s2 < S; ++s2) mass += dtod.at(s, a, s2);
      res[static_cast<Eigen::Index>(s) * A + a] =
          mass - (1.0 - gamma) * initial_dist[s] * policy.pi(s, a) -
          gamma * policy.pi(s, a) * inflow[s];
    }
  }
  return res;
}

double return_from_occupancy(const OccupancyTable& d, const TabularMDP& mdp) {
  return (d.array() * mdp.reward.array()).sum() / (1.0 - mdp.gamma);
}

LowerBoundResult verify_lower_bound(const TabularMDP& mdp, const TabularPolicy& policy,
                                    const SasTable& model_transition, const FDivergence& div) {
  require((mdp.reward.array() > 0.0).all(),
          "verify_lower_bound: rewards must be strictly positive (log R)");
  const OccupancyTable d_true = exact_occupancy(mdp, policy);
  const TabularMDP model_mdp = with_transition(mdp, model_transition);
  const OccupancyTable d_model = exact_occupancy(model_mdp, policy);
  const SasTable dtod_true = transition_occupancy(d_true, mdp);
  const SasTable dtod_model = transition_occupancy(d_model, model_mdp);

  const double lhs = std::log((d_true.array() * mdp.reward.array()).sum());

  double df = 0.0;
  for (Eigen::Index i = 0; i < dtod_true.size(); ++i) {
    const double q = dtod_true.v[i];
    const double p = dtod_model.v[i];
    if (q > 0.0) {
      df += q * div.f(p / q);
    } else if (p > 0.0) {
      df = std::numeric_limits<double>::infinity();
      break;
    }
  }
  const double e_log_r = (d_model.array() * mdp.reward.array().log()).sum();
  return {lhs, -df + e_log_r};
}

double primal_objective(const SasTable& d, const SasTable& replay_dtod,
                        const SasTable& policy_dtod, const FDivergence& div) {
  double value = 0.0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const double q = replay_dtod.v[i];
    if (q <= 0.0) continue;
    const double r = std::log(std::max(policy_dtod.v[i], 1e-300) / q);
    value += d.v[i] * r - q * div.f(d.v[i] / q);
  }
  return value;
}

namespace {

// Euclidean projection onto the probability simplex restricted to the
// coordinates listed in support (others stay zero).
void project_simplex(Eigen::VectorXd& x, const std::vector<Eigen::Index>& support) {
  std::vector<double> vals;
  vals.reserve(support.size());
  for (Eigen::Index i : support) vals.push_back(x[i]);
  std::vector<double> sorted = vals;
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  double cum = 0.0, theta = 0.0;
  int rho = 0;
  for (std::size_t j = 0; j < sorted.size(); ++j) {
    cum += sorted[j];
    const double t = (cum - 1.0) / static_cast<double>(j + 1);
    if (sorted[j] - t > 0.0) {
      rho = static_cast<int>(j + 1);
      theta = t;
    }
  }
  (void)rho;
  for (std::size_t j = 0; j < support.size(); ++j) {
    x[support[j]] = std::max(0.0, vals[j] - theta);
  }
}

double divergence_gradient(const FDivergence& div, double ratio) {
  switch (div.kind) {
    case DivergenceKind::kChiSquared:
      return 2.0 * (ratio - 1.0);
    case DivergenceKind::kKl:
      return std::log(std::max(ratio, 1e-14)) + 1.0;
  }
  return 0.0;
}

}  // namespace

SasTable primal_tom_solve(const TabularMDP& mdp_true, const TabularPolicy& policy,
                          const SasTable& replay_dtod, const FDivergence& div,
                          const PrimalSolveOptions& options) {
  const int S = mdp_true.n_states, A = mdp_true.n_actions;
  const Eigen::Index n = replay_dtod.size();

  const OccupancyTable d_pi = exact_occupancy(mdp_true, policy);
  const SasTable dtod_pi = transition_occupancy(d_pi, mdp_true);

  std::vector<Eigen::Index> support;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (replay_dtod.v[i] > 0.0) support.push_back(i);
  }
  require(!support.empty(), "primal_tom_solve: replay distribution has empty support");

  // Relevance reward on the support.
  Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i : support) {
    r[i] = std::log(std::max(dtod_pi.v[i], 1e-300) / replay_dtod.v[i]);
  }

  // Flow constraint rows: sum_{s'} d(s,a,s') - g pi(a|s) inflow(s) = (1-g) mu0(s) pi(a|s).
  const Eigen::Index m = static_cast<Eigen::Index>(S) * A;
  Eigen::MatrixXd a_mat = Eigen::MatrixXd::Zero(m, n);
  Eigen::VectorXd b_vec(m);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      const Eigen::Index row = static_cast<Eigen::Index>(s) * A + a;
      b_vec[row] = (1.0 - mdp_true.gamma) * mdp_true.initial_dist[s] * policy.pi(s, a);
      for (int s2 = 0; s2 < S; ++s2) a_mat(row, replay_dtod.idx(s, a, s2)) += 1.0;
      for (int s0 = 0; s0 < S; ++s0)
        for (int a0 = 0; a0 < A; ++a0)
          a_mat(row, replay_dtod.idx(s0, a0, s)) -= mdp_true.gamma * policy.pi(s, a);
    }
  }
  const double sigma_max = a_mat.bdcSvd().singularValues()(0);

  // Curvature bound of the divergence term on the support.
  double l_div = 0.0;
  for (Eigen::Index i : support) l_div = std::max(l_div, 2.0 / replay_dtod.v[i]);
  if (div.kind == DivergenceKind::kKl) l_div = std::max(l_div, 1e4);

  Eigen::VectorXd x = replay_dtod.v;  // feasible-ish warm start on the simplex
  SasTable feasibility_probe = replay_dtod;

  auto penalized_value = [&](const Eigen::VectorXd& d, double lambda) {
    double val = 0.0;
    for (Eigen::Index i : support) {
      const double q = replay_dtod.v[i];
      val += d[i] * r[i] - q * div.f(d[i] / q);
    }
    const Eigen::VectorXd res = a_mat * d - b_vec;
    return val - lambda * res.squaredNorm();
  };
  auto penalized_gradient = [&](const Eigen::VectorXd& d, double lambda) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i : support) {
      g[i] = r[i] - divergence_gradient(div, d[i] / replay_dtod.v[i]);
    }
    g.noalias() -= 2.0 * lambda * (a_mat.transpose() * (a_mat * d - b_vec));
    return g;
  };

  for (double lambda = options.penalty_initial; lambda <= options.penalty_max; lambda *= 10.0) {
    const double lipschitz = l_div + 2.0 * lambda * sigma_max * sigma_max;
    const double step = 1.0 / lipschitz;
    Eigen::VectorXd y = x;
    Eigen::VectorXd x_prev = x;
    double t_acc = 1.0;
    double last_val = penalized_value(x, lambda);
    int stall = 0;
    for (int it = 0; it < options.max_iters_per_level; ++it) {
      Eigen::VectorXd g = penalized_gradient(y, lambda);
      Eigen::VectorXd x_new = y + step * g;
      project_simplex(x_new, support);
      // Gradient restart keeps the momentum honest on this nonsmooth path.
      if (g.dot(x_new - x) < 0.0) {
        y = x;
        t_acc = 1.0;
        Eigen::VectorXd g2 = penalized_gradient(y, lambda);
        x_new = y + step * g2;
        project_simplex(x_new, support);
      }
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_acc * t_acc));
      y = x_new + ((t_acc - 1.0) / t_next) * (x_new - x);
      t_acc = t_next;
      x_prev = x;
      x = x_new;
      if (it % 50 == 0) {
        const double val = penalized_value(x, lambda);
        if (std::abs(val - last_val) < options.objective_tolerance * std::max(1.0, std::abs(val))) {
          if (++stall >= 3) break;
        } else {
          stall = 0;
        }
        last_val = val;
      }
    }
    feasibility_probe.v = x;
    const double residual =
        sa_flow_residual(feasibility_probe, mdp_true.initial_dist, policy, mdp_true.gamma)
            .cwiseAbs()
            .maxCoeff();
    if (residual < options.flow_tolerance && lambda >= 1e6) break;
  }

  SasTable out = replay_dtod;
  out.v = x;
  const double residual =
      sa_flow_residual(out, mdp_true.initial_dist, policy, mdp_true.gamma).cwiseAbs().maxCoeff();
  if (residual > 10.0 * options.flow_tolerance) {
    throw NumericalError("primal_tom_solve: flow constraints infeasible on the replay support "
                         "(residual " + std::to_string(residual) + ")");
  }
  return out;
}

TabularMDP random_tabular_mdp(int n_states, int n_actions, double gamma, Rng& rng) {
  TabularMDP mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.gamma = gamma;
  mdp.transition = SasTable(n_states, n_actions);
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      double total = 0.0;
      for (int s2 = 0; s2 < n_states; ++s2) {
        const double e = -std::log(1.0 - rng.uniform());
        mdp.transition.at(s, a, s2) = e;
        total += e;
      }
      for (int s2 = 0; s2 < n_states; ++s2) mdp.transition.at(s, a, s2) /= total;
    }
  }
  mdp.reward.resize(n_states, n_actions);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) mdp.reward(s, a) = rng.uniform(0.1, 1.0);
  mdp.initial_dist.resize(n_states);
  double total = 0.0;
  for (int s = 0; s < n_states; ++s) {
    mdp.initial_dist[s] = -std::log(1.0 - rng.uniform());
    total += mdp.initial_dist[s];
  }
  mdp.initial_dist /= total;
  return mdp;
}

TabularPolicy random_tabular_policy(int n_states, int n_actions, Rng& rng) {
  TabularPolicy p;
  p.pi.resize(n_states, n_actions);
  for (int s = 0; s < n_states; ++s) {
    double total = 0.0;
    for (int a = 0; a < n_actions; ++a) {
      p.pi(s, a) = -std::log(1.0 - rng.uniform());
      total += p.pi(s, a);
    }
    p.pi.row(s) /= total;
  }
  return p;
}

SasTable perturb_transition(const SasTable& transition, double strength, Rng& rng) {
  SasTable out = transition;
  for (int s = 0; s < out.n_states; ++s) {
    for (int a = 0; a < out.n_actions; ++a) {
      double total = 0.0;
      for (int s2 = 0; s2 < out.n_states; ++s2) {
        out.at(s, a, s2) = transition.at(s, a, s2) * std::exp(strength * rng.normal());
        total += out.at(s, a, s2);
      }
      for (int s2 = 0; s2 < out.n_states; ++s2) out.at(s, a, s2) /= total;
    }
  }
  return out;
}

TabularMDP with_transition(const TabularMDP& mdp, const SasTable& transition) {
  TabularMDP out = mdp;
  out.transition = transition;
  return out;
}

}  // namespace tom
