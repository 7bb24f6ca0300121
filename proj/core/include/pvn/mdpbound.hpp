#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pvn/rng.hpp"

namespace pvn {

/// Finite-horizon MDP <S, A, R, T, H, mu> with per-state rewards in
/// [0, r_max]. Transition rows are distributions over next states.
struct TabularMDP {
  int n_states = 1;
  int n_actions = 1;
  int horizon = 1;
  double r_max = 1.0;
  std::vector<double> reward;      // [s]
  std::vector<double> transition;  // [s][a][s']
  std::vector<double> start;       // mu over states

  double t(int s, int a, int s2) const {
    return transition[static_cast<std::size_t>((s * n_actions + a) * n_states + s2)];
  }
  void validate() const;  // rows sum to 1 (1e-9), rewards within [0, r_max]
};

/// Time-dependent stochastic policy: probs[t][s][a], t in [0, horizon).
struct PolicyTable {
  int horizon = 1, n_states = 1, n_actions = 1;
  std::vector<double> probs;
  double p(int t, int s, int a) const {
    return probs[static_cast<std::size_t>((t * n_states + s) * n_actions + a)];
  }
  static PolicyTable uniform(int horizon, int n_states, int n_actions);
  void validate() const;
};

/// Time-averaged state-visitation distribution d = (1/H) sum_t d_t plus the
/// per-timestep slices.
struct OccupancyVector {
  std::vector<double> average;                 // [s]
  std::vector<std::vector<double>> per_step;   // [t][s], t = 1..H
};

OccupancyVector visitation_distribution(const TabularMDP& mdp, const PolicyTable& pi,
                                        const std::vector<double>& mu);

/// Sum d over each phi-preimage; phi maps states to abstract ids in
/// [0, n_abstract).
std::vector<double> abstract_visitation(const std::vector<double>& d, const std::vector<int>& phi,
                                        int n_abstract);

/// V^pi per state by backward induction (reward collected at each visited
/// state, including the start).
std::vector<double> policy_value(const TabularMDP& mdp, const PolicyTable& pi);

/// Same quantity through the occupancy identity V(s) = H * sum d(s'; pi,
/// delta_s) R(s'); the two routes must agree to 1e-9.
std::vector<double> policy_value_occupancy(const TabularMDP& mdp, const PolicyTable& pi);

/// Largest |backward-induction - occupancy| value gap, for consistency checks.
double value_route_gap(const TabularMDP& mdp, const PolicyTable& pi);

/// Finite-horizon backward induction; ties broken toward the lowest action id.
PolicyTable optimal_policy(const TabularMDP& mdp);

struct KlResult {
  double value = 0;
  bool infinite = false;
};

/// Exact discrete KL; infinite when p has mass where q = 0.
KlResult kl_discrete(const std::vector<double>& p, const std::vector<double>& q);

/// One Theorem-5.1 check. The proof manipulates delta_s start distributions,
/// so epsilon/eta are computed per start state and the bound must hold for
/// every state; the mu-based reading of the theorem statement is evaluated
/// alongside and reported, not required.
struct BoundCheck {
  double eps = 0, eta = 0;       // at the worst (max-gap) start state
  double alpha = 0;
  double lhs = 0;                // max_s V*(s) - V^pi(s)
  double rhs = 0;                // bound at the worst start state
  bool holds = true;             // delta_s reading, Infinite eps/eta -> trivially true
  bool finite = true;            // all per-state eps/eta finite
  int states_checked = 0;        // start states with finite eps/eta
  int states_vacuous = 0;        // start states where the bound holds trivially
  double eps_mu = 0, eta_mu = 0, rhs_mu = 0;
  bool holds_mu = true;
  bool finite_mu = true;
  double ratio = 0;              // lhs/rhs at the worst state (0 when rhs == 0)
};

BoundCheck check_bound(const TabularMDP& mdp, const std::vector<int>& phi,
                       const std::vector<double>& abstract_reward, const PolicyTable& pi_star,
                       const PolicyTable& pi, const std::vector<double>& d_hat);

/// One sampled verification instance.
struct BoundTrial {
  std::uint64_t seed = 0;
  std::string kind;  // "random" or a handcrafted case name
  TabularMDP mdp;
  std::vector<int> phi;
  int n_abstract = 1;
  std::vector<double> abstract_reward;
  PolicyTable pi;
  std::vector<double> d_hat;
};

BoundTrial random_trial(std::uint64_t seed, int n_states, int n_actions, int horizon);
std::vector<BoundTrial> handcrafted_trials();

struct VerifySummary {
  int trials = 0;
  int violations = 0;
  int infinite_cases = 0;      // trials with at least one vacuous start state
  long states_checked = 0;
  long states_vacuous = 0;
  double max_ratio = 0;        // tightness probe, informational
  double max_value_gap = 0;    // occupancy vs backward induction
  bool value_agreement_ok = true;
};

/// Runs the handcrafted corner cases plus `trials` random instances
/// (6 states, 3 actions, H = 5), one record per trial into `records` when
/// given.
VerifySummary verify_bound_sweep(int trials, std::uint64_t seed, std::ostream* records);

}  // namespace pvn
