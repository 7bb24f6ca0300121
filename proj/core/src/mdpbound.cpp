#include "pvn/mdpbound.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pvn/records.hpp"

namespace pvn {

namespace {
constexpr double kRowTol = 1e-9;
constexpr double kBoundTol = 1e-9;
}  // namespace

void TabularMDP::validate() const {
  if (static_cast<int>(reward.size()) != n_states) throw std::invalid_argument("mdp: reward size");
  if (static_cast<int>(start.size()) != n_states) throw std::invalid_argument("mdp: start size");
  for (int s = 0; s < n_states; ++s) {
    if (reward[static_cast<std::size_t>(s)] < 0 || reward[static_cast<std::size_t>(s)] > r_max)
      throw std::invalid_argument("mdp: reward outside [0, r_max]");
    for (int a = 0; a < n_actions; ++a) {
      double row = 0;
      for (int s2 = 0; s2 < n_states; ++s2) row += t(s, a, s2);
      if (std::abs(row - 1.0) > kRowTol) throw std::invalid_argument("mdp: transition row does not sum to 1");
    }
  }
  double mu = 0;
  for (double v : start) mu += v;
  if (std::abs(mu - 1.0) > kRowTol) throw std::invalid_argument("mdp: start distribution does not sum to 1");
}

PolicyTable PolicyTable::uniform(int horizon, int n_states, int n_actions) {
  PolicyTable p;
  p.horizon = horizon;
  p.n_states = n_states;
  p.n_actions = n_actions;
  p.probs.assign(static_cast<std::size_t>(horizon) * n_states * n_actions, 1.0 / n_actions);
  return p;
}

void PolicyTable::validate() const {
  for (int t = 0; t < horizon; ++t)
    for (int s = 0; s < n_states; ++s) {
      double row = 0;
      for (int a = 0; a < n_actions; ++a) row += p(t, s, a);
      if (std::abs(row - 1.0) > kRowTol) throw std::invalid_argument("policy: row does not sum to 1");
    }
}

OccupancyVector visitation_distribution(const TabularMDP& mdp, const PolicyTable& pi,
                                        const std::vector<double>& mu) {
  OccupancyVector out;
  std::vector<double> d = mu;  // d_1
  out.per_step.push_back(d);
  for (int t = 1; t < mdp.horizon; ++t) {
    std::vector<double> next(static_cast<std::size_t>(mdp.n_states), 0.0);
    for (int s = 0; s < mdp.n_states; ++s) {
      const double ds = d[static_cast<std::size_t>(s)];
      if (ds == 0) continue;
      for (int a = 0; a < mdp.n_actions; ++a) {
        const double pa = ds * pi.p(t - 1, s, a);
        if (pa == 0) continue;
        for (int s2 = 0; s2 < mdp.n_states; ++s2) next[static_cast<std::size_t>(s2)] += pa * mdp.t(s, a, s2);
      }
    }
    d = std::move(next);
    out.per_step.push_back(d);
  }
  out.average.assign(static_cast<std::size_t>(mdp.n_states), 0.0);
  for (const auto& dt : out.per_step)
    for (int s = 0; s < mdp.n_states; ++s) out.average[static_cast<std::size_t>(s)] += dt[static_cast<std::size_t>(s)];
  for (auto& v : out.average) v /= static_cast<double>(mdp.horizon);
  return out;
}

std::vector<double> abstract_visitation(const std::vector<double>& d, const std::vector<int>& phi,
                                        int n_abstract) {
  if (phi.size() != d.size()) throw std::invalid_argument("abstract_visitation: phi must be total");
  std::vector<double> out(static_cast<std::size_t>(n_abstract), 0.0);
  for (std::size_t s = 0; s < d.size(); ++s) {
    if (phi[s] < 0 || phi[s] >= n_abstract) throw std::invalid_argument("abstract_visitation: phi out of range");
    out[static_cast<std::size_t>(phi[s])] += d[s];
  }
  return out;
}

std::vector<double> policy_value(const TabularMDP& mdp, const PolicyTable& pi) {
  std::vector<double> v(static_cast<std::size_t>(mdp.n_states), 0.0);
  for (int t = mdp.horizon - 1; t >= 0; --t) {
    std::vector<double> next(static_cast<std::size_t>(mdp.n_states), 0.0);
    for (int s = 0; s < mdp.n_states; ++s) {
      double q = 0;
      for (int a = 0; a < mdp.n_actions; ++a) {
        const double pa = pi.p(t, s, a);
        if (pa == 0) continue;
        double exp_v = 0;
        for (int s2 = 0; s2 < mdp.n_states; ++s2) exp_v += mdp.t(s, a, s2) * v[static_cast<std::size_t>(s2)];
        q += pa * exp_v;
      }
      next[static_cast<std::size_t>(s)] = mdp.reward[static_cast<std::size_t>(s)] + q;
    }
    v = std::move(next);
  }
  return v;
}

std::vector<double> policy_value_occupancy(const TabularMDP& mdp, const PolicyTable& pi) {
  std::vector<double> out(static_cast<std::size_t>(mdp.n_states), 0.0);
  for (int s = 0; s < mdp.n_states; ++s) {
    std::vector<double> delta(static_cast<std::size_t>(mdp.n_states), 0.0);
    delta[static_cast<std::size_t>(s)] = 1.0;
    const auto occ = visitation_distribution(mdp, pi, delta);
    double acc = 0;
    for (int s2 = 0; s2 < mdp.n_states; ++s2)
      acc += occ.average[static_cast<std::size_t>(s2)] * mdp.reward[static_cast<std::size_t>(s2)];
    out[static_cast<std::size_t>(s)] = static_cast<double>(mdp.horizon) * acc;
  }
  return out;
}

double value_route_gap(const TabularMDP& mdp, const PolicyTable& pi) {
  const auto a = policy_value(mdp, pi);
  const auto b = policy_value_occupancy(mdp, pi);
  double gap = 0;
  for (std::size_t i = 0; i < a.size(); ++i) gap = std::max(gap, std::abs(a[i] - b[i]));
  return gap;
}

PolicyTable optimal_policy(const TabularMDP& mdp) {
  PolicyTable pi;
  pi.horizon = mdp.horizon;
  pi.n_states = mdp.n_states;
  pi.n_actions = mdp.n_actions;
  pi.probs.assign(static_cast<std::size_t>(mdp.horizon) * mdp.n_states * mdp.n_actions, 0.0);
  std::vector<double> v(static_cast<std::size_t>(mdp.n_states), 0.0);
  for (int t = mdp.horizon - 1; t >= 0; --t) {
    std::vector<double> next(static_cast<std::size_t>(mdp.n_states), 0.0);
    for (int s = 0; s < mdp.n_states; ++s) {
      int best_a = 0;
      double best_q = -1;
      for (int a = 0; a < mdp.n_actions; ++a) {
        double q = 0;
        for (int s2 = 0; s2 < mdp.n_states; ++s2) q += mdp.t(s, a, s2) * v[static_cast<std::size_t>(s2)];
        if (q > best_q + 1e-15) {  // strict improvement keeps the lowest id on ties
          best_q = q;
          best_a = a;
        }
      }
      next[static_cast<std::size_t>(s)] = mdp.reward[static_cast<std::size_t>(s)] + best_q;
      pi.probs[static_cast<std::size_t>((t * mdp.n_states + s) * mdp.n_actions + best_a)] = 1.0;
    }
    v = std::move(next);
  }
  return pi;
}

KlResult kl_discrete(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_discrete: size mismatch");
  KlResult out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0) continue;
    if (q[i] <= 0) {
      out.infinite = true;
      return out;
    }
    out.value += p[i] * std::log(p[i] / q[i]);
  }
  out.value = std::max(0.0, out.value);  // guard tiny negative round-off
  return out;
}

BoundCheck check_bound(const TabularMDP& mdp, const std::vector<int>& phi,
                       const std::vector<double>& abstract_reward, const PolicyTable& pi_star,
                       const PolicyTable& pi, const std::vector<double>& d_hat) {
  const int n_abstract = static_cast<int>(abstract_reward.size());
  BoundCheck out;
  // alpha = max_s |R(s) - R~(phi(s))|
  for (int s = 0; s < mdp.n_states; ++s)
    out.alpha = std::max(out.alpha, std::abs(mdp.reward[static_cast<std::size_t>(s)] -
                                             abstract_reward[static_cast<std::size_t>(phi[static_cast<std::size_t>(s)])]));

  const auto v_star = policy_value(mdp, pi_star);
  const auto v_pi = policy_value(mdp, pi);
  const double scale = static_cast<double>(mdp.horizon) * (mdp.r_max + out.alpha);

  double worst_gap = -1;
  for (int s = 0; s < mdp.n_states; ++s) {
    std::vector<double> delta(static_cast<std::size_t>(mdp.n_states), 0.0);
    delta[static_cast<std::size_t>(s)] = 1.0;
    const auto da_star = abstract_visitation(visitation_distribution(mdp, pi_star, delta).average, phi, n_abstract);
    const auto da_pi = abstract_visitation(visitation_distribution(mdp, pi, delta).average, phi, n_abstract);
    const KlResult eps = kl_discrete(da_star, d_hat);
    const KlResult eta = kl_discrete(d_hat, da_pi);
    const double gap = v_star[static_cast<std::size_t>(s)] - v_pi[static_cast<std::size_t>(s)];
    out.lhs = std::max(out.lhs, gap);
    if (eps.infinite || eta.infinite) {
      out.finite = false;  // the bound is vacuous for this start state
      ++out.states_vacuous;
      continue;
    }
    ++out.states_checked;
    const double rhs = scale * (std::sqrt(2.0 * eps.value) + std::sqrt(2.0 * eta.value));
    if (gap > rhs + kBoundTol) out.holds = false;
    if (gap > worst_gap) {
      worst_gap = gap;
      out.eps = eps.value;
      out.eta = eta.value;
      out.rhs = rhs;
      out.ratio = rhs > 0 ? gap / rhs : 0.0;
    }
  }

  // mu-based reading of the theorem statement (reported, not required)
  const auto da_star_mu = abstract_visitation(visitation_distribution(mdp, pi_star, mdp.start).average, phi, n_abstract);
  const auto da_pi_mu = abstract_visitation(visitation_distribution(mdp, pi, mdp.start).average, phi, n_abstract);
  const KlResult eps_mu = kl_discrete(da_star_mu, d_hat);
  const KlResult eta_mu = kl_discrete(d_hat, da_pi_mu);
  if (eps_mu.infinite || eta_mu.infinite) {
    out.finite_mu = false;
  } else {
    out.eps_mu = eps_mu.value;
    out.eta_mu = eta_mu.value;
    out.rhs_mu = scale * (std::sqrt(2.0 * eps_mu.value) + std::sqrt(2.0 * eta_mu.value));
    out.holds_mu = out.lhs <= out.rhs_mu + kBoundTol;
  }
  return out;
}

// ---- trial construction ----

namespace {

std::vector<double> random_distribution(Rng& rng, int n, double floor_mass = 0.0) {
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  double total = 0;
  for (auto& v : out) {
    v = floor_mass + rng.uniform();
    total += v;
  }
  for (auto& v : out) v /= total;
  return out;
}

PolicyTable random_policy(Rng& rng, int horizon, int n_states, int n_actions) {
  PolicyTable pi;
  pi.horizon = horizon;
  pi.n_states = n_states;
  pi.n_actions = n_actions;
  pi.probs.reserve(static_cast<std::size_t>(horizon) * n_states * n_actions);
  for (int i = 0; i < horizon * n_states; ++i) {
    const auto row = random_distribution(rng, n_actions);
    pi.probs.insert(pi.probs.end(), row.begin(), row.end());
  }
  return pi;
}

std::vector<double> mean_abstract_reward(const TabularMDP& mdp, const std::vector<int>& phi,
                                         int n_abstract) {
  // R~ = mean of R over each preimage; empty preimages get 0
  std::vector<double> sum(static_cast<std::size_t>(n_abstract), 0.0);
  std::vector<int> count(static_cast<std::size_t>(n_abstract), 0);
  for (int s = 0; s < mdp.n_states; ++s) {
    sum[static_cast<std::size_t>(phi[static_cast<std::size_t>(s)])] += mdp.reward[static_cast<std::size_t>(s)];
    count[static_cast<std::size_t>(phi[static_cast<std::size_t>(s)])] += 1;
  }
  for (int i = 0; i < n_abstract; ++i)
    if (count[static_cast<std::size_t>(i)] > 0) sum[static_cast<std::size_t>(i)] /= count[static_cast<std::size_t>(i)];
  return sum;
}

}  // namespace

BoundTrial random_trial(std::uint64_t seed, int n_states, int n_actions, int horizon) {
  // The bound requires the abstraction to carry the reward signal: the true
  // reward must be constant on each phi-class (the paper's "variables ...
  // relevant to task completion"). When concrete rewards vary inside a class
  // the stated inequality admits counterexamples -- see the
  // "reward-oblivious abstraction" test for a demonstration.
  Rng rng(seed);
  BoundTrial trial;
  trial.seed = seed;
  trial.kind = "random";
  TabularMDP& mdp = trial.mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.horizon = horizon;
  mdp.r_max = 1.0;

  trial.n_abstract = static_cast<int>(rng.uniform_int(1, n_states));
  trial.phi.resize(static_cast<std::size_t>(n_states));
  // surjective phi: every abstract state has a preimage, so the abstract
  // visitations have full support on dense MDPs and the checks stay
  // non-vacuous
  for (int i = 0; i < trial.n_abstract; ++i) trial.phi[static_cast<std::size_t>(i)] = i;
  for (int i = trial.n_abstract; i < n_states; ++i)
    trial.phi[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_int(0, trial.n_abstract - 1));
  rng.shuffle(trial.phi);

  std::vector<double> class_reward(static_cast<std::size_t>(trial.n_abstract));
  for (auto& r : class_reward) r = rng.uniform();
  mdp.reward.resize(static_cast<std::size_t>(n_states));
  for (int s = 0; s < n_states; ++s)
    mdp.reward[static_cast<std::size_t>(s)] = class_reward[static_cast<std::size_t>(trial.phi[static_cast<std::size_t>(s)])];

  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) {
      const auto row = random_distribution(rng, n_states);
      mdp.transition.insert(mdp.transition.end(), row.begin(), row.end());
    }
  mdp.start = random_distribution(rng, n_states);

  trial.abstract_reward = mean_abstract_reward(mdp, trial.phi, trial.n_abstract);
  if (rng.bernoulli(0.5)) {
    // adversarial variant: abstract rewards perturbed, alpha grows accordingly
    for (auto& r : trial.abstract_reward) r = std::max(0.0, r + rng.uniform(-0.3, 0.3));
  }

  trial.pi = random_policy(rng, horizon, n_states, n_actions);

  // predicted abstract distribution: perturbed oracle visitation with full support
  const auto pi_star = optimal_policy(mdp);
  auto d_star = abstract_visitation(visitation_distribution(mdp, pi_star, mdp.start).average, trial.phi,
                                    trial.n_abstract);
  double total = 0;
  for (auto& v : d_star) {
    v = v * rng.uniform(0.5, 1.5) + 1e-3;
    total += v;
  }
  for (auto& v : d_star) v /= total;
  trial.d_hat = d_star;
  return trial;
}

std::vector<BoundTrial> handcrafted_trials() {
  std::vector<BoundTrial> trials;
  Rng rng(0xc0ffee);

  auto deterministic_chain = [](int n, int horizon, bool absorbing_last) {
    TabularMDP mdp;
    mdp.n_states = n;
    mdp.n_actions = 2;
    mdp.horizon = horizon;
    mdp.r_max = 1.0;
    mdp.reward.assign(static_cast<std::size_t>(n), 0.0);
    mdp.reward.back() = 1.0;
    mdp.transition.assign(static_cast<std::size_t>(n * 2 * n), 0.0);
    auto set_t = [&](int s, int a, int s2) {
      mdp.transition[static_cast<std::size_t>((s * 2 + a) * n + s2)] = 1.0;
    };
    for (int s = 0; s < n; ++s) {
      const int fwd = std::min(s + 1, n - 1);
      set_t(s, 0, fwd);                      // advance
      set_t(s, 1, absorbing_last ? s : 0);   // stay / reset
    }
    mdp.start.assign(static_cast<std::size_t>(n), 0.0);
    mdp.start[0] = 1.0;
    return mdp;
  };

  int counter = 0;
  while (static_cast<int>(trials.size()) < 100) {
    const int variant = counter++ % 5;
    BoundTrial trial;
    trial.seed = 0xabc000 + static_cast<std::uint64_t>(counter);
    switch (variant) {
      case 0: {  // deterministic chain, identity abstraction, pi = pi*
        trial.kind = "chain_identity";
        trial.mdp = deterministic_chain(4 + counter % 3, 5, false);
        trial.n_abstract = trial.mdp.n_states;
        trial.phi.resize(static_cast<std::size_t>(trial.mdp.n_states));
        for (int s = 0; s < trial.mdp.n_states; ++s) trial.phi[static_cast<std::size_t>(s)] = s;
        trial.abstract_reward = trial.mdp.reward;
        trial.pi = optimal_policy(trial.mdp);
        trial.d_hat = abstract_visitation(
            visitation_distribution(trial.mdp, trial.pi, trial.mdp.start).average, trial.phi,
            trial.n_abstract);
        break;
      }
      case 1: {  // absorbing terminal state, random policy
        trial.kind = "absorbing";
        trial.mdp = deterministic_chain(5, 6, true);
        trial.n_abstract = 2;
        trial.phi.assign(static_cast<std::size_t>(trial.mdp.n_states), 0);
        trial.phi.back() = 1;
        trial.abstract_reward = mean_abstract_reward(trial.mdp, trial.phi, 2);
        trial.pi = random_policy(rng, trial.mdp.horizon, trial.mdp.n_states, trial.mdp.n_actions);
        trial.d_hat = random_distribution(rng, 2, 1e-3);
        break;
      }
      case 2: {  // alpha > 0: perturbed abstract rewards over class-constant R
        trial.kind = "alpha_positive";
        trial.mdp = deterministic_chain(6, 5, false);
        trial.phi = {0, 0, 1, 1, 2, 2};
        trial.n_abstract = 3;
        trial.mdp.reward = {0.0, 0.0, 0.4, 0.4, 1.0, 1.0};  // constant per phi-class
        trial.abstract_reward = mean_abstract_reward(trial.mdp, trial.phi, 3);
        for (auto& r : trial.abstract_reward) r = std::max(0.0, r + rng.uniform(-0.4, 0.4));
        trial.pi = random_policy(rng, trial.mdp.horizon, trial.mdp.n_states, trial.mdp.n_actions);
        trial.d_hat = random_distribution(rng, 3, 1e-3);
        break;
      }
      case 3: {  // all states collapse to one abstract state (uniform reward)
        trial.kind = "collapse";
        trial = random_trial(trial.seed, 6, 3, 5);
        trial.kind = "collapse";
        trial.n_abstract = 1;
        trial.phi.assign(static_cast<std::size_t>(trial.mdp.n_states), 0);
        const double r0 = trial.mdp.reward[0];
        trial.mdp.reward.assign(static_cast<std::size_t>(trial.mdp.n_states), r0);
        trial.abstract_reward = {std::max(0.0, r0 + rng.uniform(-0.3, 0.3))};
        trial.d_hat = {1.0};
        break;
      }
      default: {  // H = 1 edge case
        trial.kind = "horizon_one";
        trial = random_trial(trial.seed, 4, 2, 1);
        trial.kind = "horizon_one";
        break;
      }
    }
    trials.push_back(std::move(trial));
  }
  return trials;
}

VerifySummary verify_bound_sweep(int trials, std::uint64_t seed, std::ostream* records) {
  VerifySummary summary;
  auto run_one = [&](const BoundTrial& trial) {
    trial.mdp.validate();
    const PolicyTable pi_star = optimal_policy(trial.mdp);
    const BoundCheck check =
        check_bound(trial.mdp, trial.phi, trial.abstract_reward, pi_star, trial.pi, trial.d_hat);
    const double gap = std::max(value_route_gap(trial.mdp, trial.pi), value_route_gap(trial.mdp, pi_star));
    summary.max_value_gap = std::max(summary.max_value_gap, gap);
    if (gap > 1e-9) summary.value_agreement_ok = false;
    ++summary.trials;
    summary.states_checked += check.states_checked;
    summary.states_vacuous += check.states_vacuous;
    if (!check.finite) ++summary.infinite_cases;
    if (!check.holds) ++summary.violations;
    summary.max_ratio = std::max(summary.max_ratio, check.ratio);
    if (records) {
      Record rec("trial");
      rec.set("seed", static_cast<std::int64_t>(trial.seed));
      rec.set("kind", trial.kind);
      rec.set("eps", check.eps);
      rec.set("eta", check.eta);
      rec.set("alpha", check.alpha);
      rec.set("lhs", check.lhs);
      rec.set("rhs", check.rhs);
      rec.set("holds", static_cast<std::int64_t>(check.holds ? 1 : 0));
      rec.set("finite", static_cast<std::int64_t>(check.finite ? 1 : 0));
      rec.set("eps_mu", check.eps_mu);
      rec.set("eta_mu", check.eta_mu);
      rec.set("rhs_mu", check.rhs_mu);
      rec.set("holds_mu", static_cast<std::int64_t>(check.holds_mu ? 1 : 0));
      *records << rec.format() << "\n";
    }
  };

  for (const auto& trial : handcrafted_trials()) run_one(trial);
  for (int i = 0; i < trials; ++i) run_one(random_trial(seed + static_cast<std::uint64_t>(i), 6, 3, 5));

  if (records) {
    Record rec("summary");
    rec.set("trials", static_cast<std::int64_t>(summary.trials));
    rec.set("violations", static_cast<std::int64_t>(summary.violations));
    rec.set("infinite", static_cast<std::int64_t>(summary.infinite_cases));
    rec.set("states_checked", static_cast<std::int64_t>(summary.states_checked));
    rec.set("states_vacuous", static_cast<std::int64_t>(summary.states_vacuous));
    rec.set("max_ratio", summary.max_ratio);
    rec.set("max_value_gap", summary.max_value_gap);
    *records << rec.format() << "\n";
  }
  return summary;
}

}  // namespace pvn
