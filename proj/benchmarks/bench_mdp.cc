#include <benchmark/benchmark.h>

#include "pvn/mdpbound.hpp"

using namespace pvn;

namespace {

void BM_OccupancySweep(benchmark::State& state) {
  const BoundTrial trial = random_trial(99, 6, 3, 5);
  for (auto _ : state) {
    const auto occ = visitation_distribution(trial.mdp, trial.pi, trial.mdp.start);
    benchmark::DoNotOptimize(occ.average.data());
  }
}
BENCHMARK(BM_OccupancySweep);

void BM_CheckBound(benchmark::State& state) {
  const BoundTrial trial = random_trial(100, 6, 3, 5);
  const PolicyTable pi_star = optimal_policy(trial.mdp);
  for (auto _ : state) {
    const auto check =
        check_bound(trial.mdp, trial.phi, trial.abstract_reward, pi_star, trial.pi, trial.d_hat);
    benchmark::DoNotOptimize(&check);
  }
}
BENCHMARK(BM_CheckBound);

void BM_OptimalPolicy(benchmark::State& state) {
  const BoundTrial trial = random_trial(101, 6, 3, 5);
  for (auto _ : state) {
    const auto pi = optimal_policy(trial.mdp);
    benchmark::DoNotOptimize(pi.probs.data());
  }
}
BENCHMARK(BM_OptimalPolicy);

}  // namespace
