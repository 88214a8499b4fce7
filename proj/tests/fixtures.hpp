#pragma once

// Seeded rollout batches shared by the unit and acceptance suites.

#include <functional>
#include <numeric>
#include <vector>

#include "oracles.hpp"
#include "sia/rl_updates.hpp"

namespace fixture {

using namespace sia;

/// Groups whose recorded log-probabilities come from a perturbed copy of the
/// policy, so PPO ratios land on both sides of the clip range.
inline std::vector<RolloutGroupd> random_groups(const Policyd& policy, std::uint64_t seed, int groups = 3, int size = 4,
                                                int horizon = 2) {
  Rng rng(seed);
  std::vector<RolloutGroupd> out;
  for (int g = 0; g < groups; ++g) {
    RolloutGroupd grp;
    grp.state = oracle::random_state(rng, static_cast<int>(policy.feature_dim()));
    for (int i = 0; i < size; ++i) {
      Rolloutd r = sample_rollout(policy, grp.state, horizon, rng);
      for (double& lp : r.logp_current) lp += 0.6 * (rng.uniform() - 0.5);
      r.step_rewards.resize(static_cast<std::size_t>(horizon));
      for (double& x : r.step_rewards) x = rng.normal();
      r.reward = std::accumulate(r.step_rewards.begin(), r.step_rewards.end(), 0.0);
      grp.rollouts.push_back(r);
    }
    out.push_back(grp);
  }
  return out;
}

inline StepAdvantages<double> random_advantages(const std::vector<RolloutGroupd>& groups, std::uint64_t seed) {
  Rng rng(seed);
  StepAdvantages<double> adv(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (const auto& r : groups[g].rollouts) {
      std::vector<double> a(r.horizon());
      for (double& x : a) x = rng.normal();
      adv[g].push_back(a);
    }
  return adv;
}

inline std::vector<RolloutGroupd> bandit_groups(const Policyd& p, Rng& rng, int groups, int size,
                                         const std::function<double(int)>& reward) {
  std::vector<RolloutGroupd> out;
  for (int g = 0; g < groups; ++g) {
    RolloutGroupd grp;
    grp.state = Eigen::VectorXd::Ones(1);
    for (int i = 0; i < size; ++i) {
      Rolloutd r = sample_rollout(p, grp.state, 1, rng);
      r.reward = reward(r.actions[0]);
      r.step_rewards = {r.reward};
      grp.rollouts.push_back(r);
    }
    out.push_back(grp);
  }
  return out;
}


}  // namespace fixture
