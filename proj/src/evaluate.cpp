#include <string>
#include <vector>

#include "sia/environments.hpp"
#include "sia/rng.hpp"

namespace sia {

namespace {

constexpr std::uint64_t kEvalDomain = 0x6576616c;
constexpr std::uint64_t kTrainDomain = 0x747261696e;

}  // namespace

Rolloutd sample_episode(const Environment& env, const Policyd& policy, const Eigen::VectorXd& observation,
                        Rng& rng, std::optional<double> temperature) {
  Rolloutd out;
  for (int t = 0; t < env.horizon(); ++t) {
    const Rolloutd step = sample_rollout(policy, env.step_state(observation, t), 1, rng, temperature);
    out.actions.push_back(step.actions.front());
    out.logp_current.push_back(step.logp_current.front());
    out.logp_base.push_back(step.logp_base.front());
  }
  return out;
}

Evaluation evaluate(const Environment& env, const Scaffold& scaffold, const Policyd& policy, std::uint64_t seed) {
  validate_knobs(scaffold.knobs, env.task_spec().feature_views.size());
  const Knobs& k = scaffold.knobs;
  const auto gen = static_cast<std::uint64_t>(scaffold.generation);

  Evaluation out;
  out.trajectory.generation = scaffold.generation;
  std::vector<double> rewards;
  rewards.reserve(env.eval_instances().size());

  for (const Instance& inst : env.eval_instances()) {
    InstanceTrace trace;
    trace.instance_id = inst.id;
    trace.state = env.observe(inst, k.feature_view);

    std::vector<std::vector<int>> accepted;
    FailureTag last_failure = FailureTag::none;
    int attempts = 0;
    bool out_of_budget = false;
    for (int s = 0; s < k.samples_per_instance && !out_of_budget; ++s) {
      for (int t = 0; t <= k.retry_budget; ++t) {
        if (attempts == env.channel().attempt_budget) {
          out_of_budget = true;
          break;
        }
        ++attempts;
        Rng rng = Rng::stream(seed, {kEvalDomain, gen, inst.id, static_cast<std::uint64_t>(s),
                                     static_cast<std::uint64_t>(t)});
        const Rolloutd r = sample_episode(env, policy, trace.state, rng, k.temperature_override);
        const std::string where = "sample " + std::to_string(s) + " try " + std::to_string(t) + ": ";
        const bool malformed = rng.bernoulli(env.channel().malformed_rate);
        if (!parser_accepts(k.parser, inst.format, malformed)) {
          last_failure = FailureTag::parse_failure;
          trace.tool_events.push_back(where + "parse rejected");
          continue;
        }
        if (rng.bernoulli(env.channel().tool_error_rate)) {
          last_failure = FailureTag::tool_error;
          trace.tool_events.push_back(where + "tool error");
          continue;
        }
        trace.tool_events.push_back(where + "accepted");
        accepted.push_back(r.actions);
        break;
      }
    }

    if (accepted.empty()) {
      trace.failure_tag = out_of_budget ? FailureTag::timeout : last_failure;
      trace.reward = 0.0;
    } else {
      const std::size_t pick = k.reranker_enabled && accepted.size() > 1 ? env.rerank(inst, accepted) : 0;
      trace.actions = accepted[pick];
      trace.extracted_answer = env.render_answer(trace.actions);
      const Verdict v = env.verify(inst, trace.actions);
      trace.reward = v.reward;
      trace.failure_tag = v.tag;
    }
    rewards.push_back(trace.reward);
    out.trajectory.traces.push_back(std::move(trace));
  }

  const double mean = reward_moments(rewards).mean;
  out.metrics = summarize_rewards(scaffold.generation, mean, rewards, classify_failures(out.trajectory));
  return out;
}

std::vector<RolloutGroupd> collect_rollout_groups(const Environment& env, const Scaffold& scaffold,
                                                  const Policyd& policy, std::uint64_t seed, int generation,
                                                  int step, int groups, int group_size) {
  const auto& pool = env.train_instances();
  const auto gen = static_cast<std::uint64_t>(generation);
  const auto st = static_cast<std::uint64_t>(step);
  Rng pick = Rng::stream(seed, {kTrainDomain, gen, st});
  const int horizon = env.horizon();
  std::vector<RolloutGroupd> out;
  out.reserve(static_cast<std::size_t>(groups * horizon));
  for (int g = 0; g < groups; ++g) {
    const Instance& inst = pool[pick.index(pool.size())];
    const Eigen::VectorXd obs = env.observe(inst, scaffold.knobs.feature_view);
    std::vector<RolloutGroupd> per_step(static_cast<std::size_t>(horizon));
    for (int t = 0; t < horizon; ++t) per_step[static_cast<std::size_t>(t)].state = env.step_state(obs, t);
    for (int i = 0; i < group_size; ++i) {
      Rng rng = Rng::stream(seed, {kTrainDomain, gen, st, static_cast<std::uint64_t>(g),
                                   static_cast<std::uint64_t>(i)});
      const Rolloutd episode = sample_episode(env, policy, obs, rng);
      const double reward = env.verify(inst, episode.actions).reward;
      for (int t = 0; t < horizon; ++t) {
        const auto ts = static_cast<std::size_t>(t);
        Rolloutd r;
        r.actions = {episode.actions[ts]};
        r.logp_current = {episode.logp_current[ts]};
        r.logp_base = {episode.logp_base[ts]};
        r.step_rewards = {reward};
        r.reward = reward;
        per_step[ts].rollouts.push_back(std::move(r));
      }
    }
    for (auto& grp : per_step) out.push_back(std::move(grp));
  }
  return out;
}

}  // namespace sia
