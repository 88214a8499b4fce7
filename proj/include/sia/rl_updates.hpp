#pragma once

// Weight-update objectives: advantage estimators, surrogate losses with
// exact analytic gradients, and the six update routines built on them.
//
// Conventions: every `*_loss` function returns a value to be minimised and
// its gradient with respect to the adapter (and value head where relevant).
// Updates apply one plain gradient step per call through
// `apply_gradient_step`, so the base weights are never written.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "sia/core.hpp"
#include "sia/policy.hpp"

namespace sia {

// ---------------------------------------------------------------------------
// Advantage and return estimators

/// Generalized advantage estimation. `values` carries one entry per step plus
/// the terminal bootstrap (0 for episodic ends).
template <typename Scalar>
std::vector<Scalar> compute_gae(const std::vector<Scalar>& rewards, const std::vector<Scalar>& values,
                                Scalar gamma, Scalar lambda) {
  if (values.size() != rewards.size() + 1) {
    throw std::invalid_argument("compute_gae: values must have len(rewards) + 1 entries");
  }
  std::vector<Scalar> adv(rewards.size());
  Scalar running = 0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    const Scalar delta = rewards[t] + gamma * values[t + 1] - values[t];
    running = delta + gamma * lambda * running;
    adv[t] = running;
  }
  return adv;
}

/// Discounted suffix sums R_t = sum_{t' >= t} gamma^(t'-t) r_t'.
template <typename Scalar>
std::vector<Scalar> reinforce_returns(const std::vector<Scalar>& rewards, Scalar gamma) {
  std::vector<Scalar> out(rewards.size());
  Scalar running = 0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    running = rewards[t] + gamma * running;
    out[t] = running;
  }
  return out;
}

inline constexpr double kGroupStdGuard = 1e-8;

/// Group-relative advantages (r_i - mean) / std with the population std.
/// Degenerate groups (std <= 1e-8) map to all zeros.
template <typename Scalar>
std::vector<Scalar> grpo_advantages(const std::vector<Scalar>& rewards) {
  if (rewards.size() < 2) throw std::invalid_argument("grpo_advantages: group size must be >= 2");
  const Scalar n = static_cast<Scalar>(rewards.size());
  const Scalar mean = std::accumulate(rewards.begin(), rewards.end(), Scalar(0)) / n;
  Scalar var = 0;
  for (Scalar r : rewards) var += (r - mean) * (r - mean);
  const Scalar sd = std::sqrt(var / n);
  std::vector<Scalar> out(rewards.size(), Scalar(0));
  if (sd <= Scalar(kGroupStdGuard)) return out;
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / sd;
  return out;
}

/// Softmax reweighting w_i proportional to exp(r_i / beta), computed after
/// subtracting the maximum reward.
template <typename Scalar>
std::vector<Scalar> entropic_weights(const std::vector<Scalar>& rewards, Scalar beta) {
  if (!(beta > Scalar(0))) throw std::invalid_argument("entropic_weights: beta must be > 0");
  if (rewards.empty()) return {};
  const Scalar top = *std::max_element(rewards.begin(), rewards.end());
  std::vector<Scalar> w(rewards.size());
  Scalar total = 0;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    w[i] = std::exp((rewards[i] - top) / beta);
    total += w[i];
  }
  for (Scalar& x : w) x /= total;
  return w;
}

/// ESS = 1 / sum w_i^2 for normalised weights.
template <typename Scalar>
Scalar effective_sample_size(const std::vector<Scalar>& weights) {
  Scalar s = 0;
  for (Scalar w : weights) s += w * w;
  return Scalar(1) / s;
}

inline constexpr double kBetaBracketLo = 1e-3;
inline constexpr double kBetaBracketHi = 1e6;

/// Smallest beta in [1e-3, 1e6] whose entropic weights keep ESS >= floor,
/// found by bisection on log(beta). Equal rewards return `default_beta`.
template <typename Scalar>
Scalar adapt_beta(const std::vector<Scalar>& rewards, Scalar ess_floor, Scalar default_beta) {
  const Scalar g = static_cast<Scalar>(rewards.size());
  if (!(ess_floor > Scalar(1))) throw std::invalid_argument("adapt_beta: ess_floor must be > 1");
  if (ess_floor > g) throw std::invalid_argument("adapt_beta: ess_floor exceeds group size");
  const auto [lo_it, hi_it] = std::minmax_element(rewards.begin(), rewards.end());
  if (*lo_it == *hi_it) return default_beta;

  auto ess = [&](Scalar beta) { return effective_sample_size(entropic_weights(rewards, beta)); };
  Scalar lo = std::log(Scalar(kBetaBracketLo));
  Scalar hi = std::log(Scalar(kBetaBracketHi));
  if (ess(std::exp(lo)) >= ess_floor) return std::exp(lo);
  // With floor == G the floor is only reached in the limit; the top of the
  // bracket is then the closest admissible point.
  if (ess(std::exp(hi)) < ess_floor) return std::exp(hi);
  for (int it = 0; it < 200 && hi - lo > Scalar(1e-12); ++it) {
    const Scalar mid = (lo + hi) / 2;
    if (ess(std::exp(mid)) >= ess_floor) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return std::exp(hi);
}

/// Indices of the k highest rewards; ties go to the lower index.
template <typename Scalar>
std::vector<std::size_t> select_top_k(const std::vector<Scalar>& rewards, std::size_t k) {
  if (k > rewards.size()) throw std::invalid_argument("select_top_k: k exceeds list length");
  std::vector<std::size_t> idx(rewards.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return rewards[a] > rewards[b]; });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// ---------------------------------------------------------------------------
// Surrogates

template <typename Scalar>
struct ClipObjective {
  Scalar value = 0;
  std::vector<Scalar> d_ratio;  ///< derivative of `value` w.r.t. each ratio
};

/// mean_t min(r_t A_t, clip(r_t, 1-eps, 1+eps) A_t) and its derivative.
template <typename Scalar>
ClipObjective<Scalar> ppo_clip_objective(const std::vector<Scalar>& ratios,
                                         const std::vector<Scalar>& advantages, Scalar clip_epsilon) {
  if (ratios.size() != advantages.size()) {
    throw std::invalid_argument("ppo_clip_objective: ratios and advantages differ in length");
  }
  ClipObjective<Scalar> out;
  out.d_ratio.assign(ratios.size(), Scalar(0));
  if (ratios.empty()) return out;
  const Scalar n = static_cast<Scalar>(ratios.size());
  for (std::size_t t = 0; t < ratios.size(); ++t) {
    const Scalar r = ratios[t];
    const Scalar a = advantages[t];
    const Scalar clipped_ratio = std::clamp(r, Scalar(1) - clip_epsilon, Scalar(1) + clip_epsilon);
    const Scalar unclipped = r * a;
    const Scalar clipped = clipped_ratio * a;
    if (unclipped <= clipped) {
      out.value += unclipped;
      out.d_ratio[t] = a / n;
    } else {
      out.value += clipped;
      out.d_ratio[t] = clipped_ratio == r ? a / n : Scalar(0);
    }
  }
  out.value /= n;
  return out;
}

template <typename Scalar>
struct LossAndGradient {
  Scalar loss = 0;
  AdapterGradient<Scalar> grad;
};

/// Per-step advantages indexed [group][rollout][step].
template <typename Scalar>
using StepAdvantages = std::vector<std::vector<std::vector<Scalar>>>;

namespace detail {

/// dW += state * (sum_t coef_t (e_{a_t} - probs))^T / T
template <typename Scalar>
void accumulate_score(const Policy<Scalar>& policy, const VectorX<Scalar>& state,
                      const VectorX<Scalar>& probs, std::span<const int> actions,
                      std::span<const Scalar> coefs, MatrixX<Scalar>& d_weights) {
  Scalar total = 0;
  for (Scalar c : coefs) total += c;
  VectorX<Scalar> g = -total * probs;
  for (std::size_t t = 0; t < actions.size(); ++t) g(actions[t]) += coefs[t];
  d_weights.noalias() += state * (g.transpose() / policy.temperature());
}

template <typename Scalar>
std::vector<Scalar> step_rewards_of(const Rollout<Scalar>& r) {
  if (!r.step_rewards.empty()) return r.step_rewards;
  std::vector<Scalar> out(r.horizon(), Scalar(0));
  if (!out.empty()) out.back() = r.reward;
  return out;
}

template <typename Scalar>
Scalar log_sigmoid(Scalar x) {
  return x >= Scalar(0) ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

}  // namespace detail

/// Negated clipped surrogate over all steps of all rollouts. Ratios are taken
/// against the log-probabilities recorded at sampling time.
template <typename Scalar>
LossAndGradient<Scalar> ppo_clip_loss(std::span<const RolloutGroup<Scalar>> groups,
                                      const StepAdvantages<Scalar>& advantages,
                                      const Policy<Scalar>& policy, Scalar clip_epsilon) {
  if (advantages.size() != groups.size()) {
    throw std::invalid_argument("ppo_clip_loss: advantages do not match groups");
  }
  std::vector<Scalar> ratios;
  std::vector<Scalar> flat_adv;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const VectorX<Scalar> lp = log_softmax(policy.logits(groups[g].state));
    if (advantages[g].size() != groups[g].rollouts.size()) {
      throw std::invalid_argument("ppo_clip_loss: advantages do not match rollouts");
    }
    for (std::size_t i = 0; i < groups[g].rollouts.size(); ++i) {
      const auto& r = groups[g].rollouts[i];
      if (advantages[g][i].size() != r.horizon()) {
        throw std::invalid_argument("ppo_clip_loss: advantages do not match horizon");
      }
      for (std::size_t t = 0; t < r.horizon(); ++t) {
        ratios.push_back(std::exp(lp(r.actions[t]) - r.logp_current[t]));
        flat_adv.push_back(advantages[g][i][t]);
      }
    }
  }
  const ClipObjective<Scalar> obj = ppo_clip_objective(ratios, flat_adv, clip_epsilon);

  MatrixX<Scalar> dW = MatrixX<Scalar>::Zero(policy.feature_dim(), policy.action_count());
  std::size_t k = 0;
  for (const auto& group : groups) {
    const VectorX<Scalar> probs = action_distribution(policy, group.state);
    for (const auto& r : group.rollouts) {
      std::vector<Scalar> coefs(r.horizon());
      for (std::size_t t = 0; t < r.horizon(); ++t, ++k) {
        // d loss / d log pi = -(d obj / d ratio) * ratio
        coefs[t] = -obj.d_ratio[k] * ratios[k];
      }
      detail::accumulate_score<Scalar>(policy, group.state, probs, r.actions, coefs, dW);
    }
  }
  return {-obj.value, chain_to_adapter(policy, dW)};
}

/// coef * mean over steps of (V(s) - R_t)^2; gradient on the value head only.
template <typename Scalar>
LossAndGradient<Scalar> value_loss(std::span<const RolloutGroup<Scalar>> groups,
                                   const StepAdvantages<Scalar>& returns, const Policy<Scalar>& policy,
                                   Scalar coef) {
  LossAndGradient<Scalar> out{Scalar(0), zero_gradient(policy)};
  std::size_t steps = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const Scalar v = policy.value(groups[g].state);
    for (const auto& per_rollout : returns[g]) {
      for (Scalar ret : per_rollout) {
        out.loss += (v - ret) * (v - ret);
        out.grad.value += Scalar(2) * (v - ret) * groups[g].state;
        ++steps;
      }
    }
  }
  if (steps == 0) return out;
  const Scalar scale = coef / static_cast<Scalar>(steps);
  out.loss *= scale;
  out.grad.value *= scale;
  return out;
}

/// -mean_i sum_t R_t log pi(a_t|s) + alpha * mean_s KL(pi || pi_0).
template <typename Scalar>
LossAndGradient<Scalar> reinforce_kl_loss(std::span<const RolloutGroup<Scalar>> groups,
                                          const Policy<Scalar>& policy, Scalar gamma, Scalar kl_alpha) {
  MatrixX<Scalar> dW = MatrixX<Scalar>::Zero(policy.feature_dim(), policy.action_count());
  Scalar pg = 0;
  Scalar kl = 0;
  std::size_t n_rollouts = 0;
  for (const auto& group : groups) n_rollouts += group.rollouts.size();
  if (n_rollouts == 0 || groups.empty()) return {Scalar(0), zero_gradient(policy)};
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n_rollouts);
  const Scalar inv_s = Scalar(1) / static_cast<Scalar>(groups.size());

  for (const auto& group : groups) {
    const VectorX<Scalar> lp = log_softmax(policy.logits(group.state));
    const VectorX<Scalar> lq = log_softmax(policy.base_logits(group.state));
    const VectorX<Scalar> probs = lp.array().exp().matrix();
    for (const auto& r : group.rollouts) {
      const std::vector<Scalar> ret = reinforce_returns(detail::step_rewards_of(r), gamma);
      std::vector<Scalar> coefs(r.horizon());
      for (std::size_t t = 0; t < r.horizon(); ++t) {
        pg -= ret[t] * lp(r.actions[t]) * inv_n;
        coefs[t] = -ret[t] * inv_n;
      }
      detail::accumulate_score<Scalar>(policy, group.state, probs, r.actions, coefs, dW);
    }
    const Scalar kl_s = (probs.array() * (lp - lq).array()).sum();
    kl += kl_s * inv_s;
    // dKL/dz_j = p_j (log p_j - log q_j - KL)
    const VectorX<Scalar> dz = (probs.array() * ((lp - lq).array() - kl_s)).matrix();
    dW.noalias() += (kl_alpha * inv_s / policy.temperature()) * group.state * dz.transpose();
  }
  return {pg + kl_alpha * kl, chain_to_adapter(policy, dW)};
}

/// A cloned action sequence and the state it was produced from.
template <typename Scalar>
struct Demonstration {
  VectorX<Scalar> state;
  std::vector<int> actions;
};

/// Mean over demonstrations of the sequence negative log-likelihood.
template <typename Scalar>
LossAndGradient<Scalar> bc_loss(std::span<const Demonstration<Scalar>> demos, const Policy<Scalar>& policy) {
  if (demos.empty()) throw std::invalid_argument("bc_loss: selection must be non-empty");
  MatrixX<Scalar> dW = MatrixX<Scalar>::Zero(policy.feature_dim(), policy.action_count());
  Scalar loss = 0;
  const Scalar inv_m = Scalar(1) / static_cast<Scalar>(demos.size());
  for (const auto& d : demos) {
    const VectorX<Scalar> lp = log_softmax(policy.logits(d.state));
    const VectorX<Scalar> probs = lp.array().exp().matrix();
    std::vector<Scalar> coefs(d.actions.size(), -inv_m);
    for (int a : d.actions) loss -= lp(a) * inv_m;
    detail::accumulate_score<Scalar>(policy, d.state, probs, d.actions, coefs, dW);
  }
  return {loss, chain_to_adapter(policy, dW)};
}

template <typename Scalar>
struct PreferencePair {
  VectorX<Scalar> state;  ///< shared by winner and loser
  std::vector<int> winner;
  std::vector<int> loser;
};

/// -log sigmoid(beta * (Delta+ - Delta-)), Delta = sum_t log pi/pi_0 over a
/// whole rollout. Averaged over pairs.
template <typename Scalar>
LossAndGradient<Scalar> dpo_loss(std::span<const PreferencePair<Scalar>> pairs, const Policy<Scalar>& policy,
                                 Scalar beta) {
  if (pairs.empty()) throw std::invalid_argument("dpo_loss: no preference pairs");
  MatrixX<Scalar> dW = MatrixX<Scalar>::Zero(policy.feature_dim(), policy.action_count());
  Scalar loss = 0;
  const Scalar inv_p = Scalar(1) / static_cast<Scalar>(pairs.size());
  for (const auto& pair : pairs) {
    const VectorX<Scalar> lp = log_softmax(policy.logits(pair.state));
    const VectorX<Scalar> lq = log_softmax(policy.base_logits(pair.state));
    const VectorX<Scalar> probs = lp.array().exp().matrix();
    Scalar delta_w = 0;
    Scalar delta_l = 0;
    for (int a : pair.winner) delta_w += lp(a) - lq(a);
    for (int a : pair.loser) delta_l += lp(a) - lq(a);
    const Scalar margin = beta * (delta_w - delta_l);
    loss -= detail::log_sigmoid(margin) * inv_p;
    const Scalar dm = -detail::sigmoid(-margin) * beta * inv_p;  // d loss / d Delta+
    std::vector<Scalar> cw(pair.winner.size(), dm);
    std::vector<Scalar> cl(pair.loser.size(), -dm);
    detail::accumulate_score<Scalar>(policy, pair.state, probs, pair.winner, cw, dW);
    detail::accumulate_score<Scalar>(policy, pair.state, probs, pair.loser, cl, dW);
  }
  return {loss, chain_to_adapter(policy, dW)};
}

template <typename Scalar>
LossAndGradient<Scalar> dpo_loss(const PreferencePair<Scalar>& pair, const Policy<Scalar>& policy, Scalar beta) {
  return dpo_loss(std::span<const PreferencePair<Scalar>>(&pair, 1), policy, beta);
}

// ---------------------------------------------------------------------------
// Updates

struct UpdateReport {
  Algorithm algorithm = Algorithm::grpo;
  double loss = 0.0;
  double grad_norm = 0.0;
  double kl_to_base = 0.0;
  double mean_reward = 0.0;
  std::size_t rollouts = 0;
  double beta = 0.0;       ///< entropic only: mean adapted temperature
  double ess = 0.0;        ///< entropic only: mean effective sample size
  bool skipped = false;    ///< no usable signal in the batch
};

template <typename Scalar>
struct UpdateResult {
  Policy<Scalar> policy;
  UpdateReport report;
};

namespace detail {

template <typename Scalar>
std::vector<VectorX<Scalar>> states_of(std::span<const RolloutGroup<Scalar>> groups) {
  std::vector<VectorX<Scalar>> s;
  s.reserve(groups.size());
  for (const auto& g : groups) s.push_back(g.state);
  return s;
}

template <typename Scalar>
UpdateResult<Scalar> finish(Algorithm algorithm, std::span<const RolloutGroup<Scalar>> groups,
                            const Policy<Scalar>& policy, const LossAndGradient<Scalar>& lg,
                            const AlgorithmConfig& config) {
  const Scalar learning_rate = Scalar(config.learning_rate);
  const Scalar max_grad_norm = Scalar(config.max_grad_norm);
  // Global-norm clipping is stateless, so the step stays plain gradient descent.
  AdapterGradient<Scalar> grad = lg.grad;
  const Scalar norm = grad.norm();
  if (max_grad_norm > Scalar(0) && norm > max_grad_norm) grad *= max_grad_norm / norm;
  UpdateResult<Scalar> out{apply_gradient_step(policy, grad, learning_rate), {}};
  out.report.algorithm = algorithm;
  out.report.loss = static_cast<double>(lg.loss);
  out.report.grad_norm = static_cast<double>(norm);
  const auto states = states_of(groups);
  if (!states.empty()) {
    out.report.kl_to_base = static_cast<double>(kl_to_base<Scalar>(out.policy, states));
  }
  Scalar total = 0;
  for (const auto& g : groups) {
    for (const auto& r : g.rollouts) {
      total += r.reward;
      ++out.report.rollouts;
    }
  }
  if (out.report.rollouts > 0) out.report.mean_reward = static_cast<double>(total) / out.report.rollouts;
  return out;
}

template <typename Scalar>
StepAdvantages<Scalar> broadcast(std::span<const RolloutGroup<Scalar>> groups,
                                 const std::vector<std::vector<Scalar>>& per_rollout) {
  StepAdvantages<Scalar> out(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t i = 0; i < groups[g].rollouts.size(); ++i) {
      out[g].emplace_back(groups[g].rollouts[i].horizon(), per_rollout[g][i]);
    }
  }
  return out;
}

template <typename Scalar>
std::vector<Scalar> rewards_of(const RolloutGroup<Scalar>& group) {
  std::vector<Scalar> r;
  r.reserve(group.rollouts.size());
  for (const auto& x : group.rollouts) r.push_back(x.reward);
  return r;
}

}  // namespace detail

/// One epoch of PPO: GAE advantages from the current value head, one ascent
/// step on the clipped surrogate and one descent step on the value loss.
template <typename Scalar>
UpdateResult<Scalar> ppo_update(std::span<const RolloutGroup<Scalar>> groups, const Policy<Scalar>& policy,
                                const AlgorithmConfig& config) {
  const Scalar gamma = Scalar(config.gamma);
  const Scalar lambda = Scalar(config.lambda);
  StepAdvantages<Scalar> adv(groups.size());
  StepAdvantages<Scalar> ret(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const Scalar v = policy.value(groups[g].state);
    for (const auto& r : groups[g].rollouts) {
      std::vector<Scalar> values(r.horizon(), v);
      values.push_back(Scalar(0));
      auto a = compute_gae(detail::step_rewards_of(r), values, gamma, lambda);
      std::vector<Scalar> rt(a.size());
      for (std::size_t t = 0; t < a.size(); ++t) rt[t] = a[t] + values[t];
      adv[g].push_back(std::move(a));
      ret[g].push_back(std::move(rt));
    }
  }
  LossAndGradient<Scalar> lg = ppo_clip_loss(groups, adv, policy, Scalar(config.clip_epsilon));
  const LossAndGradient<Scalar> vl = value_loss(groups, ret, policy, Scalar(config.value_coef));
  lg.loss += vl.loss;
  lg.grad.value += vl.grad.value;
  return detail::finish(Algorithm::ppo_gae, groups, policy, lg, config);
}

template <typename Scalar>
UpdateResult<Scalar> grpo_update(std::span<const RolloutGroup<Scalar>> groups, const Policy<Scalar>& policy,
                                 const AlgorithmConfig& config) {
  std::vector<std::vector<Scalar>> per_rollout;
  for (const auto& g : groups) per_rollout.push_back(grpo_advantages(detail::rewards_of(g)));
  const auto lg = ppo_clip_loss(groups, detail::broadcast(groups, per_rollout), policy,
                                Scalar(config.clip_epsilon));
  return detail::finish(Algorithm::grpo, groups, policy, lg, config);
}

/// Entropic advantage weighting: per group, beta is adapted to keep the ESS
/// above the floor, and rollout i receives advantage G * w_i - 1 (zero for
/// uniform weights).
template <typename Scalar>
UpdateResult<Scalar> entropic_update(std::span<const RolloutGroup<Scalar>> groups,
                                     const Policy<Scalar>& policy, const AlgorithmConfig& config) {
  std::vector<std::vector<Scalar>> per_rollout;
  double beta_sum = 0.0;
  double ess_sum = 0.0;
  for (const auto& g : groups) {
    const auto rewards = detail::rewards_of(g);
    const Scalar floor = std::min(Scalar(config.ess_floor), static_cast<Scalar>(rewards.size()));
    const Scalar beta = adapt_beta(rewards, floor, Scalar(config.beta_temperature));
    const auto w = entropic_weights(rewards, beta);
    std::vector<Scalar> a(w.size());
    const Scalar n = static_cast<Scalar>(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) a[i] = n * w[i] - Scalar(1);
    per_rollout.push_back(std::move(a));
    beta_sum += static_cast<double>(beta);
    ess_sum += static_cast<double>(effective_sample_size(w));
  }
  const auto lg = ppo_clip_loss(groups, detail::broadcast(groups, per_rollout), policy,
                                Scalar(config.clip_epsilon));
  auto out = detail::finish(Algorithm::entropic, groups, policy, lg, config);
  if (!groups.empty()) {
    out.report.beta = beta_sum / static_cast<double>(groups.size());
    out.report.ess = ess_sum / static_cast<double>(groups.size());
  }
  return out;
}

template <typename Scalar>
UpdateResult<Scalar> reinforce_kl_update(std::span<const RolloutGroup<Scalar>> groups,
                                         const Policy<Scalar>& policy, const AlgorithmConfig& config) {
  const auto lg = reinforce_kl_loss(groups, policy, Scalar(config.gamma), Scalar(config.kl_alpha));
  return detail::finish(Algorithm::reinforce_kl, groups, policy, lg, config);
}

/// Best-of-N behavioural cloning over the pooled rollouts of the batch. A
/// batch whose rewards are all equal has no "best" and is skipped.
template <typename Scalar>
UpdateResult<Scalar> bc_update(std::span<const RolloutGroup<Scalar>> groups, const Policy<Scalar>& policy,
                               const AlgorithmConfig& config) {
  std::vector<Scalar> rewards;
  std::vector<Demonstration<Scalar>> pool;
  for (const auto& g : groups) {
    for (const auto& r : g.rollouts) {
      rewards.push_back(r.reward);
      pool.push_back({g.state, r.actions});
    }
  }
  const bool flat = rewards.empty() || *std::max_element(rewards.begin(), rewards.end()) ==
                                           *std::min_element(rewards.begin(), rewards.end());
  if (flat) {
    auto out = detail::finish(Algorithm::best_of_n_bc, groups, policy,
                              LossAndGradient<Scalar>{Scalar(0), zero_gradient(policy)},
                              config);
    out.report.skipped = true;
    return out;
  }
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(config.top_k), rewards.size());
  std::vector<Demonstration<Scalar>> selected;
  for (std::size_t i : select_top_k(rewards, k)) selected.push_back(pool[i]);
  const auto lg = bc_loss<Scalar>(selected, policy);
  return detail::finish(Algorithm::best_of_n_bc, groups, policy, lg, config);
}

/// DPO on one (best, worst) pair per group; groups with a flat reward are
/// skipped since the verifier cannot rank them.
template <typename Scalar>
UpdateResult<Scalar> dpo_update(std::span<const RolloutGroup<Scalar>> groups, const Policy<Scalar>& policy,
                                const AlgorithmConfig& config) {
  std::vector<PreferencePair<Scalar>> pairs;
  for (const auto& g : groups) {
    const auto rewards = detail::rewards_of(g);
    if (rewards.empty()) continue;
    const auto best = static_cast<std::size_t>(std::max_element(rewards.begin(), rewards.end()) - rewards.begin());
    const auto worst = static_cast<std::size_t>(std::min_element(rewards.begin(), rewards.end()) - rewards.begin());
    if (rewards[best] == rewards[worst]) continue;
    pairs.push_back({g.state, g.rollouts[best].actions, g.rollouts[worst].actions});
  }
  if (pairs.empty()) {
    auto out = detail::finish(Algorithm::dpo, groups, policy,
                              LossAndGradient<Scalar>{Scalar(0), zero_gradient(policy)},
                              config);
    out.report.skipped = true;
    return out;
  }
  const auto lg = dpo_loss<Scalar>(pairs, policy, Scalar(config.beta_temperature));
  return detail::finish(Algorithm::dpo, groups, policy, lg, config);
}

template <typename Scalar>
UpdateResult<Scalar> weight_update(Algorithm algorithm, std::span<const RolloutGroup<Scalar>> groups,
                                   const Policy<Scalar>& policy, const AlgorithmConfig& config) {
  switch (algorithm) {
    case Algorithm::ppo_gae: return ppo_update(groups, policy, config);
    case Algorithm::grpo: return grpo_update(groups, policy, config);
    case Algorithm::entropic: return entropic_update(groups, policy, config);
    case Algorithm::reinforce_kl: return reinforce_kl_update(groups, policy, config);
    case Algorithm::best_of_n_bc: return bc_update(groups, policy, config);
    case Algorithm::dpo: return dpo_update(groups, policy, config);
  }
  throw std::invalid_argument("weight_update: unknown algorithm");
}

using UpdateResultd = UpdateResult<double>;
using Demonstrationd = Demonstration<double>;
using PreferencePaird = PreferencePair<double>;

}  // namespace sia
