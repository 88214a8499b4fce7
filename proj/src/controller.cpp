#include "sia/controller.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sia {

namespace {

double best_of(std::span<const double> xs, MetricDirection direction) {
  return direction == MetricDirection::higher_better ? *std::max_element(xs.begin(), xs.end())
                                                     : *std::min_element(xs.begin(), xs.end());
}

}  // namespace

bool detect_plateau(std::span<const double> history, int window, double rel_threshold,
                    MetricDirection direction) {
  if (window < 2) throw std::invalid_argument("detect_plateau: window must be >= 2");
  const auto w = static_cast<std::size_t>(window);
  if (history.size() <= w) return false;
  const double before = best_of(history.first(history.size() - w), direction);
  const double recent = best_of(history.last(w), direction);
  if (compare_metric(recent, before, direction) != Ordering::improves) return true;
  const double gain = std::abs(recent - before) / std::max(std::abs(before), 1e-12);
  return gain < rel_threshold;
}

std::string_view to_string(Phase phase) {
  return phase == Phase::harness_search ? "harness_search" : "weight_training";
}

void ControllerState::observe(int generation, double value) {
  const int expected = metric_history.empty() ? 1 : metric_history.back().generation + 1;
  if (generation != expected) {
    throw std::invalid_argument("controller: expected generation " + std::to_string(expected) + ", got " +
                                std::to_string(generation));
  }
  metric_history.push_back({generation, value});
}

std::vector<double> ControllerState::values() const {
  std::vector<double> v;
  v.reserve(metric_history.size());
  for (const auto& p : metric_history) v.push_back(p.value);
  return v;
}

ActionDecision select_action(const ControllerState& state, const ControllerConfig& config) {
  if (state.metric_history.empty()) {
    throw std::invalid_argument("select_action: at least one generation must be completed");
  }
  const std::vector<double> all = state.values();
  const auto sub = std::span<const double>(all).subspan(std::min(state.phase_start, all.size() - 1));
  const bool stalled = detect_plateau(sub, config.window, config.rel_threshold, config.direction);
  const std::size_t now = all.size() - 1;

  if (state.phase == Phase::harness_search) {
    if (stalled) return {LoopAction::weight_update, Phase::weight_training, now, "harness_plateau"};
    return {LoopAction::harness_update, Phase::harness_search, state.phase_start, "harness_progress"};
  }
  if (stalled) return {LoopAction::harness_update, Phase::harness_search, now, "weight_plateau"};
  return {LoopAction::weight_update, Phase::weight_training, state.phase_start, "weight_progress"};
}

void commit(ControllerState& state, const ActionDecision& decision) {
  state.phase = decision.phase;
  state.phase_start = decision.phase_start;
  state.last_action = decision.action;
}

RewardDiagnosis diagnose(std::span<const Metrics> history, const TaskSpec& task_spec,
                         const ControllerConfig& config) {
  if (history.empty()) throw std::invalid_argument("diagnose: metrics history is empty");
  const Metrics& latest = history.back();
  RewardDiagnosis d;
  d.density = task_spec.reward_kind;
  d.zero_fraction = latest.zero_reward_fraction;
  d.skewness = latest.moments.skewness;
  d.mean_reward = latest.moments.mean;
  d.near_zero_expectation = d.mean_reward < config.mean_floor;

  const double initial = history.front().primary_metric;
  if (task_spec.metric_direction == MetricDirection::higher_better) {
    d.regression_risk = initial >= config.regression_fraction * config.target_metric;
  } else {
    d.regression_risk = config.regression_fraction > 0.0 &&
                        initial <= config.target_metric / config.regression_fraction;
  }
  return d;
}

AlgorithmChoice select_algorithm(const RewardDiagnosis& d, double skew_threshold) {
  if (d.near_zero_expectation) return {Algorithm::best_of_n_bc, "near_zero_expectation"};
  if (d.density == RewardKind::ordinal_only) return {Algorithm::dpo, "ordinal_only"};
  if (d.skewness > skew_threshold) return {Algorithm::entropic, "right_skewed"};
  if (d.density == RewardKind::dense_per_step && d.regression_risk) {
    return {Algorithm::reinforce_kl, "dense_with_regression_risk"};
  }
  if (d.density == RewardKind::dense_per_step) return {Algorithm::ppo_gae, "dense_per_step"};
  return {Algorithm::grpo, "terminal_default"};
}

}  // namespace sia
