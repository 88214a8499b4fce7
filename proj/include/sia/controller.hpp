#pragma once

// Feedback controller: plateau detection, harness-vs-weight action choice,
// reward diagnosis and algorithm selection.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sia/core.hpp"

namespace sia {

/// True iff the history holds more than `window` entries and the best metric
/// of the last `window` entries fails to improve on the best earlier metric by
/// at least `rel_threshold` in relative terms. Ties are not improvements.
bool detect_plateau(std::span<const double> history, int window, double rel_threshold,
                    MetricDirection direction);

enum class Phase { harness_search, weight_training };

std::string_view to_string(Phase phase);

struct ControllerConfig {
  int window = 3;
  double rel_threshold = 0.01;
  MetricDirection direction = MetricDirection::higher_better;
  double skew_threshold = 2.0;
  double mean_floor = 0.02;
  double regression_fraction = 0.5;
  double target_metric = 1.0;
};

struct MetricPoint {
  int generation = 1;
  double value = 0.0;
};

struct ControllerState {
  std::vector<MetricPoint> metric_history;  ///< gapless from generation 1
  std::optional<LoopAction> last_action;
  Phase phase = Phase::harness_search;
  std::size_t phase_start = 0;  ///< index into metric_history where the phase began

  /// Appends the metric of the next generation. Throws on a gap.
  void observe(int generation, double value);
  std::vector<double> values() const;
};

struct ActionDecision {
  LoopAction action = LoopAction::harness_update;
  Phase phase = Phase::harness_search;  ///< phase after this decision
  std::size_t phase_start = 0;
  std::string rule;
};

/// Harness updates until the harness-phase sub-history plateaus, then weight
/// updates until the weight-phase sub-history plateaus, and so on.
ActionDecision select_action(const ControllerState& state, const ControllerConfig& config);

/// Applies a decision to the state (phase bookkeeping and last action).
void commit(ControllerState& state, const ActionDecision& decision);

struct RewardDiagnosis {
  RewardKind density = RewardKind::terminal_scalar;
  double zero_fraction = 0.0;
  double skewness = 0.0;
  double mean_reward = 0.0;
  bool near_zero_expectation = false;
  bool regression_risk = false;
};

/// Diagnosis from the latest Metrics and the task's reward kind.
/// `regression_risk` compares the first generation's metric with the target.
RewardDiagnosis diagnose(std::span<const Metrics> history, const TaskSpec& task_spec,
                         const ControllerConfig& config);

struct AlgorithmChoice {
  Algorithm algorithm = Algorithm::grpo;
  std::string rule;
};

/// First match in priority order: cold start -> best_of_n_bc; ordinal -> dpo;
/// heavy right skew -> entropic; dense with regression risk -> reinforce_kl;
/// dense -> ppo_gae; otherwise grpo.
AlgorithmChoice select_algorithm(const RewardDiagnosis& diagnosis, double skew_threshold = 2.0);

}  // namespace sia
