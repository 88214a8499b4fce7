#pragma once

// Shared domain types, metric algebra and generation bookkeeping.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sia {

enum class RewardKind { dense_per_step, terminal_scalar, ordinal_only };
enum class MetricDirection { higher_better, lower_better };

/// Per-instance outcome label. Declaration order is the tie-break order used
/// when picking a dominant failure mode.
enum class FailureTag { none, parse_failure, tool_error, wrong_answer, timeout, invalid_config };

inline constexpr std::array<FailureTag, 6> kAllFailureTags{
    FailureTag::none,        FailureTag::parse_failure, FailureTag::tool_error,
    FailureTag::wrong_answer, FailureTag::timeout,      FailureTag::invalid_config};

/// Output format an instance demands from the agent. `opaque` cannot be
/// handled by any parser mode.
enum class OutputFormat { plain, structured, opaque };

enum class LoopAction { harness_update, weight_update };

enum class Algorithm { ppo_gae, grpo, entropic, reinforce_kl, best_of_n_bc, dpo };

inline constexpr std::array<Algorithm, 6> kAllAlgorithms{
    Algorithm::ppo_gae,      Algorithm::grpo,        Algorithm::entropic,
    Algorithm::reinforce_kl, Algorithm::best_of_n_bc, Algorithm::dpo};

std::string_view to_string(RewardKind kind);
std::string_view to_string(MetricDirection direction);
std::string_view to_string(FailureTag tag);
std::string_view to_string(OutputFormat format);
std::string_view to_string(LoopAction action);
std::string_view to_string(Algorithm algorithm);

RewardKind parse_reward_kind(std::string_view text);
MetricDirection parse_metric_direction(std::string_view text);
FailureTag parse_failure_tag(std::string_view text);
OutputFormat parse_output_format(std::string_view text);
LoopAction parse_loop_action(std::string_view text);
Algorithm parse_algorithm(std::string_view text);

struct SampleInstance {
  std::string id;
  OutputFormat format = OutputFormat::plain;
};

struct TaskSpec {
  std::string task_id;
  std::string description;
  std::vector<SampleInstance> sample_instances;  ///< regularisation set, never empty
  std::vector<std::string> reference_artifacts;
  RewardKind reward_kind = RewardKind::terminal_scalar;
  MetricDirection metric_direction = MetricDirection::higher_better;
  /// Observation subsets exposed by the environment, ordered narrow to wide.
  std::vector<std::string> feature_views;
};

struct HistogramBucket {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};

/// Exact population moments of the per-instance rewards of one generation.
struct RewardMoments {
  std::size_t count = 0;
  double mean = 0.0;
  double variance = 0.0;
  double skewness = 0.0;  ///< Fisher, population; 0 when variance is 0
};

using FailureCounts = std::map<FailureTag, std::size_t>;

struct Metrics {
  int generation = 1;
  double primary_metric = 0.0;
  std::vector<HistogramBucket> reward_histogram;
  double zero_reward_fraction = 0.0;
  FailureCounts failure_counts;
  RewardMoments moments;
};

inline constexpr std::size_t kHistogramBuckets = 20;

/// Builds a Metrics record from per-instance rewards. The result does not
/// depend on the order of `rewards`.
Metrics summarize_rewards(int generation, double primary_metric,
                          std::span<const double> rewards, FailureCounts failures);

RewardMoments reward_moments(std::span<const double> rewards);
std::vector<HistogramBucket> reward_histogram(std::span<const double> rewards,
                                              std::size_t buckets = kHistogramBuckets);

/// Kernel score: 1500 / runtime. Throws std::domain_error for runtime <= 0.
double score_from_runtime(double runtime_us);

enum class Ordering { improves, tie, worse };

/// Whether `a` improves on `b` under `direction`.
Ordering compare_metric(double a, double b, MetricDirection direction);

/// Convenience: strict improvement (ties are not improvements).
inline bool improves(double a, double b, MetricDirection direction) {
  return compare_metric(a, b, direction) == Ordering::improves;
}

struct GenerationRecord {
  int generation = 1;
  LoopAction action = LoopAction::harness_update;
  std::optional<Algorithm> algorithm;  ///< present iff action == weight_update
  Metrics metrics_before;
  Metrics metrics_after;
  std::string report;
};

/// Throws std::invalid_argument unless the records are gapless from 1, pair
/// before/after generations correctly and carry an algorithm exactly for
/// weight updates.
void validate_records(std::span<const GenerationRecord> records);

/// Hyperparameters shared by the weight-update objectives.
struct AlgorithmConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  double clip_epsilon = 0.2;
  double beta_temperature = 1.0;
  double kl_alpha = 0.05;
  double ess_floor = 4.0;
  int top_k = 8;
  double learning_rate = 0.5;
  double value_coef = 0.05;
  double max_grad_norm = 1.0;  ///< 0 disables clipping

  void validate() const;
};

/// Learning rate used for the full-scale LoRA runs; desk-scale rates are
/// logged as a multiple of it.
inline constexpr double kReferenceLearningRate = 4e-5;

struct LoopConfig {
  int max_generations = 40;
  int plateau_window = 3;
  double plateau_rel_threshold = 0.01;
  std::uint64_t seed = 42;

  int weight_steps_per_generation = 25;
  int groups_per_step = 16;
  int group_size = 8;
  int adapter_rank = 4;
  double adapter_init_scale = 1.0;

  double skew_threshold = 2.0;
  double mean_floor = 0.02;
  double regression_fraction = 0.5;
  std::optional<double> target_metric;  ///< environment default when unset

  AlgorithmConfig algorithm;

  void validate() const;
};

/// Error raised for malformed configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sia
