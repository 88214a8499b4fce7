#include "sia/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sia {

namespace {

template <typename Enum, std::size_t N>
using NameTable = std::array<std::pair<Enum, std::string_view>, N>;

constexpr NameTable<RewardKind, 3> kRewardKindNames{{
    {RewardKind::dense_per_step, "dense_per_step"},
    {RewardKind::terminal_scalar, "terminal_scalar"},
    {RewardKind::ordinal_only, "ordinal_only"},
}};

constexpr NameTable<MetricDirection, 2> kDirectionNames{{
    {MetricDirection::higher_better, "higher_better"},
    {MetricDirection::lower_better, "lower_better"},
}};

constexpr NameTable<FailureTag, 6> kFailureNames{{
    {FailureTag::none, "none"},
    {FailureTag::parse_failure, "parse_failure"},
    {FailureTag::tool_error, "tool_error"},
    {FailureTag::wrong_answer, "wrong_answer"},
    {FailureTag::timeout, "timeout"},
    {FailureTag::invalid_config, "invalid_config"},
}};

constexpr NameTable<OutputFormat, 3> kFormatNames{{
    {OutputFormat::plain, "plain"},
    {OutputFormat::structured, "structured"},
    {OutputFormat::opaque, "opaque"},
}};

constexpr NameTable<LoopAction, 2> kActionNames{{
    {LoopAction::harness_update, "harness_update"},
    {LoopAction::weight_update, "weight_update"},
}};

constexpr NameTable<Algorithm, 6> kAlgorithmNames{{
    {Algorithm::ppo_gae, "ppo_gae"},
    {Algorithm::grpo, "grpo"},
    {Algorithm::entropic, "entropic"},
    {Algorithm::reinforce_kl, "reinforce_kl"},
    {Algorithm::best_of_n_bc, "best_of_n_bc"},
    {Algorithm::dpo, "dpo"},
}};

template <typename Enum, std::size_t N>
std::string_view name_of(const NameTable<Enum, N>& table, Enum value) {
  for (const auto& [e, name] : table) {
    if (e == value) return name;
  }
  return "unknown";
}

template <typename Enum, std::size_t N>
Enum value_of(const NameTable<Enum, N>& table, std::string_view text, const char* what) {
  for (const auto& [e, name] : table) {
    if (name == text) return e;
  }
  throw std::invalid_argument(std::string("unknown ") + what + ": '" + std::string(text) + "'");
}

}  // namespace

std::string_view to_string(RewardKind kind) { return name_of(kRewardKindNames, kind); }
std::string_view to_string(MetricDirection direction) { return name_of(kDirectionNames, direction); }
std::string_view to_string(FailureTag tag) { return name_of(kFailureNames, tag); }
std::string_view to_string(OutputFormat format) { return name_of(kFormatNames, format); }
std::string_view to_string(LoopAction action) { return name_of(kActionNames, action); }
std::string_view to_string(Algorithm algorithm) { return name_of(kAlgorithmNames, algorithm); }

RewardKind parse_reward_kind(std::string_view text) {
  return value_of(kRewardKindNames, text, "reward kind");
}
MetricDirection parse_metric_direction(std::string_view text) {
  return value_of(kDirectionNames, text, "metric direction");
}
FailureTag parse_failure_tag(std::string_view text) {
  return value_of(kFailureNames, text, "failure tag");
}
OutputFormat parse_output_format(std::string_view text) {
  return value_of(kFormatNames, text, "output format");
}
LoopAction parse_loop_action(std::string_view text) {
  return value_of(kActionNames, text, "loop action");
}
Algorithm parse_algorithm(std::string_view text) {
  return value_of(kAlgorithmNames, text, "algorithm");
}

RewardMoments reward_moments(std::span<const double> rewards) {
  RewardMoments m;
  m.count = rewards.size();
  if (rewards.empty()) return m;

  // Sorted summation keeps the result independent of instance order.
  std::vector<double> sorted(rewards.begin(), rewards.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  m.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / n;

  std::vector<double> dev(sorted.size());
  std::transform(sorted.begin(), sorted.end(), dev.begin(), [&](double r) { return r - m.mean; });
  std::sort(dev.begin(), dev.end());
  double m2 = 0.0;
  double m3 = 0.0;
  for (double d : dev) {
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m.variance = m2;
  m.skewness = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
  return m;
}

std::vector<HistogramBucket> reward_histogram(std::span<const double> rewards, std::size_t buckets) {
  if (rewards.empty()) return {};
  const auto [min_it, max_it] = std::minmax_element(rewards.begin(), rewards.end());
  const double lo = *min_it;
  const double hi = *max_it;
  if (hi == lo) return {HistogramBucket{lo, hi, rewards.size()}};

  const double width = (hi - lo) / static_cast<double>(buckets);
  std::vector<HistogramBucket> out(buckets);
  for (std::size_t b = 0; b < buckets; ++b) {
    out[b].lo = lo + width * static_cast<double>(b);
    out[b].hi = b + 1 == buckets ? hi : lo + width * static_cast<double>(b + 1);
  }
  for (double r : rewards) {
    auto b = static_cast<std::size_t>((r - lo) / (hi - lo) * static_cast<double>(buckets));
    out[std::min(b, buckets - 1)].count += 1;
  }
  return out;
}

Metrics summarize_rewards(int generation, double primary_metric, std::span<const double> rewards,
                          FailureCounts failures) {
  Metrics m;
  m.generation = generation;
  m.primary_metric = primary_metric;
  m.reward_histogram = reward_histogram(rewards);
  const auto zeros = std::count(rewards.begin(), rewards.end(), 0.0);
  m.zero_reward_fraction =
      rewards.empty() ? 0.0 : static_cast<double>(zeros) / static_cast<double>(rewards.size());
  for (FailureTag tag : kAllFailureTags) failures.try_emplace(tag, 0);
  m.failure_counts = std::move(failures);
  m.moments = reward_moments(rewards);
  return m;
}

double score_from_runtime(double runtime_us) {
  if (!(runtime_us > 0.0) || !std::isfinite(runtime_us)) {
    throw std::domain_error("runtime must be positive and finite, got " + std::to_string(runtime_us));
  }
  return 1500.0 / runtime_us;
}

Ordering compare_metric(double a, double b, MetricDirection direction) {
  if (a == b) return Ordering::tie;
  const bool a_larger = a > b;
  const bool better = direction == MetricDirection::higher_better ? a_larger : !a_larger;
  return better ? Ordering::improves : Ordering::worse;
}

void validate_records(std::span<const GenerationRecord> records) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const int expected = static_cast<int>(i) + 1;
    if (r.generation != expected) {
      throw std::invalid_argument("generation records not gapless: expected " +
                                  std::to_string(expected) + ", got " + std::to_string(r.generation));
    }
    if (r.metrics_before.generation != r.generation ||
        r.metrics_after.generation != r.metrics_before.generation + 1) {
      throw std::invalid_argument("record " + std::to_string(r.generation) +
                                  " has mismatched metric generations");
    }
    if (r.algorithm.has_value() != (r.action == LoopAction::weight_update)) {
      throw std::invalid_argument("record " + std::to_string(r.generation) +
                                  ": algorithm must be present exactly for weight updates");
    }
  }
}

void AlgorithmConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("algorithm config: ") + what);
  };
  require(gamma >= 0.0 && gamma <= 1.0, "gamma must lie in [0,1]");
  require(lambda >= 0.0 && lambda <= 1.0, "lambda must lie in [0,1]");
  require(clip_epsilon > 0.0, "clip_epsilon must be > 0");
  require(beta_temperature > 0.0, "beta_temperature must be > 0");
  require(kl_alpha >= 0.0, "kl_alpha must be >= 0");
  require(ess_floor > 1.0, "ess_floor must be > 1");
  require(top_k >= 1, "top_k must be >= 1");
  require(learning_rate > 0.0, "learning_rate must be > 0");
  require(value_coef >= 0.0, "value_coef must be >= 0");
  require(max_grad_norm >= 0.0, "max_grad_norm must be >= 0");
}

void LoopConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("loop config: ") + what);
  };
  require(max_generations >= 1, "max_generations must be >= 1");
  require(plateau_window >= 2, "plateau_window must be >= 2");
  require(plateau_rel_threshold >= 0.0, "plateau_rel_threshold must be >= 0");
  require(weight_steps_per_generation >= 1, "weight_steps_per_generation must be >= 1");
  require(groups_per_step >= 1, "groups_per_step must be >= 1");
  require(group_size >= 2, "group_size must be >= 2");
  require(adapter_rank >= 1, "adapter_rank must be >= 1");
  require(adapter_init_scale > 0.0, "adapter_init_scale must be > 0");
  require(mean_floor >= 0.0, "mean_floor must be >= 0");
  require(regression_fraction >= 0.0, "regression_fraction must be >= 0");
  require(algorithm.ess_floor <= static_cast<double>(group_size),
          "algorithm.ess_floor cannot exceed group_size");
  algorithm.validate();
}

}  // namespace sia
