#pragma once

// Scaffold (harness) representation, initialisation from a task description
// and the trajectory-driven repair rules that produce the next scaffold.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sia/core.hpp"

namespace sia {

enum class ParserMode { strict, lenient, structured_block };

std::string_view to_string(ParserMode mode);
ParserMode parse_parser_mode(std::string_view text);

/// Whether a parser in `mode` accepts an output that must be in `format`.
/// `malformed` marks a plain output with a broken wrapper.
bool parser_accepts(ParserMode mode, OutputFormat format, bool malformed);

inline constexpr int kMaxRetryBudget = 5;
inline constexpr int kMinSamples = 1;
inline constexpr int kMaxSamples = 8;

struct Knobs {
  ParserMode parser = ParserMode::strict;
  int retry_budget = 0;
  int feature_view = 0;  ///< index into TaskSpec::feature_views
  bool reranker_enabled = false;
  int samples_per_instance = 1;
  std::optional<double> temperature_override;

  bool operator==(const Knobs&) const = default;
};

struct Scaffold {
  int generation = 1;
  Knobs knobs;
  std::vector<std::string> provenance;  ///< rule ids, one per generation step
};

/// Throws std::invalid_argument if any knob lies outside its range.
void validate_knobs(const Knobs& knobs, std::size_t feature_view_count);

/// Hash of knobs and provenance; the generation label is excluded.
std::uint64_t scaffold_hash(const Scaffold& scaffold);

struct InstanceTrace {
  std::size_t instance_id = 0;
  Eigen::VectorXd state;
  std::vector<int> actions;
  std::vector<std::string> tool_events;
  std::optional<std::string> extracted_answer;
  double reward = 0.0;
  FailureTag failure_tag = FailureTag::none;
};

struct Trajectory {
  int generation = 1;
  std::vector<InstanceTrace> traces;
};

struct KnobChange {
  std::string knob;
  std::string before;
  std::string after;
};

struct ImprovementReport {
  std::string analysis;
  std::vector<std::string> applied_rules;
  std::vector<KnobChange> knob_diff;
};

struct HarnessUpdate {
  Scaffold scaffold;
  ImprovementReport report;
};

/// Generation-1 scaffold for a task. The parser is the strictest mode that
/// accepts every sample instance; other knobs come from per-reward-kind
/// defaults. Throws std::runtime_error when no parser mode is admissible.
Scaffold init_scaffold(const TaskSpec& task_spec);

/// Exact count per failure tag (all tags present, zero-filled).
FailureCounts classify_failures(const Trajectory& trajectory);

/// Failure tags other than `none` with a non-zero count, most frequent first;
/// ties follow the declaration order of FailureTag.
std::vector<FailureTag> ranked_failures(const FailureCounts& counts);

/// One harness step: fires the first applicable repair rule for the most
/// frequent failure (falling through to the next failure when a rule chain is
/// exhausted), otherwise hill-climbs one knob in round-robin order. At most
/// one knob changes; the generation always advances by one.
HarnessUpdate propose_harness_update(const Scaffold& scaffold, const Trajectory& trajectory,
                                     const Metrics& metrics, const TaskSpec& task_spec);

}  // namespace sia
