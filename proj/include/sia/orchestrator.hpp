#pragma once

// The outer loop: evaluate, decide, update; plus replay and report export.

#include <optional>
#include <string>
#include <vector>

#include "sia/controller.hpp"
#include "sia/core.hpp"
#include "sia/environments.hpp"
#include "sia/store.hpp"

namespace sia {

enum class RunMode { baseline, sia_h, sia_wh };

std::string_view to_string(RunMode mode);
/// Accepts "baseline", "sia-h", "sia-wh" (underscores also accepted).
RunMode parse_run_mode(std::string_view text);

struct GenerationRow {
  int generation = 1;
  std::optional<LoopAction> action;  ///< empty for the final, evaluation-only generation
  std::optional<Algorithm> algorithm;
  double primary_metric = 0.0;
};

struct RunReport {
  std::string task;
  RunMode mode = RunMode::sia_wh;
  MetricDirection direction = MetricDirection::higher_better;
  std::vector<GenerationRow> rows;
  double initial = 0.0;
  double sia_h_best = 0.0;   ///< best over generations evaluated before any weight update
  double sia_wh_best = 0.0;  ///< best over all generations
};

/// Fills the three operating points from the rows.
void compute_operating_points(RunReport& report);

/// One header row, one row per generation, three summary rows; numbers at
/// 6 significant digits.
std::string emit_report_csv(const RunReport& report);

struct RunResult {
  RunReport report;
  EventLog log;
  Policyd final_policy;
  Scaffold final_scaffold;
};

class RunError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Runs the loop for `config.max_generations` generations (one for
/// baseline). Initialisation failures are rethrown as RunError with context.
RunResult run_loop(const LoopConfig& config, EnvKind env_kind, RunMode mode);

/// Rebuilds the report from logged events alone; never samples or evaluates.
RunReport replay(const std::vector<RunEvent>& events);

}  // namespace sia
