#include "sia/orchestrator.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "sia/rl_updates.hpp"
#include "sia/rng.hpp"
#include "sia/scaffold.hpp"

namespace sia {

using nlohmann::json;

namespace {

constexpr std::uint64_t kPolicyDomain = 0x706f6c;

json knobs_json(const Knobs& k) {
  return {{"parser_strictness", to_string(k.parser)},
          {"retry_budget", k.retry_budget},
          {"feature_view", k.feature_view},
          {"reranker_enabled", k.reranker_enabled},
          {"samples_per_instance", k.samples_per_instance},
          {"temperature_override", k.temperature_override ? json(*k.temperature_override) : json(nullptr)}};
}

json metrics_json(const Metrics& m) {
  json hist = json::array();
  for (const auto& b : m.reward_histogram) hist.push_back({b.lo, b.hi, b.count});
  json failures = json::object();
  for (const auto& [tag, n] : m.failure_counts) failures[std::string(to_string(tag))] = n;
  return {{"generation", m.generation},
          {"primary_metric", m.primary_metric},
          {"zero_reward_fraction", m.zero_reward_fraction},
          {"reward_histogram", hist},
          {"failure_counts", failures},
          {"reward_mean", m.moments.mean},
          {"reward_variance", m.moments.variance},
          {"reward_skewness", m.moments.skewness},
          {"scored_instances", m.moments.count}};
}

json diagnosis_json(const RewardDiagnosis& d) {
  return {{"density", to_string(d.density)},
          {"zero_fraction", d.zero_fraction},
          {"skewness", d.skewness},
          {"mean_reward", d.mean_reward},
          {"near_zero_expectation", d.near_zero_expectation},
          {"regression_risk", d.regression_risk}};
}

json update_json(int generation, int step, const UpdateReport& r) {
  return {{"generation", generation},
          {"step", step},
          {"algorithm", to_string(r.algorithm)},
          {"loss", r.loss},
          {"grad_norm", r.grad_norm},
          {"kl_to_base", r.kl_to_base},
          {"mean_reward", r.mean_reward},
          {"rollouts", r.rollouts},
          {"beta", r.beta},
          {"ess", r.ess},
          {"skipped", r.skipped}};
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

std::string_view to_string(RunMode mode) {
  switch (mode) {
    case RunMode::baseline: return "baseline";
    case RunMode::sia_h: return "sia-h";
    case RunMode::sia_wh: return "sia-wh";
  }
  return "unknown";
}

RunMode parse_run_mode(std::string_view text) {
  std::string t(text);
  std::replace(t.begin(), t.end(), '_', '-');
  for (RunMode m : {RunMode::baseline, RunMode::sia_h, RunMode::sia_wh}) {
    if (to_string(m) == t) return m;
  }
  throw std::invalid_argument("unknown run mode: '" + std::string(text) + "'");
}

void compute_operating_points(RunReport& report) {
  if (report.rows.empty()) throw std::invalid_argument("report has no generations");
  const auto better = [&](double a, double b) { return improves(a, b, report.direction); };
  report.initial = report.rows.front().primary_metric;
  report.sia_h_best = report.initial;
  report.sia_wh_best = report.initial;
  bool weights_touched = false;
  for (const auto& row : report.rows) {
    if (better(row.primary_metric, report.sia_wh_best)) report.sia_wh_best = row.primary_metric;
    if (!weights_touched && better(row.primary_metric, report.sia_h_best)) report.sia_h_best = row.primary_metric;
    if (row.action == LoopAction::weight_update) weights_touched = true;
  }
}

std::string emit_report_csv(const RunReport& report) {
  std::ostringstream out;
  out << "generation,action,algorithm,primary_metric\n";
  for (const auto& row : report.rows) {
    out << row.generation << ',' << (row.action ? to_string(*row.action) : "none") << ','
        << (row.algorithm ? to_string(*row.algorithm) : "none") << ',' << fmt6(row.primary_metric) << '\n';
  }
  out << "initial,,," << fmt6(report.initial) << '\n';
  out << "sia_h_best,,," << fmt6(report.sia_h_best) << '\n';
  out << "sia_wh_best,,," << fmt6(report.sia_wh_best) << '\n';
  return out.str();
}

RunResult run_loop(const LoopConfig& config, EnvKind env_kind, RunMode mode) {
  config.validate();
  const std::unique_ptr<Environment> env = make_environment(env_kind, config.seed);
  const TaskSpec& spec = env->task_spec();

  Scaffold scaffold;
  try {
    scaffold = init_scaffold(spec);
  } catch (const std::exception& e) {
    throw RunError(std::string("scaffold initialisation failed for task '") + spec.task_id + "': " + e.what());
  }
  Policyd policy = env->make_policy(config.adapter_rank, config.adapter_init_scale,
                                    derive_stream(config.seed, {kPolicyDomain}));
  const std::uint64_t frozen_base = base_hash(policy);

  ControllerConfig ccfg;
  ccfg.window = config.plateau_window;
  ccfg.rel_threshold = config.plateau_rel_threshold;
  ccfg.direction = spec.metric_direction;
  ccfg.skew_threshold = config.skew_threshold;
  ccfg.mean_floor = config.mean_floor;
  ccfg.regression_fraction = config.regression_fraction;
  ccfg.target_metric = config.target_metric.value_or(env->target_metric());

  RunResult result{{}, EventLog(hex64(config_hash(config)), config.seed), policy, scaffold};
  EventLog& log = result.log;
  RunReport& report = result.report;
  report.task = std::string(to_string(env_kind));
  report.mode = mode;
  report.direction = spec.metric_direction;

  log.append(EventKind::run_start,
             {{"task", report.task},
              {"mode", to_string(mode)},
              {"metric_direction", to_string(spec.metric_direction)},
              {"reward_kind", to_string(spec.reward_kind)},
              {"max_generations", config.max_generations},
              {"config", config_to_json(config)},
              {"environment_hash", hex64(env->content_hash())},
              {"base_hash", hex64(frozen_base)},
              {"target_metric", ccfg.target_metric},
              {"learning_rate_vs_reference", config.algorithm.learning_rate / kReferenceLearningRate},
              {"scaffold", {{"knobs", knobs_json(scaffold.knobs)}, {"provenance", scaffold.provenance}}}});

  const int generations = mode == RunMode::baseline ? 1 : config.max_generations;
  ControllerState state;
  std::vector<Metrics> history;

  for (int g = 1; g <= generations; ++g) {
    scaffold.generation = g;
    log.append(EventKind::generation_start, {{"generation", g},
                                             {"scaffold_hash", hex64(scaffold_hash(scaffold))},
                                             {"policy_hash", hex64(content_hash(policy))}});

    Evaluation ev = evaluate(*env, scaffold, policy, config.seed);
    history.push_back(ev.metrics);
    state.observe(g, ev.metrics.primary_metric);
    log.append(EventKind::evaluation_done, {{"generation", g}, {"metrics", metrics_json(ev.metrics)}});

    GenerationRow row{g, std::nullopt, std::nullopt, ev.metrics.primary_metric};

    if (g < generations) {
      ActionDecision decision;
      if (mode == RunMode::sia_h) {
        decision = {LoopAction::harness_update, Phase::harness_search, 0, "forced_harness"};
      } else {
        decision = select_action(state, ccfg);
      }
      commit(state, decision);
      row.action = decision.action;

      json payload{{"generation", g},
                   {"action", to_string(decision.action)},
                   {"rule", decision.rule},
                   {"phase", to_string(decision.phase)}};

      if (decision.action == LoopAction::harness_update) {
        log.append(EventKind::decision, payload);
        const HarnessUpdate upd = propose_harness_update(scaffold, ev.trajectory, ev.metrics, spec);
        json diff = json::array();
        for (const auto& d : upd.report.knob_diff) diff.push_back({{"knob", d.knob}, {"before", d.before}, {"after", d.after}});
        log.append(EventKind::harness_updated, {{"generation", g},
                                                {"applied_rules", upd.report.applied_rules},
                                                {"knob_diff", diff},
                                                {"analysis", upd.report.analysis},
                                                {"knobs", knobs_json(upd.scaffold.knobs)}});
        scaffold = upd.scaffold;
      } else {
        const RewardDiagnosis diag = diagnose(history, spec, ccfg);
        const AlgorithmChoice choice = select_algorithm(diag, ccfg.skew_threshold);
        row.algorithm = choice.algorithm;
        payload["diagnosis"] = diagnosis_json(diag);
        payload["algorithm"] = to_string(choice.algorithm);
        payload["algorithm_rule"] = choice.rule;
        log.append(EventKind::decision, payload);

        for (int step = 0; step < config.weight_steps_per_generation; ++step) {
          const auto groups = collect_rollout_groups(*env, scaffold, policy, config.seed, g, step,
                                                     config.groups_per_step, config.group_size);
          UpdateResultd upd = weight_update<double>(choice.algorithm, groups, policy, config.algorithm);
          policy = std::move(upd.policy);
          log.append(EventKind::weight_update_step, update_json(g, step, upd.report));
        }
        policy = policy.with_lineage_entry("gen" + std::to_string(g) + ":" + std::string(to_string(choice.algorithm)) +
                                           ":steps=" + std::to_string(config.weight_steps_per_generation));
      }
    }

    if (base_hash(policy) != frozen_base) throw RunError("base weights changed during generation " + std::to_string(g));
    log.append(EventKind::generation_end, {{"generation", g},
                                           {"action", row.action ? json(to_string(*row.action)) : json(nullptr)},
                                           {"algorithm", row.algorithm ? json(to_string(*row.algorithm)) : json(nullptr)},
                                           {"scaffold_hash", hex64(scaffold_hash(scaffold))},
                                           {"policy_hash", hex64(content_hash(policy))},
                                           {"base_hash", hex64(base_hash(policy))}});
    report.rows.push_back(row);
  }

  compute_operating_points(report);
  log.append(EventKind::run_end, {{"generations", generations},
                                  {"final_policy_hash", hex64(content_hash(policy))},
                                  {"final_scaffold_hash", hex64(scaffold_hash(scaffold))}});
  result.final_policy = std::move(policy);
  result.final_scaffold = std::move(scaffold);
  return result;
}

RunReport replay(const std::vector<RunEvent>& events) {
  if (events.empty() || events.front().kind != EventKind::run_start) {
    throw LogError("event log does not start with run_start");
  }
  if (events.back().kind != EventKind::run_end) {
    throw LogError("event log truncated: missing sequence_no " + std::to_string(events.back().sequence_no + 1));
  }
  RunReport report;
  try {
    const json& start = events.front().payload;
    report.task = start.at("task").get<std::string>();
    report.mode = parse_run_mode(start.at("mode").get<std::string>());
    report.direction = parse_metric_direction(start.at("metric_direction").get<std::string>());
    for (const auto& ev : events) {
      if (ev.kind == EventKind::evaluation_done) {
        const int g = ev.payload.at("generation").get<int>();
        if (g != static_cast<int>(report.rows.size()) + 1) {
          throw LogError("event log: evaluation for generation " + std::to_string(g) + " out of order");
        }
        report.rows.push_back({g, std::nullopt, std::nullopt, ev.payload.at("metrics").at("primary_metric").get<double>()});
      } else if (ev.kind == EventKind::decision) {
        if (report.rows.empty()) throw LogError("event log: decision before any evaluation");
        GenerationRow& row = report.rows.back();
        row.action = parse_loop_action(ev.payload.at("action").get<std::string>());
        if (ev.payload.contains("algorithm")) row.algorithm = parse_algorithm(ev.payload.at("algorithm").get<std::string>());
      }
    }
  } catch (const json::exception& e) {
    throw LogError(std::string("event log: malformed payload (") + e.what() + ")");
  }
  compute_operating_points(report);
  return report;
}

}  // namespace sia
