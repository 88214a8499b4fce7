#include <algorithm>
#include <sstream>

#include "doctest.h"
#include "sia/orchestrator.hpp"
#include "sia/rng.hpp"

using namespace sia;

namespace {

LoopConfig small(int generations, std::uint64_t seed = 42) {
  LoopConfig c;
  c.max_generations = generations;
  c.seed = seed;
  c.weight_steps_per_generation = 4;
  c.groups_per_step = 4;
  return c;
}

std::size_t count_kind(const std::vector<RunEvent>& events, EventKind kind) {
  return static_cast<std::size_t>(
      std::count_if(events.begin(), events.end(), [&](const RunEvent& e) { return e.kind == kind; }));
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("run modes parse") {
  CHECK(parse_run_mode("sia-h") == RunMode::sia_h);
  CHECK(parse_run_mode("sia_wh") == RunMode::sia_wh);
  CHECK(parse_run_mode("baseline") == RunMode::baseline);
  CHECK_THROWS_AS(parse_run_mode("hybrid"), std::invalid_argument);
}

TEST_CASE("baseline evaluates once and exports one row") {
  const RunResult r = run_loop(small(10), EnvKind::classify, RunMode::baseline);
  const auto events = parse_event_log(r.log.text());
  CHECK(count_kind(events, EventKind::evaluation_done) == 1);
  CHECK(count_kind(events, EventKind::decision) == 0);
  REQUIRE(r.report.rows.size() == 1);
  CHECK(r.report.initial == r.report.sia_h_best);
  CHECK(r.report.initial == r.report.sia_wh_best);
  const std::string csv = emit_report_csv(r.report);
  CHECK(count_lines(csv) == 1 + 1 + 3);
  CHECK(csv.rfind("generation,action,algorithm,primary_metric\n", 0) == 0);
}

TEST_CASE("harness-only mode never touches the weights") {
  const RunResult r = run_loop(small(6), EnvKind::kernel, RunMode::sia_h);
  const auto events = parse_event_log(r.log.text());
  CHECK(count_kind(events, EventKind::weight_update_step) == 0);
  CHECK(count_kind(events, EventKind::harness_updated) == 5);
  CHECK(r.report.sia_h_best == r.report.sia_wh_best);
  const std::string start_hash = events.front().payload.at("base_hash");
  for (const auto& e : events) {
    if (e.kind == EventKind::generation_end) {
      CHECK(e.payload.at("base_hash") == start_hash);
      CHECK(e.payload.at("policy_hash") == events[1].payload.at("policy_hash"));
    }
  }
}

TEST_CASE("full loop: frozen base, one knob per harness step, replay agrees") {
  const RunResult r = run_loop(small(10), EnvKind::classify, RunMode::sia_wh);
  const auto events = parse_event_log(r.log.text());
  CHECK(count_kind(events, EventKind::weight_update_step) > 0);
  const std::string base = events.front().payload.at("base_hash");
  for (const auto& e : events) {
    if (e.kind == EventKind::generation_end) CHECK(e.payload.at("base_hash") == base);
    if (e.kind == EventKind::harness_updated) CHECK(e.payload.at("knob_diff").size() <= 1);
  }

  const std::uint64_t draws = Rng::total_draws();
  const RunReport replayed = replay(events);
  CHECK(Rng::total_draws() == draws);
  CHECK(emit_report_csv(replayed) == emit_report_csv(r.report));
  CHECK(emit_report_csv(replay(parse_event_log(r.log.text()))) == emit_report_csv(replayed));
}

TEST_CASE("same seed and config give a byte-identical log") {
  const RunResult a = run_loop(small(6, 7), EnvKind::denoise, RunMode::sia_wh);
  const RunResult b = run_loop(small(6, 7), EnvKind::denoise, RunMode::sia_wh);
  CHECK(a.log.text() == b.log.text());
  const RunResult c = run_loop(small(6, 8), EnvKind::denoise, RunMode::sia_wh);
  CHECK(a.log.text() != c.log.text());
}

TEST_CASE("replay rejects a truncated log") {
  const RunResult r = run_loop(small(3), EnvKind::classify, RunMode::sia_wh);
  auto events = parse_event_log(r.log.text());
  events.pop_back();
  CHECK_THROWS_AS(replay(events), LogError);
}

TEST_CASE("operating points follow the metric direction") {
  RunReport rep;
  rep.direction = MetricDirection::lower_better;
  rep.rows = {{1, LoopAction::harness_update, {}, 10.0},
              {2, LoopAction::weight_update, Algorithm::grpo, 8.0},
              {3, {}, {}, 5.0}};
  compute_operating_points(rep);
  CHECK(rep.initial == 10.0);
  CHECK(rep.sia_h_best == 8.0);
  CHECK(rep.sia_wh_best == 5.0);
}
