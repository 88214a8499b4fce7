#include "sia/scaffold.hpp"

#include <algorithm>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "sia/rng.hpp"

namespace sia {

std::string_view to_string(ParserMode mode) {
  switch (mode) {
    case ParserMode::strict: return "strict";
    case ParserMode::lenient: return "lenient";
    case ParserMode::structured_block: return "structured_block";
  }
  return "unknown";
}

ParserMode parse_parser_mode(std::string_view text) {
  for (ParserMode m : {ParserMode::strict, ParserMode::lenient, ParserMode::structured_block}) {
    if (to_string(m) == text) return m;
  }
  throw std::invalid_argument("unknown parser mode: '" + std::string(text) + "'");
}

bool parser_accepts(ParserMode mode, OutputFormat format, bool malformed) {
  if (format == OutputFormat::opaque) return false;
  switch (mode) {
    case ParserMode::strict: return format == OutputFormat::plain && !malformed;
    case ParserMode::lenient: return format == OutputFormat::plain;
    case ParserMode::structured_block: return true;
  }
  return false;
}

void validate_knobs(const Knobs& k, std::size_t feature_view_count) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("scaffold knob out of range: " + what);
  };
  require(k.retry_budget >= 0 && k.retry_budget <= kMaxRetryBudget, "retry_budget");
  require(k.samples_per_instance >= kMinSamples && k.samples_per_instance <= kMaxSamples,
          "samples_per_instance");
  require(k.feature_view >= 0 && static_cast<std::size_t>(k.feature_view) < feature_view_count,
          "feature_view");
  require(!k.temperature_override || *k.temperature_override > 0.0, "temperature_override");
}

std::uint64_t scaffold_hash(const Scaffold& s) {
  Fnv1a h;
  // The generation label is bookkeeping, not content: a scaffold carried
  // unchanged through a weight-update generation keeps its hash.
  h.value(static_cast<int>(s.knobs.parser))
      .value(s.knobs.retry_budget)
      .value(s.knobs.feature_view)
      .value(static_cast<int>(s.knobs.reranker_enabled))
      .value(s.knobs.samples_per_instance)
      .value(static_cast<int>(s.knobs.temperature_override.has_value()))
      .value(s.knobs.temperature_override.value_or(0.0));
  for (const auto& p : s.provenance) h.text(p).value('\n');
  return h.digest();
}

Scaffold init_scaffold(const TaskSpec& spec) {
  if (spec.sample_instances.empty()) {
    throw std::invalid_argument("init_scaffold: task spec has no sample instances");
  }
  if (spec.feature_views.empty()) {
    throw std::invalid_argument("init_scaffold: task spec declares no feature views");
  }

  Scaffold s;
  s.generation = 1;
  switch (spec.reward_kind) {
    case RewardKind::dense_per_step:
    case RewardKind::terminal_scalar:
      s.knobs.samples_per_instance = 1;
      s.knobs.reranker_enabled = false;
      break;
    case RewardKind::ordinal_only:
      // An ordinal verifier is only useful when there is something to rank.
      s.knobs.samples_per_instance = 2;
      s.knobs.reranker_enabled = true;
      break;
  }

  // Sample-task regularisation: a parser is admissible only if no sample
  // instance would be rejected on format grounds.
  std::optional<ParserMode> chosen;
  for (ParserMode m : {ParserMode::strict, ParserMode::lenient, ParserMode::structured_block}) {
    const bool admissible = std::all_of(
        spec.sample_instances.begin(), spec.sample_instances.end(),
        [&](const SampleInstance& inst) { return parser_accepts(m, inst.format, false); });
    if (admissible) {
      chosen = m;
      break;
    }
  }
  if (!chosen) {
    throw std::runtime_error("init_scaffold: no parser mode accepts every sample instance of task '" +
                             spec.task_id + "'");
  }
  s.knobs.parser = *chosen;
  s.provenance.push_back("init:" + std::string(to_string(spec.reward_kind)) + ":parser=" +
                         std::string(to_string(*chosen)));
  return s;
}

FailureCounts classify_failures(const Trajectory& trajectory) {
  FailureCounts counts;
  for (FailureTag t : kAllFailureTags) counts[t] = 0;
  for (const auto& trace : trajectory.traces) counts[trace.failure_tag] += 1;
  return counts;
}

std::vector<FailureTag> ranked_failures(const FailureCounts& counts) {
  std::vector<FailureTag> tags;
  for (FailureTag t : kAllFailureTags) {
    if (t == FailureTag::none) continue;
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) tags.push_back(t);
  }
  // kAllFailureTags is in declaration order, so a stable sort keeps ties ordered.
  std::stable_sort(tags.begin(), tags.end(),
                   [&](FailureTag a, FailureTag b) { return counts.at(a) > counts.at(b); });
  return tags;
}

namespace {

struct Edit {
  std::string rule_id;
  std::string knob;
  std::function<std::optional<Knobs>(const Knobs&)> apply;
};

std::string knob_value(const Knobs& k, const std::string& knob, const TaskSpec& spec) {
  if (knob == "parser_strictness") return std::string(to_string(k.parser));
  if (knob == "retry_budget") return std::to_string(k.retry_budget);
  if (knob == "feature_view") return spec.feature_views.at(static_cast<std::size_t>(k.feature_view));
  if (knob == "reranker_enabled") return k.reranker_enabled ? "true" : "false";
  if (knob == "samples_per_instance") return std::to_string(k.samples_per_instance);
  return "?";
}

Edit loosen_parser(std::string id) {
  return {std::move(id), "parser_strictness", [](const Knobs& k) -> std::optional<Knobs> {
            if (k.parser == ParserMode::structured_block) return std::nullopt;
            Knobs out = k;
            out.parser = k.parser == ParserMode::strict ? ParserMode::lenient : ParserMode::structured_block;
            return out;
          }};
}

Edit step_retry(std::string id, int delta) {
  return {std::move(id), "retry_budget", [delta](const Knobs& k) -> std::optional<Knobs> {
            const int next = k.retry_budget + delta;
            if (next < 0 || next > kMaxRetryBudget) return std::nullopt;
            Knobs out = k;
            out.retry_budget = next;
            return out;
          }};
}

Edit step_samples(std::string id, int delta) {
  return {std::move(id), "samples_per_instance", [delta](const Knobs& k) -> std::optional<Knobs> {
            const int next = k.samples_per_instance + delta;
            if (next < kMinSamples || next > kMaxSamples) return std::nullopt;
            Knobs out = k;
            out.samples_per_instance = next;
            return out;
          }};
}

Edit enable_reranker(std::string id) {
  return {std::move(id), "reranker_enabled", [](const Knobs& k) -> std::optional<Knobs> {
            if (k.reranker_enabled) return std::nullopt;
            Knobs out = k;
            out.reranker_enabled = true;
            return out;
          }};
}

Edit widen_view(std::string id, std::size_t view_count) {
  return {std::move(id), "feature_view", [view_count](const Knobs& k) -> std::optional<Knobs> {
            if (static_cast<std::size_t>(k.feature_view) + 1 >= view_count) return std::nullopt;
            Knobs out = k;
            out.feature_view = k.feature_view + 1;
            return out;
          }};
}

/// Repair chain for a failure tag, tried in order.
std::vector<Edit> rule_chain(FailureTag tag, std::size_t view_count) {
  switch (tag) {
    case FailureTag::parse_failure:
      return {loosen_parser("parse_failure.loosen_parser"), step_retry("parse_failure.add_retry", +1)};
    case FailureTag::tool_error:
      return {step_retry("tool_error.add_retry", +1)};
    case FailureTag::wrong_answer:
      return {enable_reranker("wrong_answer.enable_reranker"),
              widen_view("wrong_answer.widen_feature_view", view_count),
              step_samples("wrong_answer.add_sample", +1)};
    case FailureTag::invalid_config:
      return {enable_reranker("invalid_config.enable_reranker"),
              step_samples("invalid_config.add_sample", +1)};
    case FailureTag::timeout:
      return {step_samples("timeout.drop_sample", -1), step_retry("timeout.drop_retry", -1)};
    case FailureTag::none:
      break;
  }
  return {};
}

std::vector<Edit> hill_climb_order(std::size_t view_count) {
  return {loosen_parser("hill_climb.parser_strictness"), step_retry("hill_climb.retry_budget", +1),
          enable_reranker("hill_climb.reranker_enabled"),
          widen_view("hill_climb.feature_view", view_count),
          step_samples("hill_climb.samples_per_instance", +1)};
}

}  // namespace

HarnessUpdate propose_harness_update(const Scaffold& scaffold, const Trajectory& trajectory,
                                     const Metrics& metrics, const TaskSpec& spec) {
  if (trajectory.generation != scaffold.generation) {
    throw std::invalid_argument("propose_harness_update: trajectory generation " +
                                std::to_string(trajectory.generation) + " does not match scaffold generation " +
                                std::to_string(scaffold.generation));
  }
  const std::size_t views = spec.feature_views.size();
  const FailureCounts counts = classify_failures(trajectory);
  const std::vector<FailureTag> ranked = ranked_failures(counts);

  std::optional<Knobs> next;
  const Edit* fired = nullptr;
  std::vector<Edit> candidates;
  for (FailureTag tag : ranked) {
    for (auto& e : rule_chain(tag, views)) candidates.push_back(std::move(e));
  }
  const std::size_t rule_edits = candidates.size();
  const auto climb = hill_climb_order(views);
  const std::size_t start = static_cast<std::size_t>(scaffold.generation - 1) % climb.size();
  for (std::size_t i = 0; i < climb.size(); ++i) candidates.push_back(climb[(start + i) % climb.size()]);

  for (const auto& e : candidates) {
    if (auto k = e.apply(scaffold.knobs)) {
      next = std::move(k);
      fired = &e;
      break;
    }
  }

  HarnessUpdate out;
  out.scaffold = scaffold;
  out.scaffold.generation = scaffold.generation + 1;
  const std::string rule_id = fired ? fired->rule_id : "noop";
  if (next) {
    out.report.knob_diff.push_back({fired->knob, knob_value(scaffold.knobs, fired->knob, spec),
                                    knob_value(*next, fired->knob, spec)});
    out.scaffold.knobs = *next;
  }
  out.scaffold.provenance.push_back(rule_id);
  out.report.applied_rules.push_back(rule_id);

  std::ostringstream analysis;
  analysis << "generation " << scaffold.generation << ": " << trajectory.traces.size()
           << " traces, primary metric " << metrics.primary_metric << ";";
  if (ranked.empty()) {
    analysis << " no failures;";
  } else {
    analysis << " dominant failure " << to_string(ranked.front()) << " (" << counts.at(ranked.front())
             << ");";
  }
  if (!fired) {
    analysis << " all knobs at bounds, no edit";
  } else if (static_cast<std::size_t>(fired - candidates.data()) < rule_edits) {
    analysis << " repair rule " << rule_id;
  } else {
    analysis << " failure rules exhausted, hill-climb " << fired->knob;
  }
  if (next) {
    const auto& d = out.report.knob_diff.front();
    analysis << " (" << d.knob << ": " << d.before << " -> " << d.after << ")";
  }
  out.report.analysis = analysis.str();
  return out;
}

}  // namespace sia
