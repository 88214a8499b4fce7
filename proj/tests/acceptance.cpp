// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "sia/orchestrator.hpp"

using namespace sia;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

constexpr std::uint64_t kSeeds[] = {42, 43, 44, 45, 46};
constexpr EnvKind kEnvs[] = {EnvKind::classify, EnvKind::kernel, EnvKind::denoise};

struct SeedRuns {
  RunResult baseline;
  RunResult harness;
  RunResult full;
};

/// The 45 end-to-end runs shared by criteria 7 through 10.
std::map<std::pair<EnvKind, std::uint64_t>, SeedRuns>& runs() {
  static std::map<std::pair<EnvKind, std::uint64_t>, SeedRuns> cache = [] {
    std::map<std::pair<EnvKind, std::uint64_t>, SeedRuns> out;
    for (EnvKind env : kEnvs) {
      for (std::uint64_t seed : kSeeds) {
        LoopConfig c;
        c.seed = seed;
        c.max_generations = 40;
        out.emplace(std::pair{env, seed}, SeedRuns{run_loop(c, env, RunMode::baseline),
                                                  run_loop(c, env, RunMode::sia_h),
                                                  run_loop(c, env, RunMode::sia_wh)});
      }
    }
    return out;
  }();
  return cache;
}

std::string label(EnvKind env, std::uint64_t seed) {
  return std::string(to_string(env)) + " seed " + std::to_string(seed);
}

Outcome score_arithmetic() {
  Outcome o;
  const std::pair<double, double> table[] = {{1161.0, 1.292}, {1017.0, 1.475}, {12483.0, 0.120}};
  for (const auto& [runtime, score] : table) {
    o.require(std::abs(score_from_runtime(runtime) - score) <= 1e-3, "runtime " + std::to_string(runtime));
  }
  return o;
}

Outcome gradient_oracles() {
  Outcome o;
  constexpr int kSeedsChecked = 20;
  double worst = 0.0;
  auto check = [&](const std::string& name, const Policyd& p, const std::function<double(const Policyd&)>& loss,
                   const AdapterGradient<double>& analytic) {
    const double err = oracle::relative_error(oracle::flatten(analytic), oracle::finite_difference(p, loss, 1e-5));
    worst = std::max(worst, err);
    o.require(err < 1e-4, name + " relative error " + std::to_string(err));
  };
  for (std::uint64_t seed = 0; seed < kSeedsChecked; ++seed) {
    const Policyd p = oracle::random_policy(seed + 7000, 3, 3, 2);
    const auto groups = fixture::random_groups(p, seed + 7100);
    const auto adv = fixture::random_advantages(groups, seed + 7200);
    check("ppo_clip", p, [&](const Policyd& q) { return ppo_clip_loss<double>(groups, adv, q, 0.2).loss; },
          ppo_clip_loss<double>(groups, adv, p, 0.2).grad);
    check("reinforce_kl", p, [&](const Policyd& q) { return reinforce_kl_loss<double>(groups, q, 0.95, 0.1).loss; },
          reinforce_kl_loss<double>(groups, p, 0.95, 0.1).grad);

    Rng rng(seed + 7300);
    std::vector<Demonstrationd> demos;
    std::vector<PreferencePaird> pairs;
    for (int i = 0; i < 4; ++i) {
      demos.push_back({oracle::random_state(rng), {int(rng.index(3)), int(rng.index(3))}});
      pairs.push_back({oracle::random_state(rng), {int(rng.index(3))}, {int(rng.index(3)), int(rng.index(3))}});
    }
    check("bc", p, [&](const Policyd& q) { return bc_loss<double>(demos, q).loss; }, bc_loss<double>(demos, p).grad);
    check("dpo", p, [&](const Policyd& q) { return dpo_loss<double>(pairs, q, 0.5).loss; },
          dpo_loss<double>(pairs, p, 0.5).grad);
  }
  if (o.pass) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "20 seeds x 4 objectives, worst relative error %.2e", worst);
    o.detail = buf;
  }
  return o;
}

Outcome grpo_invariants() {
  Outcome o;
  Rng rng(8000);
  for (int k = 0; k < 500; ++k) {
    std::vector<double> r(2 + rng.index(30));
    for (double& x : r) x = rng.bernoulli(0.3) ? 0.0 : 5.0 * rng.normal();
    const auto a = grpo_advantages(r);
    const auto [m_r, sd_r] = oracle::mean_std(r);
    if (sd_r <= kGroupStdGuard) continue;
    const auto [mean, sd] = oracle::mean_std(a);
    o.require(std::abs(mean) < 1e-10, "mean " + std::to_string(mean));
    o.require(std::abs(sd - 1.0) < 1e-8, "std " + std::to_string(sd));
  }
  for (int k = 0; k < 500; ++k) {
    std::vector<double> r(std::size_t{1} << (1 + rng.index(5)));
    for (double& x : r) x = static_cast<double>(rng.index(256)) / 32.0;
    std::vector<double> shifted = r, scaled = r;
    const double c = static_cast<double>(rng.index(2001)) - 1000.0;
    const double s = std::ldexp(1.0, static_cast<int>(rng.index(17)) - 8);
    for (double& x : shifted) x += c;
    for (double& x : scaled) x *= s;
    o.require(grpo_advantages(shifted) == grpo_advantages(r), "shift invariance");
    o.require(grpo_advantages(scaled) == grpo_advantages(r), "scale invariance");
    const std::vector<double> flat(r.size(), r.front());
    for (double x : grpo_advantages(flat)) o.require(x == 0.0, "degenerate group");
  }
  return o;
}

Outcome entropic_invariants() {
  Outcome o;
  Rng rng(8100);
  for (int k = 0; k < 100; ++k) {
    std::vector<double> r(4 + rng.index(29));
    for (double& x : r) x = rng.bernoulli(0.7) ? 0.0 : std::exp(rng.normal());
    const double beta = 0.01 + 2.0 * rng.uniform();
    const auto w = entropic_weights(r, beta);
    double total = 0.0;
    for (double x : w) total += x;
    o.require(std::abs(total - 1.0) <= 1e-12, "weights sum");

    const double floor = 2.0 + (static_cast<double>(r.size()) - 2.0) * rng.uniform();
    const double adapted = adapt_beta(r, floor, 1.0);
    o.require(effective_sample_size(entropic_weights(r, adapted)) >= floor - 1e-6, "ESS below floor");

    for (double x : entropic_weights(r, 1e12)) o.require(std::abs(x - 1.0 / double(r.size())) <= 1e-6, "uniform limit");

    std::vector<double> d(r.size()), shifted(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
      d[i] = static_cast<double>(rng.index(128)) / 64.0;
      shifted[i] = d[i] - 512.0;
    }
    o.require(entropic_weights(shifted, beta) == entropic_weights(d, beta), "shift invariance");
  }
  return o;
}

Outcome gae_limit() {
  Outcome o;
  Rng rng(8200);
  for (int k = 0; k < 200; ++k) {
    std::vector<double> r(1 + rng.index(10));
    for (double& x : r) x = rng.normal();
    const auto adv = compute_gae<double>(r, std::vector<double>(r.size() + 1, 0.0), 1.0, 1.0);
    double suffix = 0.0;
    for (std::size_t t = r.size(); t-- > 0;) {
      suffix += r[t];
      o.require(adv[t] == suffix, "suffix sum");
    }
  }
  const auto worked = compute_gae<double>({1.0, 0.0}, {0.5, 0.25, 0.0}, 0.9, 0.8);
  o.require(std::abs(worked[0] - 0.545) <= 1e-12 && std::abs(worked[1] + 0.25) <= 1e-12, "worked example");
  return o;
}

Outcome dpo_identity() {
  Outcome o;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    // A fresh adapter is exactly the base policy.
    const Policyd p = Policyd::with_fresh_adapter(oracle::random_policy(seed).base_weights(), 2, 1.0, seed);
    Rng rng(seed + 8300);
    const PreferencePaird pair{oracle::random_state(rng), {int(rng.index(3))}, {int(rng.index(3))}};
    const double loss = dpo_loss<double>(pair, p, 0.1 + rng.uniform()).loss;
    o.require(std::abs(loss - std::log(2.0)) <= 1e-12, "loss " + std::to_string(loss));
  }
  return o;
}

Outcome lever_exclusivity() {
  Outcome o;
  int harness_steps = 0, weight_steps = 0;
  for (const auto& [key, seed_runs] : runs()) {
    for (const RunResult* run : {&seed_runs.harness, &seed_runs.full}) {
      const auto events = parse_event_log(run->log.text());
      const std::string base = events.front().payload.at("base_hash");
      nlohmann::json start;
      for (const auto& e : events) {
        if (e.kind == EventKind::generation_start) start = e.payload;
        if (e.kind != EventKind::generation_end) continue;
        o.require(e.payload.at("base_hash") == base, label(key.first, key.second) + ": base hash moved");
        const auto& action = e.payload.at("action");
        if (action == "harness_update") {
          ++harness_steps;
          o.require(e.payload.at("policy_hash") == start.at("policy_hash"),
                    label(key.first, key.second) + ": harness update changed the policy");
        } else if (action == "weight_update") {
          ++weight_steps;
          o.require(e.payload.at("scaffold_hash") == start.at("scaffold_hash"),
                    label(key.first, key.second) + ": weight update changed the scaffold");
        }
      }
    }
  }
  o.require(harness_steps > 0 && weight_steps > 0, "both levers must be exercised");
  if (o.pass) {
    o.detail = std::to_string(harness_steps) + " harness and " + std::to_string(weight_steps) + " weight updates checked";
  }
  return o;
}

Outcome controller_conformance() {
  Outcome o;
  const std::map<EnvKind, std::string> expected{
      {EnvKind::classify, "ppo_gae"}, {EnvKind::kernel, "entropic"}, {EnvKind::denoise, "grpo"}};
  for (const auto& [key, seed_runs] : runs()) {
    std::string first;
    for (const auto& e : parse_event_log(seed_runs.full.log.text())) {
      if (e.kind == EventKind::decision && e.payload.contains("algorithm")) {
        first = e.payload.at("algorithm");
        break;
      }
    }
    o.require(first == expected.at(key.first),
              label(key.first, key.second) + ": first algorithm '" + first + "'");
  }

  Rng rng(8400);
  for (int k = 0; k < 1000; ++k) {
    std::vector<double> h(1 + rng.index(15));
    for (double& x : h) x = 0.05 + rng.uniform();
    const int w = 2 + static_cast<int>(rng.index(4));
    const auto dir = rng.bernoulli(0.5) ? MetricDirection::higher_better : MetricDirection::lower_better;
    const double d1 = 0.1 * rng.uniform();
    const double d2 = d1 + 0.1 * rng.uniform();
    if (detect_plateau(h, w, d1, dir)) o.require(detect_plateau(h, w, d2, dir), "plateau not monotone in delta");
  }
  return o;
}

Outcome end_to_end_ordering() {
  Outcome o;
  std::ostringstream tally;
  for (EnvKind env : kEnvs) {
    int wins = 0;
    for (std::uint64_t seed : kSeeds) {
      const SeedRuns& r = runs().at({env, seed});
      const MetricDirection dir = r.full.report.direction;
      const double initial = r.baseline.report.initial;
      const double h = r.harness.report.sia_h_best;
      const double wh = r.full.report.sia_wh_best;
      const bool ordered = !improves(initial, h, dir) && improves(wh, h, dir);
      wins += ordered;
      std::printf("  %-8s seed %llu: initial %.4f  sia_h_best %.4f  sia_wh_best %.4f  %s\n",
                  std::string(to_string(env)).c_str(), static_cast<unsigned long long>(seed), initial, h, wh,
                  ordered ? "ordered" : "NOT ordered");
    }
    const int needed = env == EnvKind::denoise ? 5 : 4;
    o.require(wins >= needed, std::string(to_string(env)) + " ordered on " + std::to_string(wins) + "/5 seeds");
    tally << to_string(env) << ' ' << wins << "/5 ";
  }
  if (o.pass) o.detail = tally.str();
  return o;
}

Outcome determinism_and_replay() {
  Outcome o;
  for (EnvKind env : kEnvs) {
    LoopConfig c;
    c.seed = kSeeds[0];
    const RunResult again = run_loop(c, env, RunMode::sia_wh);
    o.require(again.log.text() == runs().at({env, kSeeds[0]}).full.log.text(),
              std::string(to_string(env)) + ": logs differ between identical runs");
  }
  for (const auto& [key, seed_runs] : runs()) {
    for (const RunResult* run : {&seed_runs.baseline, &seed_runs.harness, &seed_runs.full}) {
      const std::uint64_t draws = Rng::total_draws();
      const RunReport replayed = replay(parse_event_log(run->log.text()));
      o.require(Rng::total_draws() == draws, "replay drew random numbers");
      o.require(emit_report_csv(replayed) == emit_report_csv(run->report),
                label(key.first, key.second) + ": replayed report differs");
    }
  }
  return o;
}

Outcome convergence_smoke() {
  Outcome o;
  const AlgorithmConfig cfg;
  const Eigen::VectorXd s = Eigen::VectorXd::Ones(1);

  Policyd bandit = Policyd::with_fresh_adapter(Eigen::MatrixXd::Zero(1, 2), 2, 1.0, 8500);
  Rng rng(8501);
  int steps = 0;
  while (steps < 200 && action_distribution(bandit, s)(0) <= 0.9) {
    const auto groups = fixture::bandit_groups(bandit, rng, 4, 8, [](int a) { return a == 0 ? 1.0 : 0.0; });
    bandit = ppo_update<double>(groups, bandit, cfg).policy;
    ++steps;
  }
  o.require(action_distribution(bandit, s)(0) > 0.9, "PPO bandit did not reach P > 0.9 in 200 steps");
  std::string detail = "PPO bandit solved in " + std::to_string(steps) + " steps";

  // Cold start: 100 actions, only action 0 pays, so the base expects 0.01.
  TaskSpec spec;
  spec.reward_kind = RewardKind::terminal_scalar;
  ControllerConfig ccfg;
  Policyd toy = Policyd::with_fresh_adapter(Eigen::MatrixXd::Zero(1, 100), 2, 1.0, 8600);
  const auto reward = [](int a) { return a == 0 ? 1.0 : 0.0; };
  auto diagnose_now = [&](int generation) {
    std::vector<double> rewards;
    for (const auto& g : fixture::bandit_groups(toy, rng, 50, 40, reward))
      for (const auto& r : g.rollouts) rewards.push_back(r.reward);
    double mean = 0.0;
    for (double x : rewards) mean += x;
    mean /= static_cast<double>(rewards.size());
    const std::vector<Metrics> hist{summarize_rewards(generation, mean, rewards, {})};
    return diagnose(hist, spec, ccfg);
  };

  RewardDiagnosis d = diagnose_now(1);
  const Algorithm first = select_algorithm(d, ccfg.skew_threshold).algorithm;
  o.require(first == Algorithm::best_of_n_bc, "cold start did not pick best_of_n_bc");
  int bc_steps = 0;
  while (bc_steps < 200 && d.near_zero_expectation) {
    for (int k = 0; k < 5; ++k, ++bc_steps) {
      toy = bc_update<double>(fixture::bandit_groups(toy, rng, 16, 8, reward), toy, cfg).policy;
    }
    d = diagnose_now(2 + bc_steps);
  }
  const Algorithm next = select_algorithm(d, ccfg.skew_threshold).algorithm;
  o.require(next != Algorithm::best_of_n_bc, "BC never lifted the mean above the floor");
  o.detail = detail + "; BC lifted mean reward to " + std::to_string(d.mean_reward) + " after " +
             std::to_string(bc_steps) + " steps, handoff to " + std::string(to_string(next));
  return o;
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"score arithmetic", score_arithmetic},
      {"gradient oracle suite", gradient_oracles},
      {"GRPO invariants", grpo_invariants},
      {"entropic invariants", entropic_invariants},
      {"GAE limit", gae_limit},
      {"DPO identity", dpo_identity},
      {"frozen base and lever exclusivity", lever_exclusivity},
      {"controller conformance", controller_conformance},
      {"end-to-end ordering", end_to_end_ordering},
      {"determinism and replay", determinism_and_replay},
      {"convergence smoke test", convergence_smoke},
  };
  int failed = 0;
  int n = 0;
  for (const auto& [name, run] : criteria) {
    ++n;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2d %s%s%s\n", o.pass ? "PASS" : "FAIL", n, name, o.detail.empty() ? "" : ": ",
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
