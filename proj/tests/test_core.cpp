#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "sia/core.hpp"
#include "sia/rng.hpp"

using namespace sia;

TEST_CASE("score_from_runtime reproduces the reported kernel scores") {
  CHECK(std::abs(score_from_runtime(1161.0) - 1.292) <= 0.001);
  CHECK(std::abs(score_from_runtime(1017.0) - 1.475) <= 0.001);
  CHECK(std::abs(score_from_runtime(12483.0) - 0.120) <= 0.001);
  CHECK_THROWS_AS(score_from_runtime(0.0), std::domain_error);
  CHECK_THROWS_AS(score_from_runtime(-3.0), std::domain_error);
  CHECK_THROWS_AS(score_from_runtime(NAN), std::domain_error);
}

TEST_CASE("score is strictly decreasing in runtime") {
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const double a = 1.0 + 20000.0 * rng.uniform();
    const double b = a + 1e-3 + 100.0 * rng.uniform();
    CHECK(score_from_runtime(a) > score_from_runtime(b));
  }
}

TEST_CASE("compare_metric") {
  CHECK(compare_metric(0.289, 0.241, MetricDirection::higher_better) == Ordering::improves);
  CHECK(compare_metric(0.5, 0.5, MetricDirection::higher_better) == Ordering::tie);
  CHECK(compare_metric(0.5, 0.5, MetricDirection::lower_better) == Ordering::tie);
  CHECK(compare_metric(1017, 12483, MetricDirection::lower_better) == Ordering::improves);
  CHECK(compare_metric(12483, 1017, MetricDirection::lower_better) == Ordering::worse);
  CHECK_FALSE(improves(1.0, 1.0, MetricDirection::higher_better));
}

TEST_CASE("compare_metric is antisymmetric") {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const double a = rng.uniform();
    const double b = rng.uniform();
    for (auto d : {MetricDirection::higher_better, MetricDirection::lower_better}) {
      const auto ab = compare_metric(a, b, d);
      const auto ba = compare_metric(b, a, d);
      if (ab == Ordering::improves) CHECK(ba == Ordering::worse);
      if (ab == Ordering::tie) CHECK(ba == Ordering::tie);
    }
  }
}

TEST_CASE("two-point reward distribution moments") {
  std::vector<double> r(1000, 0.0);
  std::fill(r.begin(), r.begin() + 50, 1.0);
  const Metrics m = summarize_rewards(1, 0.05, r, {});
  CHECK(m.zero_reward_fraction == doctest::Approx(0.95));
  CHECK(m.moments.mean == doctest::Approx(0.05));
  // (1 - 2p) / sqrt(p (1 - p)) for p = 0.05
  const double p = 0.05;
  CHECK(m.moments.skewness == doctest::Approx((1 - 2 * p) / std::sqrt(p * (1 - p))).epsilon(1e-9));
  CHECK(m.moments.skewness == doctest::Approx(4.13).epsilon(0.001));
}

TEST_CASE("symmetric rewards have zero skew") {
  const std::vector<double> r{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  CHECK(std::abs(reward_moments(r).skewness) < 1e-10);
}

TEST_CASE("metrics do not depend on instance order") {
  Rng rng(11);
  std::vector<double> r(97);
  for (double& x : r) x = rng.bernoulli(0.3) ? 0.0 : rng.uniform();
  const Metrics a = summarize_rewards(2, 0.4, r, {{FailureTag::wrong_answer, 4}});
  std::mt19937 shuffler(5);
  for (int k = 0; k < 20; ++k) {
    std::shuffle(r.begin(), r.end(), shuffler);
    const Metrics b = summarize_rewards(2, 0.4, r, {{FailureTag::wrong_answer, 4}});
    CHECK(b.moments.mean == a.moments.mean);
    CHECK(b.moments.variance == a.moments.variance);
    CHECK(b.moments.skewness == a.moments.skewness);
    CHECK(b.zero_reward_fraction == a.zero_reward_fraction);
    REQUIRE(b.reward_histogram.size() == a.reward_histogram.size());
    for (std::size_t i = 0; i < a.reward_histogram.size(); ++i)
      CHECK(b.reward_histogram[i].count == a.reward_histogram[i].count);
  }
  CHECK(a.failure_counts.size() == kAllFailureTags.size());
}

TEST_CASE("histogram covers every reward exactly once") {
  Rng rng(2);
  std::vector<double> r(333);
  for (double& x : r) x = rng.normal();
  const auto h = reward_histogram(r);
  std::size_t total = 0;
  for (const auto& b : h) total += b.count;
  CHECK(total == r.size());
  CHECK(h.size() == kHistogramBuckets);
  const std::vector<double> flat(10, 0.25);
  CHECK(reward_histogram(flat).size() == 1);
}

TEST_CASE("enum names round-trip") {
  for (Algorithm a : kAllAlgorithms) CHECK(parse_algorithm(to_string(a)) == a);
  for (FailureTag t : kAllFailureTags) CHECK(parse_failure_tag(to_string(t)) == t);
  CHECK_THROWS_AS(parse_algorithm("sgd"), std::invalid_argument);
}

TEST_CASE("validate_records") {
  auto rec = [](int g, LoopAction a, std::optional<Algorithm> alg) {
    GenerationRecord r;
    r.generation = g;
    r.action = a;
    r.algorithm = alg;
    r.metrics_before.generation = g;
    r.metrics_after.generation = g + 1;
    return r;
  };
  std::vector<GenerationRecord> ok{rec(1, LoopAction::harness_update, {}),
                                   rec(2, LoopAction::weight_update, Algorithm::grpo)};
  CHECK_NOTHROW(validate_records(ok));
  std::vector<GenerationRecord> gap{rec(1, LoopAction::harness_update, {}), rec(3, LoopAction::harness_update, {})};
  CHECK_THROWS_AS(validate_records(gap), std::invalid_argument);
  std::vector<GenerationRecord> missing_alg{rec(1, LoopAction::weight_update, {})};
  CHECK_THROWS_AS(validate_records(missing_alg), std::invalid_argument);
  std::vector<GenerationRecord> stray_alg{rec(1, LoopAction::harness_update, Algorithm::dpo)};
  CHECK_THROWS_AS(validate_records(stray_alg), std::invalid_argument);
}

TEST_CASE("config validation") {
  LoopConfig c;
  CHECK_NOTHROW(c.validate());
  c.group_size = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = LoopConfig{};
  c.algorithm.ess_floor = 9.0;  // exceeds group_size 8
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = LoopConfig{};
  c.algorithm.gamma = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("rng streams are reproducible and independent of call order") {
  Rng a = Rng::stream(42, {1, 2, 3});
  Rng b = Rng::stream(42, {1, 2, 3});
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(derive_stream(42, {1, 2}) != derive_stream(42, {2, 1}));
  CHECK(derive_stream(42, {1}) != derive_stream(43, {1}));
}
