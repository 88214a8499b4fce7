#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "sia/policy.hpp"
#include "sia/rl_updates.hpp"

using namespace sia;

TEST_CASE("zero weights give the uniform distribution") {
  const Policyd p(Eigen::MatrixXd::Zero(3, 4), Eigen::MatrixXd::Zero(3, 2), Eigen::MatrixXd::Zero(2, 4),
                  Eigen::VectorXd::Zero(3), 1.0);
  const Eigen::VectorXd probs = action_distribution(p, Eigen::VectorXd::Ones(3).eval());
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(probs(i) == doctest::Approx(0.25));
}

TEST_CASE("fresh adapter reproduces the base policy") {
  Rng rng(1);
  Eigen::MatrixXd base(3, 5);
  for (Eigen::Index i = 0; i < base.size(); ++i) base.data()[i] = rng.normal();
  const Policyd p = Policyd::with_fresh_adapter(base, 2, 1.0, 99);
  CHECK(p.adapter_right().isZero());
  for (int k = 0; k < 10; ++k) {
    const Eigen::VectorXd s = oracle::random_state(rng);
    CHECK((action_distribution(p, s) - base_distribution(p, s)).cwiseAbs().maxCoeff() == 0.0);
  }
  const std::vector<Eigen::VectorXd> states{Eigen::VectorXd::Ones(3)};
  CHECK(kl_to_base<double>(p, states) == 0.0);
}

TEST_CASE("a dominant logit takes all the mass") {
  Eigen::MatrixXd base = Eigen::MatrixXd::Zero(1, 3);
  base(0, 1) = 40.0;
  const Policyd p(base, Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Zero(1, 3), Eigen::VectorXd::Zero(1), 1.0);
  const Eigen::VectorXd probs = action_distribution(p, Eigen::VectorXd::Ones(1).eval());
  CHECK(probs(1) >= 1.0 - 1e-6);
}

TEST_CASE("action distribution matches a longhand softmax") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Policyd p = oracle::random_policy(seed, 4, 6, 3);
    Rng rng(seed + 100);
    const Eigen::VectorXd s = oracle::random_state(rng, 4);
    const auto want = oracle::probabilities(oracle::logits_of(p, s));
    const Eigen::VectorXd got = action_distribution(p, s);
    for (std::size_t a = 0; a < want.size(); ++a) CHECK(got(static_cast<Eigen::Index>(a)) == doctest::Approx(want[a]));
  }
}

TEST_CASE("sampling is deterministic per seed") {
  const Policyd p = oracle::random_policy(5);
  const Eigen::VectorXd s = Eigen::VectorXd::Ones(3);
  Rng a(77);
  Rng b(77);
  const Rolloutd ra = sample_rollout(p, s, 6, a);
  const Rolloutd rb = sample_rollout(p, s, 6, b);
  CHECK(ra.actions == rb.actions);
  CHECK(ra.logp_current == rb.logp_current);
  Rng c(78);
  CHECK(sample_rollout(p, s, 1, c).actions.size() == 1);
  CHECK_THROWS_AS(sample_rollout(p, s, 0, c), std::invalid_argument);
}

TEST_CASE("empirical frequencies lie within 3 sigma of the exact distribution") {
  const Policyd p = oracle::random_policy(9, 3, 4, 2);
  const Eigen::VectorXd s = (Eigen::VectorXd(3) << 0.3, -1.0, 0.7).finished();
  const Eigen::VectorXd probs = action_distribution(p, s);
  constexpr int kSamples = 10000;
  std::vector<int> counts(4, 0);
  Rng rng(2024);
  for (int i = 0; i < kSamples; ++i) counts[static_cast<std::size_t>(sample_rollout(p, s, 1, rng).actions[0])] += 1;
  for (int a = 0; a < 4; ++a) {
    const double pa = probs(a);
    const double sigma = std::sqrt(pa * (1 - pa) / kSamples);
    CHECK(std::abs(counts[static_cast<std::size_t>(a)] / double(kSamples) - pa) <= 3 * sigma);
  }
}

TEST_CASE("categorical KL closed form") {
  const Eigen::VectorXd p = (Eigen::VectorXd(2) << 0.9, 0.1).finished();
  const Eigen::VectorXd q = (Eigen::VectorXd(2) << 0.5, 0.5).finished();
  const double closed = 0.9 * std::log(0.9 / 0.5) + 0.1 * std::log(0.1 / 0.5);
  CHECK(categorical_kl(p, q) == doctest::Approx(closed).epsilon(1e-12));
  CHECK(std::abs(categorical_kl(p, q) - 0.3681) <= 1e-4);
}

TEST_CASE("KL to base is non-negative for any adapter") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Policyd p = oracle::random_policy(seed);
    Rng rng(seed);
    std::vector<Eigen::VectorXd> states;
    for (int i = 0; i < 4; ++i) states.push_back(oracle::random_state(rng));
    CHECK(kl_to_base<double>(p, states) >= 0.0);
  }
}

TEST_CASE("gradient steps never touch the base weights") {
  const Policyd p = oracle::random_policy(3);
  const auto before = base_hash(p);
  CHECK(base_hash(apply_gradient_step(p, zero_gradient(p), 0.1)) == before);
  CHECK(content_hash(apply_gradient_step(p, zero_gradient(p), 0.1)) == content_hash(p));
  AdapterGradient<double> g = zero_gradient(p);
  g.left.setOnes();
  g.right.setOnes();
  const Policyd q = apply_gradient_step(p, g, 0.1);
  CHECK(base_hash(q) == before);
  CHECK(content_hash(q) != content_hash(p));
}

TEST_CASE("one REINFORCE step on a favourable bandit raises P(action 0)") {
  const Policyd p = Policyd::with_fresh_adapter(Eigen::MatrixXd::Zero(1, 2), 1, 1.0, 4);
  RolloutGroupd group;
  group.state = Eigen::VectorXd::Ones(1);
  for (int a : {0, 1, 0, 1}) {
    Rolloutd r;
    r.actions = {a};
    r.logp_current = {std::log(0.5)};
    r.logp_base = {std::log(0.5)};
    r.reward = a == 0 ? 1.0 : 0.0;
    group.rollouts.push_back(r);
  }
  const std::vector<RolloutGroupd> groups{group};
  const auto lg = reinforce_kl_loss<double>(groups, p, 1.0, 0.0);
  // Fresh adapter has R = 0, so only the right factor moves on the first step.
  const Policyd q = apply_gradient_step(p, lg.grad, 0.5);
  CHECK(action_distribution(q, group.state)(0) > 0.5);
}

TEST_CASE("shape errors are rejected") {
  CHECK_THROWS_AS(Policyd(Eigen::MatrixXd::Zero(3, 2), Eigen::MatrixXd::Zero(2, 1), Eigen::MatrixXd::Zero(1, 2),
                          Eigen::VectorXd::Zero(3), 1.0),
                  std::invalid_argument);
  const Policyd p = oracle::random_policy(1);
  CHECK_THROWS_AS(p.logits(Eigen::VectorXd::Zero(4)), std::invalid_argument);
}
