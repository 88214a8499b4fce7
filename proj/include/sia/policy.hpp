#pragma once

// Softmax-linear policy with a frozen base weight matrix and a trainable
// low-rank adapter:
//
//   logits(s) = (B + L R)^T s / T,   pi(a|s) = softmax(logits(s))_a
//
// B is d x n and never changes after construction. L (d x r) and R (r x n)
// form the adapter, and a linear value head V(s) = phi^T s sits alongside.
// Gradients are expressed with respect to the effective weights W = B + L R
// and chained onto the adapter factors by `chain_to_adapter`.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sia/rng.hpp"

namespace sia {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// One sampled action sequence with the log-probabilities recorded at
/// sampling time under the current and the base policy.
template <typename Scalar>
struct Rollout {
  std::vector<int> actions;
  std::vector<Scalar> logp_current;
  std::vector<Scalar> logp_base;
  std::vector<Scalar> step_rewards;  ///< filled by the verifier; may be empty
  Scalar reward = 0;                 ///< scalar verifier score of the whole sequence

  std::size_t horizon() const { return actions.size(); }
};

/// G rollouts from one state: the unit consumed by the update objectives.
template <typename Scalar>
struct RolloutGroup {
  VectorX<Scalar> state;
  std::vector<Rollout<Scalar>> rollouts;

  std::size_t group_size() const { return rollouts.size(); }
};

/// Gradient of a scalar with respect to the trainable parameters.
template <typename Scalar>
struct AdapterGradient {
  MatrixX<Scalar> left;
  MatrixX<Scalar> right;
  VectorX<Scalar> value;

  Scalar squared_norm() const {
    return left.squaredNorm() + right.squaredNorm() + value.squaredNorm();
  }
  Scalar norm() const { return std::sqrt(squared_norm()); }
  AdapterGradient& operator+=(const AdapterGradient& other) {
    left += other.left;
    right += other.right;
    value += other.value;
    return *this;
  }
  AdapterGradient& operator*=(Scalar k) {
    left *= k;
    right *= k;
    value *= k;
    return *this;
  }
};

template <typename Scalar>
class Policy {
 public:
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;

  Policy() = default;

  Policy(Matrix base_weights, Matrix adapter_left, Matrix adapter_right, Vector value_head,
         Scalar temperature, std::vector<std::string> lineage = {})
      : base_(std::move(base_weights)),
        left_(std::move(adapter_left)),
        right_(std::move(adapter_right)),
        value_(std::move(value_head)),
        temperature_(temperature),
        lineage_(std::move(lineage)) {
    if (left_.rows() != base_.rows() || right_.cols() != base_.cols() ||
        left_.cols() != right_.rows() || left_.cols() < 1 || value_.size() != base_.rows()) {
      throw std::invalid_argument("policy: inconsistent parameter shapes");
    }
    if (!(temperature_ > Scalar(0))) throw std::invalid_argument("policy: temperature must be > 0");
  }

  /// Base policy plus a fresh adapter: L ~ N(0, (scale^2)/d), R = 0, phi = 0,
  /// so the effective policy starts exactly at the base policy.
  static Policy with_fresh_adapter(Matrix base_weights, int rank, Scalar temperature,
                                   std::uint64_t seed, Scalar init_scale = Scalar(1)) {
    if (rank < 1) throw std::invalid_argument("policy: adapter rank must be >= 1");
    const auto d = base_weights.rows();
    const auto n = base_weights.cols();
    Rng rng = Rng::stream(seed, {0x6164617074ull});
    const Scalar stddev = init_scale / std::sqrt(static_cast<Scalar>(d));
    Matrix left(d, rank);
    for (Eigen::Index j = 0; j < left.cols(); ++j) {
      for (Eigen::Index i = 0; i < left.rows(); ++i) left(i, j) = stddev * Scalar(rng.normal());
    }
    return Policy(std::move(base_weights), std::move(left), Matrix::Zero(rank, n),
                  Vector::Zero(d), temperature,
                  {"adapter_init:seed=" + std::to_string(seed) + ":rank=" + std::to_string(rank)});
  }

  Eigen::Index feature_dim() const { return base_.rows(); }
  Eigen::Index action_count() const { return base_.cols(); }
  int rank() const { return static_cast<int>(left_.cols()); }
  Scalar temperature() const { return temperature_; }

  const Matrix& base_weights() const { return base_; }
  const Matrix& adapter_left() const { return left_; }
  const Matrix& adapter_right() const { return right_; }
  const Vector& value_head() const { return value_; }
  const std::vector<std::string>& lineage() const { return lineage_; }

  Matrix effective_weights() const { return base_ + left_ * right_; }
  Matrix adapter_delta() const { return left_ * right_; }

  Vector logits(const Vector& state, std::optional<Scalar> temperature = {}) const {
    check_state(state);
    const Scalar t = temperature.value_or(temperature_);
    return (base_.transpose() * state + right_.transpose() * (left_.transpose() * state)) / t;
  }

  Vector base_logits(const Vector& state) const {
    check_state(state);
    return base_.transpose() * state / temperature_;
  }

  Scalar value(const Vector& state) const {
    check_state(state);
    return value_.dot(state);
  }

  Policy with_parameters(Matrix left, Matrix right, Vector value) const {
    return Policy(base_, std::move(left), std::move(right), std::move(value), temperature_, lineage_);
  }

  Policy with_lineage_entry(std::string entry) const {
    Policy out = *this;
    out.lineage_.push_back(std::move(entry));
    return out;
  }

  void check_state(const Vector& state) const {
    if (state.size() != base_.rows()) {
      throw std::invalid_argument("policy: state has dimension " + std::to_string(state.size()) +
                                  ", expected " + std::to_string(base_.rows()));
    }
  }

 private:
  Matrix base_;
  Matrix left_;
  Matrix right_;
  Vector value_;
  Scalar temperature_ = Scalar(1);
  std::vector<std::string> lineage_;
};

using Policyd = Policy<double>;
using Rolloutd = Rollout<double>;
using RolloutGroupd = RolloutGroup<double>;
using AdapterGradientd = AdapterGradient<double>;

// ---------------------------------------------------------------------------
// Free functions

template <typename Derived>
VectorX<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  VectorX<Scalar> p = (logits.array() - logits.maxCoeff()).exp().matrix();
  return p / p.sum();
}

template <typename Derived>
VectorX<typename Derived::Scalar> log_softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  const Scalar m = logits.maxCoeff();
  const Scalar lse = m + std::log((logits.array() - m).exp().sum());
  return (logits.array() - lse).matrix();
}

/// pi(.|s) under the effective weights.
template <typename Scalar>
VectorX<Scalar> action_distribution(const Policy<Scalar>& policy, const VectorX<Scalar>& state,
                                    std::optional<Scalar> temperature = {}) {
  return softmax(policy.logits(state, temperature));
}

/// pi_0(.|s) under the frozen base weights.
template <typename Scalar>
VectorX<Scalar> base_distribution(const Policy<Scalar>& policy, const VectorX<Scalar>& state) {
  return softmax(policy.base_logits(state));
}

/// KL(p || q) for categorical distributions.
template <typename Scalar>
Scalar categorical_kl(const VectorX<Scalar>& p, const VectorX<Scalar>& q) {
  Scalar kl = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) > Scalar(0)) kl += p(i) * (std::log(p(i)) - std::log(q(i)));
  }
  return kl;
}

/// Mean over states of KL(pi_theta(.|s) || pi_theta0(.|s)).
template <typename Scalar>
Scalar kl_to_base(const Policy<Scalar>& policy, std::span<const VectorX<Scalar>> states) {
  if (states.empty()) throw std::invalid_argument("kl_to_base: states must be non-empty");
  Scalar total = 0;
  for (const auto& s : states) {
    const VectorX<Scalar> lp = log_softmax(policy.logits(s));
    const VectorX<Scalar> lq = log_softmax(policy.base_logits(s));
    total += (lp.array().exp() * (lp - lq).array()).sum();
  }
  return std::max(Scalar(0), total / static_cast<Scalar>(states.size()));
}

/// Samples `horizon` actions from pi(.|state). The per-step log-probabilities
/// are recorded under the sampling temperature and under the base policy.
template <typename Scalar>
Rollout<Scalar> sample_rollout(const Policy<Scalar>& policy, const VectorX<Scalar>& state,
                               int horizon, Rng& rng, std::optional<Scalar> temperature = {}) {
  if (horizon < 1) throw std::invalid_argument("sample_rollout: horizon must be >= 1");
  const VectorX<Scalar> lp = log_softmax(policy.logits(state, temperature));
  const VectorX<Scalar> lq = log_softmax(policy.base_logits(state));
  std::vector<double> probs(static_cast<std::size_t>(lp.size()));
  for (Eigen::Index i = 0; i < lp.size(); ++i) probs[i] = static_cast<double>(std::exp(lp(i)));

  Rollout<Scalar> out;
  out.actions.reserve(horizon);
  for (int t = 0; t < horizon; ++t) {
    const auto a = static_cast<Eigen::Index>(rng.categorical(probs));
    out.actions.push_back(static_cast<int>(a));
    out.logp_current.push_back(lp(a));
    out.logp_base.push_back(lq(a));
  }
  return out;
}

/// Sum of log pi(a_t|s) over a sequence drawn from one state.
template <typename Scalar>
Scalar sequence_log_prob(const Policy<Scalar>& policy, const VectorX<Scalar>& state,
                         std::span<const int> actions) {
  const VectorX<Scalar> lp = log_softmax(policy.logits(state));
  Scalar total = 0;
  for (int a : actions) total += lp(a);
  return total;
}

/// Maps dLoss/dW (d x n, W the effective weights) onto the adapter factors.
template <typename Scalar>
AdapterGradient<Scalar> chain_to_adapter(const Policy<Scalar>& policy, const MatrixX<Scalar>& d_weights) {
  AdapterGradient<Scalar> g;
  g.left = d_weights * policy.adapter_right().transpose();
  g.right = policy.adapter_left().transpose() * d_weights;
  g.value = VectorX<Scalar>::Zero(policy.feature_dim());
  return g;
}

template <typename Scalar>
AdapterGradient<Scalar> zero_gradient(const Policy<Scalar>& policy) {
  return {MatrixX<Scalar>::Zero(policy.adapter_left().rows(), policy.adapter_left().cols()),
          MatrixX<Scalar>::Zero(policy.adapter_right().rows(), policy.adapter_right().cols()),
          VectorX<Scalar>::Zero(policy.value_head().size())};
}

/// Plain gradient descent on the adapter and value head: theta <- theta - lr * g.
/// Objectives that are maximised pass their negated gradient. The base weights
/// are copied untouched.
template <typename Scalar>
Policy<Scalar> apply_gradient_step(const Policy<Scalar>& policy, const AdapterGradient<Scalar>& grad,
                                   Scalar learning_rate) {
  if (grad.left.rows() != policy.adapter_left().rows() ||
      grad.left.cols() != policy.adapter_left().cols() ||
      grad.right.rows() != policy.adapter_right().rows() ||
      grad.right.cols() != policy.adapter_right().cols() ||
      grad.value.size() != policy.value_head().size()) {
    throw std::invalid_argument("apply_gradient_step: gradient shape mismatch");
  }
  return policy.with_parameters(policy.adapter_left() - learning_rate * grad.left,
                                policy.adapter_right() - learning_rate * grad.right,
                                policy.value_head() - learning_rate * grad.value);
}

template <typename Scalar>
std::uint64_t base_hash(const Policy<Scalar>& policy) {
  return Fnv1a{}.matrix(policy.base_weights()).digest();
}

/// Hash over every parameter, including temperature.
template <typename Scalar>
std::uint64_t content_hash(const Policy<Scalar>& policy) {
  return Fnv1a{}
      .matrix(policy.base_weights())
      .matrix(policy.adapter_left())
      .matrix(policy.adapter_right())
      .matrix(policy.value_head())
      .value(policy.temperature())
      .digest();
}

}  // namespace sia
