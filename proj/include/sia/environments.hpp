#pragma once

// Synthetic task environments and the scaffold-mediated evaluation pipeline.
//
// Each environment owns a fixed evaluation set and a training set, a
// deterministic verifier over action sequences, a proxy reranker used when
// the scaffold enables it, and the frozen base weights of its policy.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sia/core.hpp"
#include "sia/policy.hpp"
#include "sia/rng.hpp"
#include "sia/scaffold.hpp"

namespace sia {

enum class EnvKind { classify, kernel, denoise };

std::string_view to_string(EnvKind kind);
/// Throws std::invalid_argument on an unknown name.
EnvKind parse_env_kind(std::string_view text);

struct Instance {
  std::size_t id = 0;
  Eigen::VectorXd features;
  int label = -1;  ///< classify only
  OutputFormat format = OutputFormat::plain;
};

struct Verdict {
  double reward = 0.0;
  FailureTag tag = FailureTag::none;
};

/// Output-channel noise seen by the scaffold's parser and tool layer.
struct Channel {
  double malformed_rate = 0.0;
  double tool_error_rate = 0.0;
  int attempt_budget = 12;  ///< total tries per instance before a timeout
};

struct Optimum {
  std::vector<int> actions;
  double metric = 0.0;
  std::string description;
};

class Environment {
 public:
  virtual ~Environment() = default;

  EnvKind kind() const { return kind_; }
  std::uint64_t seed() const { return seed_; }
  const TaskSpec& task_spec() const { return spec_; }
  const std::vector<Instance>& eval_instances() const { return eval_; }
  const std::vector<Instance>& train_instances() const { return train_; }
  const Channel& channel() const { return channel_; }
  int horizon() const { return horizon_; }
  Eigen::Index feature_dim() const { return static_cast<Eigen::Index>(view_masks_.front().size()); }
  double target_metric() const { return target_metric_; }
  double base_temperature() const { return 1.0; }

  /// Instance features with entries outside the feature view zeroed.
  Eigen::VectorXd observe(const Instance& instance, int feature_view) const;
  /// Policy input at step `step` of an episode that started from `observation`.
  virtual Eigen::VectorXd step_state(const Eigen::VectorXd& observation, int step) const;

  virtual Verdict verify(const Instance& instance, const std::vector<int>& actions) const = 0;
  /// Index of the candidate the environment's proxy ranks first.
  virtual std::size_t rerank(const Instance& instance,
                             const std::vector<std::vector<int>>& candidates) const = 0;
  virtual std::string render_answer(const std::vector<int>& actions) const = 0;
  virtual Eigen::MatrixXd base_weights() const = 0;
  /// Exhaustive optimum; test oracle only.
  virtual Optimum brute_force_optimum() const = 0;

  Policyd make_policy(int rank, double init_scale, std::uint64_t seed) const;

  std::uint64_t content_hash() const;
  /// One line per instance, evaluation set first.
  void dump_instances(std::ostream& out) const;

 protected:
  Environment(EnvKind kind, std::uint64_t seed) : kind_(kind), seed_(seed) {}

  EnvKind kind_;
  std::uint64_t seed_;
  TaskSpec spec_;
  std::vector<std::vector<bool>> view_masks_;  ///< parallel to spec_.feature_views
  std::vector<Instance> eval_;
  std::vector<Instance> train_;
  Channel channel_;
  int horizon_ = 1;
  double target_metric_ = 1.0;
};

// Fine-grained classification: classes come in confusable pairs that share a
// coarse prototype and differ only in one fine feature the base ignores.
class ClassifySim final : public Environment {
 public:
  struct Params {
    int n_classes = 191;
    int n_train = 500;
    int n_test = 100;
    int coarse_dim = 16;
    int headline_dim = 8;
    double feature_noise = 0.3;
    double fine_scale = 3.0;
    double label_noise = 0.05;
    double sharpness = 12.0;
    double structured_fraction = 0.15;
    Channel channel{0.2, 0.1, 12};
  };

  ClassifySim(std::uint64_t seed, Params params);
  explicit ClassifySim(std::uint64_t seed) : ClassifySim(seed, Params{}) {}

  const Params& params() const { return params_; }
  int n_classes() const { return params_.n_classes; }
  /// Class sharing the coarse prototype, or the class itself if unpaired.
  int partner(int label) const;

  Verdict verify(const Instance& instance, const std::vector<int>& actions) const override;
  std::size_t rerank(const Instance& instance, const std::vector<std::vector<int>>& candidates) const override;
  std::string render_answer(const std::vector<int>& actions) const override;
  Eigen::MatrixXd base_weights() const override;
  Optimum brute_force_optimum() const override;

 private:
  Params params_;
  Eigen::MatrixXd prototypes_;  ///< coarse_dim x pairs, unit columns
};

struct KernelConfig {
  int tile = 0;
  int block = 0;
  int accumulator = 0;  ///< 0 = fp16, 1 = fp32
  int unroll = 0;
};

// Kernel configuration search: most of the grid fails to compile and the
// runtime surface has one sharp optimum.
class KernelSim final : public Environment {
 public:
  static constexpr int kTiles = 4;
  static constexpr int kBlocks = 4;
  static constexpr int kAccumulators = 2;
  static constexpr int kUnrolls = 4;
  static constexpr int kGridSize = kTiles * kBlocks * kAccumulators * kUnrolls;

  struct Params {
    int n_eval = 128;
    int n_train = 32;
    double penalty = 3.0;
    double fp16_penalty = 2.0;
    double optimum_runtime = 1017.0;
    Channel channel{0.1, 0.1, 12};
  };

  KernelSim(std::uint64_t seed, Params params);
  explicit KernelSim(std::uint64_t seed) : KernelSim(seed, Params{}) {}

  static KernelConfig decode(int action);
  static int encode(const KernelConfig& config);
  static bool compiles(const KernelConfig& config);
  double runtime(const KernelConfig& config) const;  ///< valid configs only

  Verdict verify(const Instance& instance, const std::vector<int>& actions) const override;
  std::size_t rerank(const Instance& instance, const std::vector<std::vector<int>>& candidates) const override;
  std::string render_answer(const std::vector<int>& actions) const override;
  Eigen::MatrixXd base_weights() const override;
  Optimum brute_force_optimum() const override;

 private:
  Params params_;
};

struct DenoiseConfig {
  int k = 0;      ///< neighbour-count index
  int t = 0;      ///< diffusion-steps index
  int alpha = 0;  ///< mixing-weight index
  bool clip_round = false;
};

// Denoising hyperparameter search over a smooth coupled surface, with a
// post-processing switch that only the policy can reach. Episodes have two
// steps: the first picks a configuration from the dataset features, the
// second sees only a step indicator and chooses clip or keep.
class DenoiseSim final : public Environment {
 public:
  static constexpr int kKs = 10;
  static constexpr int kTs = 10;
  static constexpr int kAlphas = 8;
  static constexpr int kConfigs = kKs * kTs * kAlphas;
  static constexpr int kClipAction = kConfigs;
  static constexpr int kKeepAction = kConfigs + 1;
  static constexpr int kActions = kConfigs + 2;
  /// Configuration used when the first step emits a post-processing action.
  static constexpr int kReferenceConfig = (2 * kTs + 5) * kAlphas + 3;

  struct Params {
    int n_eval = 64;
    int n_train = 32;
    double peak = 0.241;
    double clip_bonus = 0.048;
    double clip_prior = 0.015;  ///< base probability of clip at the second step
    Channel channel{0.15, 0.1, 12};
  };

  DenoiseSim(std::uint64_t seed, Params params);
  explicit DenoiseSim(std::uint64_t seed) : DenoiseSim(seed, Params{}) {}

  static DenoiseConfig decode(const std::vector<int>& actions);
  static std::vector<int> encode(const DenoiseConfig& config);
  Eigen::VectorXd step_state(const Eigen::VectorXd& observation, int step) const override;
  static int config_index(int k, int t, int alpha) { return (k * kTs + t) * kAlphas + alpha; }
  /// Normalised quality in [0, 1].
  double quality(const DenoiseConfig& config) const;

  Verdict verify(const Instance& instance, const std::vector<int>& actions) const override;
  std::size_t rerank(const Instance& instance, const std::vector<std::vector<int>>& candidates) const override;
  std::string render_answer(const std::vector<int>& actions) const override;
  Eigen::MatrixXd base_weights() const override;
  Optimum brute_force_optimum() const override;

 private:
  double surface(const DenoiseConfig& config) const;
  Params params_;
};

std::unique_ptr<Environment> make_environment(EnvKind kind, std::uint64_t seed);
std::unique_ptr<Environment> make_environment(std::string_view kind, std::uint64_t seed);

struct Evaluation {
  Trajectory trajectory;
  Metrics metrics;
};

/// Samples one episode: step t draws from pi(.|env.step_state(observation, t)).
Rolloutd sample_episode(const Environment& env, const Policyd& policy, const Eigen::VectorXd& observation,
                        Rng& rng, std::optional<double> temperature = {});

/// Runs every evaluation instance through the scaffold-mediated policy.
/// Each instance, candidate and retry draws from its own stream derived from
/// (seed, generation, instance, candidate, try).
Evaluation evaluate(const Environment& env, const Scaffold& scaffold, const Policyd& policy,
                    std::uint64_t seed);

/// Rollout groups on training instances for one weight-update step. The
/// scaffold's feature view shapes the state; rewards come from the verifier.
/// Each episode step has its own state, so an instance yields one group per
/// step, every rollout in it carrying the whole episode's reward.
std::vector<RolloutGroupd> collect_rollout_groups(const Environment& env, const Scaffold& scaffold,
                                                  const Policyd& policy, std::uint64_t seed,
                                                  int generation, int step, int groups, int group_size);

}  // namespace sia
