#include "sia/environments.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "sia/rng.hpp"

namespace sia {

namespace {

// Stream domain for instance generation.
constexpr std::uint64_t kEnvDomain = 0x656e76;

std::vector<bool> mask_first(Eigen::Index dim, Eigen::Index keep) {
  std::vector<bool> m(static_cast<std::size_t>(dim), false);
  for (Eigen::Index i = 0; i < std::min(dim, keep); ++i) m[static_cast<std::size_t>(i)] = true;
  return m;
}

std::vector<SampleInstance> sample_set(const std::vector<Instance>& pool, std::size_t n, const std::string& prefix) {
  std::vector<SampleInstance> out;
  for (std::size_t i = 0; i < std::min(n, pool.size()); ++i) {
    out.push_back({prefix + std::to_string(pool[i].id), pool[i].format});
  }
  return out;
}

}  // namespace

std::string_view to_string(EnvKind kind) {
  switch (kind) {
    case EnvKind::classify: return "classify";
    case EnvKind::kernel: return "kernel";
    case EnvKind::denoise: return "denoise";
  }
  return "unknown";
}

EnvKind parse_env_kind(std::string_view text) {
  for (EnvKind k : {EnvKind::classify, EnvKind::kernel, EnvKind::denoise}) {
    if (to_string(k) == text) return k;
  }
  throw std::invalid_argument("unknown environment kind: '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Environment

Eigen::VectorXd Environment::observe(const Instance& instance, int feature_view) const {
  const auto& mask = view_masks_.at(static_cast<std::size_t>(feature_view));
  Eigen::VectorXd s = instance.features;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (!mask[static_cast<std::size_t>(i)]) s(i) = 0.0;
  }
  return s;
}

Eigen::VectorXd Environment::step_state(const Eigen::VectorXd& observation, int) const { return observation; }

Policyd Environment::make_policy(int rank, double init_scale, std::uint64_t seed) const {
  return Policyd::with_fresh_adapter(base_weights(), rank, base_temperature(), seed, init_scale);
}

std::uint64_t Environment::content_hash() const {
  Fnv1a h;
  h.text(to_string(kind_)).value(seed_);
  for (const auto* set : {&eval_, &train_}) {
    h.value(set->size());
    for (const auto& inst : *set) {
      h.value(inst.id).value(inst.label).value(static_cast<int>(inst.format)).matrix(inst.features);
    }
  }
  return h.digest();
}

void Environment::dump_instances(std::ostream& out) const {
  auto dump = [&](const char* split, const std::vector<Instance>& set) {
    for (const auto& inst : set) {
      std::ostringstream feats;
      feats.precision(17);
      for (Eigen::Index i = 0; i < inst.features.size(); ++i) {
        feats << (i ? "," : "") << inst.features(i);
      }
      out << "task=" << to_string(kind_) << " split=" << split << " id=" << inst.id
          << " label=" << inst.label << " format=" << to_string(inst.format) << " features=" << feats.str()
          << '\n';
    }
  };
  dump("eval", eval_);
  dump("train", train_);
}

// ---------------------------------------------------------------------------
// ClassifySim

ClassifySim::ClassifySim(std::uint64_t seed, Params params) : Environment(EnvKind::classify, seed), params_(params) {
  const int pairs = (params_.n_classes + 1) / 2;
  const Eigen::Index dim = 2 + params_.coarse_dim;  // bias, coarse block, fine feature
  const Eigen::Index fine = dim - 1;

  Rng proto_rng = Rng::stream(seed, {kEnvDomain, 1});
  prototypes_.resize(params_.coarse_dim, pairs);
  for (int j = 0; j < pairs; ++j) {
    for (int i = 0; i < params_.coarse_dim; ++i) prototypes_(i, j) = proto_rng.normal();
    prototypes_.col(j).normalize();
  }

  auto make = [&](std::size_t id, Rng& rng, bool eval) {
    Instance inst;
    inst.id = id;
    const int c = static_cast<int>(rng.index(static_cast<std::size_t>(params_.n_classes)));
    const double parity = c % 2 == 0 ? 1.0 : -1.0;
    inst.features = Eigen::VectorXd::Zero(dim);
    inst.features(0) = 1.0;
    for (int i = 0; i < params_.coarse_dim; ++i) {
      inst.features(1 + i) = prototypes_(i, c / 2) + params_.feature_noise * rng.normal();
    }
    inst.features(fine) = params_.fine_scale * parity + params_.feature_noise * rng.normal();
    inst.label = rng.bernoulli(params_.label_noise) ? partner(c) : c;
    const bool structured = rng.bernoulli(params_.structured_fraction);
    inst.format = eval && structured ? OutputFormat::structured : OutputFormat::plain;
    return inst;
  };
  Rng train_rng = Rng::stream(seed, {kEnvDomain, 2});
  for (int i = 0; i < params_.n_train; ++i) train_.push_back(make(static_cast<std::size_t>(i), train_rng, false));
  Rng test_rng = Rng::stream(seed, {kEnvDomain, 3});
  for (int i = 0; i < params_.n_test; ++i) eval_.push_back(make(static_cast<std::size_t>(i), test_rng, true));

  spec_.task_id = "classify";
  spec_.description = "fine-grained " + std::to_string(params_.n_classes) +
                      "-way classification with confusable class pairs";
  spec_.sample_instances = sample_set(train_, 8, "train-");
  spec_.reward_kind = RewardKind::dense_per_step;
  spec_.metric_direction = MetricDirection::higher_better;
  spec_.feature_views = {"headline", "coarse", "full"};
  view_masks_ = {mask_first(dim, 1 + params_.headline_dim), mask_first(dim, 1 + params_.coarse_dim),
                 mask_first(dim, dim)};
  channel_ = params_.channel;
  horizon_ = 1;
  target_metric_ = 1.0;
}

int ClassifySim::partner(int label) const {
  const int p = label ^ 1;
  return p < params_.n_classes ? p : label;
}

Verdict ClassifySim::verify(const Instance& instance, const std::vector<int>& actions) const {
  if (actions.empty()) return {0.0, FailureTag::wrong_answer};
  return actions.front() == instance.label ? Verdict{1.0, FailureTag::none} : Verdict{0.0, FailureTag::wrong_answer};
}

std::size_t ClassifySim::rerank(const Instance&, const std::vector<std::vector<int>>& candidates) const {
  // Majority vote; ties go to the earliest candidate.
  std::map<int, int> votes;
  for (const auto& c : candidates) votes[c.front()] += 1;
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    if (votes[candidates[i].front()] > votes[candidates[best].front()]) best = i;
  }
  return best;
}

std::string ClassifySim::render_answer(const std::vector<int>& actions) const {
  return "class_" + std::to_string(actions.front());
}

Eigen::MatrixXd ClassifySim::base_weights() const {
  const Eigen::Index dim = 2 + params_.coarse_dim;
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(dim, params_.n_classes);
  for (int c = 0; c < params_.n_classes; ++c) {
    w.block(1, c, params_.coarse_dim, 1) = params_.sharpness * prototypes_.col(c / 2);
  }
  return w;
}

Optimum ClassifySim::brute_force_optimum() const {
  double correct = 0.0;
  for (const auto& inst : eval_) correct += verify(inst, {inst.label}).reward;
  return {{}, correct / static_cast<double>(eval_.size()), "oracle labels"};
}

// ---------------------------------------------------------------------------
// KernelSim

KernelSim::KernelSim(std::uint64_t seed, Params params) : Environment(EnvKind::kernel, seed), params_(params) {
  auto make = [&](std::size_t id, Rng& rng) {
    Instance inst;
    inst.id = id;
    inst.features = Eigen::VectorXd(3);
    inst.features << 1.0, 0.5 + 0.1 * rng.normal(), 0.5 + 0.1 * rng.normal();
    inst.format = OutputFormat::structured;
    return inst;
  };
  Rng eval_rng = Rng::stream(seed, {kEnvDomain, 1});
  for (int i = 0; i < params_.n_eval; ++i) eval_.push_back(make(static_cast<std::size_t>(i), eval_rng));
  Rng train_rng = Rng::stream(seed, {kEnvDomain, 2});
  for (int i = 0; i < params_.n_train; ++i) train_.push_back(make(static_cast<std::size_t>(i), train_rng));

  spec_.task_id = "kernel";
  spec_.description = "kernel launch configuration search scored by 1500/runtime";
  spec_.sample_instances = sample_set(train_, 4, "train-");
  spec_.reference_artifacts = {"naive tile=0 block=0 fp16 unroll=0"};
  spec_.reward_kind = RewardKind::terminal_scalar;
  spec_.metric_direction = MetricDirection::higher_better;
  spec_.feature_views = {"bias", "shape"};
  view_masks_ = {mask_first(3, 1), mask_first(3, 3)};
  channel_ = params_.channel;
  horizon_ = 1;
  target_metric_ = score_from_runtime(params_.optimum_runtime);
}

KernelConfig KernelSim::decode(int action) {
  if (action < 0 || action >= kGridSize) throw std::out_of_range("kernel action out of range");
  KernelConfig c;
  c.unroll = action % kUnrolls;
  action /= kUnrolls;
  c.accumulator = action % kAccumulators;
  action /= kAccumulators;
  c.block = action % kBlocks;
  c.tile = action / kBlocks;
  return c;
}

int KernelSim::encode(const KernelConfig& c) {
  return ((c.tile * kBlocks + c.block) * kAccumulators + c.accumulator) * kUnrolls + c.unroll;
}

bool KernelSim::compiles(const KernelConfig& c) {
  // Register pressure and block/tile shape compatibility.
  return c.tile + c.unroll + 2 * c.accumulator <= 4 && std::abs(c.block - c.tile) <= 1;
}

double KernelSim::runtime(const KernelConfig& c) const {
  const double p = params_.penalty;
  return params_.optimum_runtime * (1.0 + p * std::abs(c.tile - 2)) * (1.0 + p * std::abs(c.block - 2)) *
         (1.0 + p * c.unroll) * (c.accumulator == 1 ? 1.0 : params_.fp16_penalty);
}

Verdict KernelSim::verify(const Instance&, const std::vector<int>& actions) const {
  const KernelConfig c = decode(actions.front());
  if (!compiles(c)) return {0.0, FailureTag::invalid_config};
  return {score_from_runtime(runtime(c)), FailureTag::none};
}

std::size_t KernelSim::rerank(const Instance&, const std::vector<std::vector<int>>& candidates) const {
  // Compile check only: the first candidate that builds.
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (compiles(decode(candidates[i].front()))) return i;
  }
  return 0;
}

std::string KernelSim::render_answer(const std::vector<int>& actions) const {
  const KernelConfig c = decode(actions.front());
  return "tile=" + std::to_string(c.tile) + " block=" + std::to_string(c.block) +
         " acc=" + (c.accumulator ? "fp32" : "fp16") + " unroll=" + std::to_string(c.unroll);
}

Eigen::MatrixXd KernelSim::base_weights() const {
  // Independent per-axis preferences that favour large unrolls and fp16,
  // which is where most compile failures live.
  static constexpr double tile[kTiles] = {0.8, 0.6, 0.0, 0.2};
  static constexpr double block[kBlocks] = {0.5, 0.3, 0.0, 0.0};
  static constexpr double acc[kAccumulators] = {0.5, -0.5};
  static constexpr double unroll[kUnrolls] = {-0.3, 0.2, 0.5, 0.6};
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(3, kGridSize);
  for (int a = 0; a < kGridSize; ++a) {
    const KernelConfig c = decode(a);
    w(0, a) = tile[c.tile] + block[c.block] + acc[c.accumulator] + unroll[c.unroll];
  }
  return w;
}

Optimum KernelSim::brute_force_optimum() const {
  Optimum best{{0}, 0.0, ""};
  for (int a = 0; a < kGridSize; ++a) {
    const double r = verify(eval_.front(), {a}).reward;
    if (r > best.metric) best = {{a}, r, render_answer({a})};
  }
  return best;
}

// ---------------------------------------------------------------------------
// DenoiseSim

DenoiseSim::DenoiseSim(std::uint64_t seed, Params params) : Environment(EnvKind::denoise, seed), params_(params) {
  // Features: bias, two dataset descriptors, second-step indicator.
  auto make = [&](std::size_t id, Rng& rng) {
    Instance inst;
    inst.id = id;
    inst.features = Eigen::VectorXd(4);
    inst.features << 1.0, 0.4 + 0.1 * rng.normal(), -0.3 + 0.1 * rng.normal(), 0.0;
    inst.format = OutputFormat::plain;
    return inst;
  };
  Rng eval_rng = Rng::stream(seed, {kEnvDomain, 1});
  for (int i = 0; i < params_.n_eval; ++i) eval_.push_back(make(static_cast<std::size_t>(i), eval_rng));
  Rng train_rng = Rng::stream(seed, {kEnvDomain, 2});
  for (int i = 0; i < params_.n_train; ++i) train_.push_back(make(static_cast<std::size_t>(i), train_rng));

  spec_.task_id = "denoise";
  spec_.description = "denoising hyperparameter search (k, t, alpha) with optional post-processing";
  spec_.sample_instances = sample_set(train_, 4, "train-");
  spec_.reward_kind = RewardKind::terminal_scalar;
  spec_.metric_direction = MetricDirection::higher_better;
  spec_.feature_views = {"bias", "dataset"};
  view_masks_ = {{true, false, false, true}, {true, true, true, true}};
  channel_ = params_.channel;
  horizon_ = 2;
  target_metric_ = params_.peak + params_.clip_bonus;
}

Eigen::VectorXd DenoiseSim::step_state(const Eigen::VectorXd& observation, int step) const {
  if (step == 0) return observation;
  Eigen::VectorXd s = Eigen::VectorXd::Zero(observation.size());
  s(s.size() - 1) = 1.0;
  return s;
}

DenoiseConfig DenoiseSim::decode(const std::vector<int>& actions) {
  if (actions.size() != 2) throw std::invalid_argument("denoise episodes have exactly two steps");
  for (int a : actions) {
    if (a < 0 || a >= kActions) throw std::out_of_range("denoise action out of range");
  }
  const int idx = actions[0] < kConfigs ? actions[0] : kReferenceConfig;
  DenoiseConfig c;
  c.alpha = idx % kAlphas;
  c.t = (idx / kAlphas) % kTs;
  c.k = idx / (kAlphas * kTs);
  c.clip_round = actions[1] == kClipAction;
  return c;
}

std::vector<int> DenoiseSim::encode(const DenoiseConfig& c) {
  return {config_index(c.k, c.t, c.alpha), c.clip_round ? kClipAction : kKeepAction};
}

double DenoiseSim::surface(const DenoiseConfig& c) const {
  // Coupled quadratic bowl in (k, t), separable in alpha.
  const double x = (c.k - 4) / 3.0;
  const double y = (c.t - 3) / 3.0;
  const double z = (c.alpha - 5) / 2.5;
  return params_.peak * std::exp(-(x * x + y * y + 0.8 * x * y + z * z));
}

double DenoiseSim::quality(const DenoiseConfig& c) const {
  return std::clamp(surface(c) + (c.clip_round ? params_.clip_bonus : 0.0), 0.0, 1.0);
}

Verdict DenoiseSim::verify(const Instance&, const std::vector<int>& actions) const {
  return {quality(decode(actions)), FailureTag::none};
}

std::size_t DenoiseSim::rerank(const Instance&, const std::vector<std::vector<int>>& candidates) const {
  // Validation-score proxy on the hyperparameters only; post-processing is invisible to it.
  std::size_t best = 0;
  double best_score = -1.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    DenoiseConfig c = decode(candidates[i]);
    c.clip_round = false;
    const double s = surface(c);
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  return best;
}

std::string DenoiseSim::render_answer(const std::vector<int>& actions) const {
  const DenoiseConfig c = decode(actions);
  return "k=" + std::to_string(c.k) + " t=" + std::to_string(c.t) + " alpha=" + std::to_string(c.alpha) +
         " clip_round=" + (c.clip_round ? "true" : "false");
}

Eigen::MatrixXd DenoiseSim::base_weights() const {
  // First step: prior centred on a common default away from the optimum.
  // Second step: keep is the habit, clip is rarely proposed.
  constexpr double kNever = -12.0;
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(4, kActions);
  for (int k = 0; k < kKs; ++k) {
    for (int t = 0; t < kTs; ++t) {
      for (int a = 0; a < kAlphas; ++a) {
        const int idx = config_index(k, t, a);
        w(0, idx) = -0.12 * ((k - 2) * (k - 2) + (t - 5) * (t - 5)) - 0.15 * (a - 3) * (a - 3);
        w(3, idx) = kNever;
      }
    }
  }
  w(0, kClipAction) = kNever;
  w(0, kKeepAction) = kNever;
  w(3, kClipAction) = std::log(params_.clip_prior / (1.0 - params_.clip_prior));
  w(3, kKeepAction) = 0.0;
  return w;
}

Optimum DenoiseSim::brute_force_optimum() const {
  Optimum best{{}, -1.0, ""};
  for (int idx = 0; idx < kConfigs; ++idx) {
    for (int flag : {kKeepAction, kClipAction}) {
      const std::vector<int> actions{idx, flag};
      const double q = verify(eval_.front(), actions).reward;
      if (q > best.metric) best = {actions, q, render_answer(actions)};
    }
  }
  return best;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Environment> make_environment(EnvKind kind, std::uint64_t seed) {
  switch (kind) {
    case EnvKind::classify: return std::make_unique<ClassifySim>(seed);
    case EnvKind::kernel: return std::make_unique<KernelSim>(seed);
    case EnvKind::denoise: return std::make_unique<DenoiseSim>(seed);
  }
  throw std::invalid_argument("unknown environment kind");
}

std::unique_ptr<Environment> make_environment(std::string_view kind, std::uint64_t seed) {
  return make_environment(parse_env_kind(kind), seed);
}

}  // namespace sia
