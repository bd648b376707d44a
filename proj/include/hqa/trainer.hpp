#pragma once

// REINFORCE training of the two agents.
//
// Phase 1 (pretrain_sub) updates only the subordinate agent against R_sub.
// Phase 2 (train_joint) updates both agents against R_total = R_sub + beta * R_sup.
// Each training episode gets `episodes_per_update` sampled rollouts; the update
// direction is the mean over rollouts of (R - baseline) * grad log pi, plus the
// pathwise derivative of beta * R_sup through the predicted video quality.
// The baseline is an exponential moving average of the per-update mean reward,
// kept either per training episode (default) or as one global running value.

#include "hqa/agents.hpp"
#include "hqa/errors.hpp"
#include "hqa/format.hpp"
#include "hqa/optimizer.hpp"
#include "hqa/params.hpp"
#include "hqa/reward.hpp"
#include "hqa/simulator.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace hqa {

struct TrainConfig {
  std::size_t episodes_per_update = 5;
  double learning_rate = 1e-5;
  double momentum = 0.9;
  double lr_decay_factor = 0.5;
  std::size_t lr_decay_every = 30;
  double beta = 1.0;
  std::size_t pretrain_epochs = 20;
  std::size_t joint_epochs = 60;
  double baseline_momentum = 0.9;
  std::uint64_t seed = 1;

  bool use_baseline = true;
  bool per_episode_baseline = true;  // one EMA per training episode instead of a single global one
  bool pathwise_sup = true;        // differentiate R_sup through the predicted video quality
  bool supervised_warmup = false;  // pretrain with frame-label log-likelihood instead of R_sub
  double max_grad_norm = 0.0;      // 0 disables clipping
  bool record_wall_clock = false;  // seconds column stays 0 unless set, keeping logs reproducible

  TrapezoidParams reward{};
  ModelConfig model{};
  std::uint64_t init_seed = 1;

  void validate() const {
    if (episodes_per_update < 1) throw ConfigError("episodes_per_update must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw ConfigError("learning_rate must be a finite non-negative number");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0,1)");
    if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) throw ConfigError("lr_decay_factor must lie in (0,1]");
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be a finite non-negative number");
    if (!(baseline_momentum >= 0.0 && baseline_momentum < 1.0)) {
      throw ConfigError("baseline_momentum must lie in [0,1)");
    }
    if (!(max_grad_norm >= 0.0)) throw ConfigError("max_grad_norm must be >= 0");
    reward.validate();
    model.validate();
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"episodes_per_update", c.episodes_per_update},
                     {"learning_rate", c.learning_rate},
                     {"momentum", c.momentum},
                     {"lr_decay_factor", c.lr_decay_factor},
                     {"lr_decay_every", c.lr_decay_every},
                     {"beta", c.beta},
                     {"pretrain_epochs", c.pretrain_epochs},
                     {"joint_epochs", c.joint_epochs},
                     {"baseline_momentum", c.baseline_momentum},
                     {"seed", c.seed},
                     {"use_baseline", c.use_baseline},
                     {"per_episode_baseline", c.per_episode_baseline},
                     {"pathwise_sup", c.pathwise_sup},
                     {"supervised_warmup", c.supervised_warmup},
                     {"max_grad_norm", c.max_grad_norm},
                     {"record_wall_clock", c.record_wall_clock},
                     {"ramp_width", c.reward.d},
                     {"amplitude", c.reward.a_max},
                     {"model", c.model},
                     {"init_seed", c.init_seed}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  detail::reject_unknown_keys(
      j,
      {"episodes_per_update", "learning_rate", "momentum", "lr_decay_factor", "lr_decay_every", "beta",
       "pretrain_epochs", "joint_epochs", "baseline_momentum", "seed", "use_baseline", "per_episode_baseline", "pathwise_sup",
       "supervised_warmup", "max_grad_norm", "record_wall_clock", "ramp_width", "amplitude", "model", "init_seed"},
      "training config");
  detail::read_field(j, "episodes_per_update", c.episodes_per_update);
  detail::read_field(j, "learning_rate", c.learning_rate);
  detail::read_field(j, "momentum", c.momentum);
  detail::read_field(j, "lr_decay_factor", c.lr_decay_factor);
  detail::read_field(j, "lr_decay_every", c.lr_decay_every);
  detail::read_field(j, "beta", c.beta);
  detail::read_field(j, "pretrain_epochs", c.pretrain_epochs);
  detail::read_field(j, "joint_epochs", c.joint_epochs);
  detail::read_field(j, "baseline_momentum", c.baseline_momentum);
  detail::read_field(j, "seed", c.seed);
  detail::read_field(j, "use_baseline", c.use_baseline);
  detail::read_field(j, "per_episode_baseline", c.per_episode_baseline);
  detail::read_field(j, "pathwise_sup", c.pathwise_sup);
  detail::read_field(j, "supervised_warmup", c.supervised_warmup);
  detail::read_field(j, "max_grad_norm", c.max_grad_norm);
  detail::read_field(j, "record_wall_clock", c.record_wall_clock);
  detail::read_field(j, "ramp_width", c.reward.d);
  detail::read_field(j, "amplitude", c.reward.a_max);
  detail::read_field(j, "init_seed", c.init_seed);
  if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
}

enum class Phase { Pretrain, Joint };

struct EpochRecord {
  std::size_t epoch = 0;
  double r_sub = 0.0;
  double r_sup = 0.0;
  double r_total = 0.0;
  double lr = 0.0;
  double baseline = 0.0;
  double seconds = 0.0;
  Phase phase = Phase::Joint;
};

struct TrainLog {
  std::vector<EpochRecord> records;
};

struct TrainerState;

/// Called after every epoch with the state and that epoch's record.
using EpochCallback = std::function<void(const TrainerState&, const EpochRecord&)>;

/// Exponential moving average that adopts its first observation as-is.
struct RunningBaseline {
  double value = 0.0;
  bool ready = false;

  std::optional<double> get() const { return ready ? std::optional<double>(value) : std::nullopt; }

  void update(double observation, double momentum) {
    value = ready ? momentum * value + (1.0 - momentum) * observation : observation;
    ready = true;
  }
};

/// Mutable training state: the single writable copy of the parameters.
struct TrainerState {
  PolicyParams params;
  std::vector<double> velocity;
  RunningBaseline global_baseline;
  std::vector<RunningBaseline> episode_baselines;  // indexed like the training corpus
  std::size_t epoch = 0;  // global epoch counter driving the learning-rate schedule

  TrainerState() = default;
  explicit TrainerState(PolicyParams p) : params(std::move(p)), velocity(params.size(), 0.0) {}

  /// Global value, or the mean over per-episode baselines that have been initialised.
  double baseline_summary(bool per_episode) const {
    if (!per_episode) return global_baseline.value;
    double sum = 0.0;
    std::size_t n = 0;
    for (const RunningBaseline& b : episode_baselines) {
      if (!b.ready) continue;
      sum += b.value;
      ++n;
    }
    return n ? sum / double(n) : 0.0;
  }
};

struct UpdateResult {
  PolicyGradient direction;
  double r_sub = 0.0;    // means over the rollouts of this update
  double r_sup = 0.0;
  double r_total = 0.0;
};

namespace detail {

inline constexpr std::uint64_t kRolloutStream = 0x726f6c6c6f7574ULL;
inline constexpr std::uint64_t kShuffleStream = 0x73687566666c65ULL;

inline void check_finite(const PolicyGradient& g) {
  for (std::size_t b = 0; b < kBlockCount; ++b) {
    const Block& blk = g.layout.at(b);
    for (std::size_t i = 0; i < blk.size(); ++i) {
      if (!std::isfinite(g.values[blk.offset + i])) {
        throw TrainingError("non-finite gradient in parameter block '" + std::string(kBlockNames[b]) +
                            "' at element " + std::to_string(i));
      }
    }
  }
}

}  // namespace detail

/// Ascent direction for one training episode. `baseline` is subtracted from each
/// rollout's reward when `config.use_baseline` is set; an empty baseline means the
/// mean reward of this update's own rollouts.
inline UpdateResult policy_gradient_direction(const PolicyParams& params, const Episode& episode,
                                              const TrainConfig& config, Phase phase,
                                              std::optional<double> baseline, std::uint64_t rollout_seed) {
  const PolicyForward fw = policy_forward(params, episode);
  const std::size_t n = episode.size();
  const std::size_t k = config.episodes_per_update;
  const RewardProfile profile = envelope_profile(episode.frame_labels, config.reward);
  const double beta = phase == Phase::Pretrain ? 0.0 : config.beta;
  const double q = fw.sup.prob;
  const double r_sup = video_reward(q, episode.video_label);

  std::mt19937_64 seeds(rollout_seed);
  std::vector<ActionTrace> traces;
  std::vector<double> rewards;
  traces.reserve(k);
  UpdateResult out;
  for (std::size_t r = 0; r < k; ++r) {
    traces.push_back(sample_actions(fw.sub.probs, q, seeds()));
    const double r_sub = frame_reward(traces.back().frame_actions, profile);
    rewards.push_back(total_reward(r_sub, r_sup, beta));
    out.r_sub += r_sub;
  }
  out.r_sub /= double(k);
  out.r_sup = r_sup;
  out.r_total = std::accumulate(rewards.begin(), rewards.end(), 0.0) / double(k);

  std::vector<double> dlogits(n, 0.0);
  double dlogit_video = 0.0;
  if (phase == Phase::Pretrain && config.supervised_warmup) {
    for (std::size_t t = 0; t < n; ++t) dlogits[t] = double(episode.frame_labels[t]) - fw.sub.probs[t];
  } else {
    const double b = !config.use_baseline ? 0.0 : baseline.value_or(out.r_total);
    for (std::size_t r = 0; r < k; ++r) {
      const double adv = (rewards[r] - b) / double(k);
      if (adv == 0.0) continue;
      for (std::size_t t = 0; t < n; ++t) dlogits[t] += adv * (double(traces[r].frame_actions[t]) - fw.sub.probs[t]);
      dlogit_video += adv * (double(traces[r].video_action) - q);
    }
  }
  const bool include_sup = phase == Phase::Joint;
  if (include_sup && config.pathwise_sup && beta != 0.0) {
    dlogit_video += beta * video_reward_derivative(q, episode.video_label) * q * (1.0 - q);
  }
  out.direction = policy_backward(params, episode, fw, dlogits, dlogit_video, include_sup);
  return out;
}

namespace detail {

inline TrainLog run_phase(TrainerState& state, std::span<const Episode> corpus, const TrainConfig& config,
                          Phase phase, std::size_t epochs,
                          const EpochCallback& on_epoch_end) {
  config.validate();
  if (corpus.empty()) throw ConfigError("training corpus is empty");
  if (state.velocity.size() != state.params.size()) state.velocity.assign(state.params.size(), 0.0);
  // Rewards differ between phases, so each phase starts with fresh baselines.
  state.global_baseline = {};
  state.episode_baselines.assign(corpus.size(), RunningBaseline{});

  TrainLog log;
  std::vector<std::size_t> order(corpus.size());
  const std::uint64_t phase_tag = phase == Phase::Pretrain ? 1 : 2;
  const std::size_t sub_size = state.params.layout.sub_size();

  for (std::size_t e = 0; e < epochs; ++e) {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t epoch = state.epoch;
    const double lr =
        scheduled_learning_rate(config.learning_rate, config.lr_decay_factor, config.lr_decay_every, epoch);

    std::iota(order.begin(), order.end(), std::size_t{0});
    auto shuffle_rng = seeded_engine(config.seed, kShuffleStream ^ phase_tag, epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    auto rollout_rng = seeded_engine(config.seed, kRolloutStream ^ phase_tag, epoch);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.phase = phase;
    for (std::size_t idx : order) {
      const Episode& ep = corpus[idx];
      RunningBaseline& baseline = config.per_episode_baseline ? state.episode_baselines[idx] : state.global_baseline;
      UpdateResult upd = policy_gradient_direction(state.params, ep, config, phase, baseline.get(), rollout_rng());
      detail::check_finite(upd.direction);
      if (config.max_grad_norm > 0.0) {
        const double norm = std::sqrt(std::inner_product(upd.direction.values.begin(), upd.direction.values.end(),
                                                         upd.direction.values.begin(), 0.0));
        if (norm > config.max_grad_norm) {
          for (double& v : upd.direction.values) v *= config.max_grad_norm / norm;
        }
      }
      if (phase == Phase::Pretrain) {
        update_step(state.params.sub_values(), std::span<const double>(upd.direction.values.data(), sub_size),
                    std::span<double>(state.velocity.data(), sub_size), lr, config.momentum);
      } else {
        update_step(state.params.values, upd.direction.values, state.velocity, lr, config.momentum);
      }
      baseline.update(upd.r_total, config.baseline_momentum);
      rec.r_sub += upd.r_sub;
      rec.r_sup += upd.r_sup;
      rec.r_total += upd.r_total;
    }
    rec.r_sub /= double(corpus.size());
    rec.r_sup /= double(corpus.size());
    rec.r_total /= double(corpus.size());
    rec.baseline = state.baseline_summary(config.per_episode_baseline);
    if (config.record_wall_clock) {
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    log.records.push_back(rec);
    ++state.epoch;
    if (on_epoch_end) on_epoch_end(state, log.records.back());
  }
  return log;
}

}  // namespace detail

/// Warm-up: REINFORCE on R_sub alone (or frame-label likelihood with supervised_warmup);
/// only subordinate parameters change.
inline TrainLog pretrain_sub(TrainerState& state, std::span<const Episode> corpus, const TrainConfig& config,
                             const EpochCallback& on_epoch_end = {}) {
  return detail::run_phase(state, corpus, config, Phase::Pretrain, config.pretrain_epochs, on_epoch_end);
}

/// End-to-end training of both agents against R_total.
inline TrainLog train_joint(TrainerState& state, std::span<const Episode> corpus, const TrainConfig& config,
                            const EpochCallback& on_epoch_end = {}) {
  return detail::run_phase(state, corpus, config, Phase::Joint, config.joint_epochs, on_epoch_end);
}

/// Initialise parameters from the config and run both phases.
inline TrainLog train(TrainerState& state, std::span<const Episode> corpus, const TrainConfig& config,
                      const EpochCallback& on_epoch_end = {}) {
  TrainLog log = pretrain_sub(state, corpus, config, on_epoch_end);
  TrainLog joint = train_joint(state, corpus, config, on_epoch_end);
  log.records.insert(log.records.end(), joint.records.begin(), joint.records.end());
  return log;
}

inline constexpr const char* kTrainLogHeader = "epoch,r_sub,r_sup,r_total,lr,baseline,seconds";

/// Shortest round-trip formatting, so the lr column parses back bit-exactly.
inline void write_train_log_csv(std::ostream& out, const TrainLog& log) {
  out << kTrainLogHeader << '\n';
  std::string line;
  for (const EpochRecord& r : log.records) {
    line = std::to_string(r.epoch);
    for (double v : {r.r_sub, r.r_sup, r.r_total, r.lr, r.baseline, r.seconds}) {
      line += ',';
      detail::append_double(line, v);
    }
    out << line << '\n';
  }
}

}  // namespace hqa
