#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "simulrl/generate.hpp"
#include "simulrl/model.hpp"
#include "simulrl/optim.hpp"
#include "simulrl/rewards.hpp"

namespace simulrl {

struct RLConfig {
  int group_size = 4;          // G
  int rollout_frames = 1500;   // T, a frame count
  double clip_epsilon = 0.2;
  int refresh_period = 20;     // tau: old policy <- current every tau updates
  double text_weight = 100.0;  // c_0
  double audio_weight = 1.0;   // c_q, q >= 1
  double learning_rate = 2e-7;
  int batch_size = 32;         // inputs per update
  int updates = 2000;
  int eval_every = 200;        // 10 * tau
  double grad_clip = 0.0;      // <= 0 disables
  std::uint64_t seed = 0;
  SamplingConfig sampling{0.8, 250, false};
  RewardConfig reward;
  std::string ablation = "none";        // none | A | B | C
  double selection_bleu_tolerance = 0.03;
  bool save_series = true;

  double stream_weight(int stream) const { return stream == 0 ? text_weight : audio_weight; }
  void validate() const;  // throws ConfigError
  bool operator==(const RLConfig&) const = default;
};

// One input and its G rollouts sampled from the old policy. Old log-probs
// are the rollouts' stored sampling-time log-probs and stay frozen.
struct GroupBatch {
  const Utterance* utterance = nullptr;
  std::vector<Generation> rollouts;
  RewardTable rewards;
};

// exp(logp_new - logp_old) elementwise; throws NumericError on non-finite input.
Matrix probability_ratios(const Matrix& logp_new, const Matrix& logp_old);

double clip_ratio(double ratio, double epsilon);
// min(ratio * A, clip(ratio) * A)
double clipped_term(double ratio, double advantage, double epsilon);
// d clipped_term / d ratio: A when the unclipped branch is selected (ties
// included), 0 when the clipped branch is strictly smaller.
double clipped_term_grad(double ratio, double advantage, double epsilon);
// Sum over frames of clipped_term for one stream.
double clipped_objective(std::span<const double> ratios, std::span<const double> advantages, double epsilon);

struct ObjectiveResult {
  double objective = 0.0;      // batch mean of (1/G) sum_{q,i} c_q L_q^(i)
  std::vector<double> grad;    // d objective / d theta
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;  // fraction of tokens whose ratio lies outside [1-eps, 1+eps]
  std::size_t tokens = 0;
};

// Objective and its gradient through the current policy's log-probs only.
// Frames after a rollout's text EOS are not part of the rollout and are
// therefore excluded.
ObjectiveResult grpo_objective(const ModelParams& params, std::span<const GroupBatch> batches, const RLConfig& cfg,
                               int workers = 1, bool with_grad = true);

struct UpdateStats {
  double objective = 0.0;
  double grad_norm = 0.0;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  bool skipped = false;  // non-finite log-prob or gradient; parameters untouched
  std::string diagnostic;
};

// Current policy, frozen old policy and optimizer state.
class PolicyState {
 public:
  PolicyState(ModelParams initial, AdamConfig adam);

  const ModelParams& current() const { return current_; }
  ModelParams& current() { return current_; }
  const ModelParams& old() const { return old_; }
  long updates() const { return updates_; }
  Adam& optimizer() { return optimizer_; }

  // old <- current (deep copy).
  void refresh_old_policy();
  // One gradient-ascent step on the objective; refreshes the old policy when
  // the update counter reaches a multiple of refresh_period. Numeric failures
  // skip the step but still advance the counter.
  UpdateStats update(std::span<const GroupBatch> batches, const RLConfig& cfg, int workers = 1);

 private:
  ModelParams current_;
  ModelParams old_;
  Adam optimizer_;
  long updates_ = 0;
};

// Samples G rollouts of one input from `policy` and scores them.
GroupBatch sample_group(const ModelParams& policy, const Utterance& u, const EnvConfig& env, const RLConfig& cfg,
                        std::uint64_t seed);

}  // namespace simulrl
