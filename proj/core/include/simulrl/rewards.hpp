#pragma once

#include <span>
#include <vector>

#include "simulrl/bleu.hpp"
#include "simulrl/corpus.hpp"
#include "simulrl/tensor.hpp"

namespace simulrl {

struct Generation;

struct RewardConfig {
  double alpha = 0.4;           // weight of the final-BLEU term
  int words_per_checkpoint = 8; // n_w
  // Score partial hypotheses against the full reference instead of the
  // sentence-level prefix (ablation A).
  bool full_reference_prefix = false;
  BleuConfig bleu{4, Smoothing::exponential};

  void validate() const;  // throws ConfigError
  bool operator==(const RewardConfig& o) const {
    return alpha == o.alpha && words_per_checkpoint == o.words_per_checkpoint &&
           full_reference_prefix == o.full_reference_prefix && bleu.max_order == o.bleu.max_order &&
           bleu.smoothing == o.bleu.smoothing;
  }
};

// End frames of input words n_w, 2 n_w, ... plus the last word's end;
// strictly increasing.
std::vector<int> reward_checkpoints(const Utterance& u, int words_per_checkpoint);

// Index of the source sentence active at `frame`. Intervals are half-open
// [t_i, t_{i+1}), so a boundary frame belongs to the later sentence; frames at
// or past t_n map to the last sentence.
int sentence_index(const Utterance& u, int frame);

// Reference sentences 0..S(frame), concatenated.
std::vector<int> prefix_reference(const Utterance& u, int frame);

// (1 - alpha) * BLEU(prefix_hypothesis, prefix_reference)
//   + alpha * BLEU(final_hypothesis, final_reference)
double mixed_reward(std::span<const int> prefix_hypothesis, std::span<const int> prefix_ref,
                    std::span<const int> final_hypothesis, std::span<const int> final_ref, double alpha,
                    const BleuConfig& bleu);

// Process reward of a generation at `frame`.
double process_reward(const Generation& gen, const Utterance& u, int frame, const RewardConfig& cfg);

// Per-checkpoint standardization across the group (rows = group members,
// columns = checkpoints) with the population standard deviation. Columns whose
// std is below 1e-8 become all zeros. Throws std::invalid_argument if fewer
// than two rows.
Matrix normalize_group(const Matrix& raw);

// R_t = sum over checkpoints t'_j > t of normalized(i, j), for t in [0, frames).
std::vector<double> advantages(std::span<const double> normalized_row, std::span<const int> checkpoints,
                               int frames);

struct RewardTable {
  std::vector<int> checkpoints;
  Matrix raw;         // G x s
  Matrix normalized;  // G x s
  std::vector<std::vector<double>> advantages;  // per rollout, one value per generated frame
};

RewardTable compute_reward_table(std::span<const Generation> group, const Utterance& u, const RewardConfig& cfg);

}  // namespace simulrl
