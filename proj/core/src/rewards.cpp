#include "simulrl/rewards.hpp"

#include <cmath>
#include <stdexcept>

#include "simulrl/errors.hpp"
#include "simulrl/generate.hpp"

namespace simulrl {

void RewardConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("rewards: alpha must be in [0, 1]");
  if (words_per_checkpoint < 1) throw ConfigError("rewards: words_per_checkpoint must be >= 1");
  if (bleu.max_order < 1) throw ConfigError("rewards: bleu.max_order must be >= 1");
}

std::vector<int> reward_checkpoints(const Utterance& u, int words_per_checkpoint) {
  if (words_per_checkpoint < 1) throw std::invalid_argument("reward_checkpoints: n_w must be >= 1");
  std::vector<int> out;
  const int n = u.num_words();
  for (int k = words_per_checkpoint; k <= n; k += words_per_checkpoint) out.push_back(u.word_end_frames[k - 1]);
  if (n > 0 && (out.empty() || out.back() != u.word_end_frames[n - 1])) out.push_back(u.word_end_frames[n - 1]);
  return out;
}

int sentence_index(const Utterance& u, int frame) {
  const int n = u.num_sentences();
  for (int i = 0; i < n; ++i)
    if (frame < u.sentence_boundaries[i + 1]) return i;
  return n - 1;
}

std::vector<int> prefix_reference(const Utterance& u, int frame) {
  const int last = sentence_index(u, frame);
  std::vector<int> out;
  for (int i = 0; i <= last; ++i)
    out.insert(out.end(), u.reference_sentences[i].begin(), u.reference_sentences[i].end());
  return out;
}

double mixed_reward(std::span<const int> prefix_hypothesis, std::span<const int> prefix_ref,
                    std::span<const int> final_hypothesis, std::span<const int> final_ref, double alpha,
                    const BleuConfig& bleu_cfg) {
  const double prefix = alpha < 1.0 ? bleu(prefix_hypothesis, prefix_ref, bleu_cfg) : 0.0;
  const double final_score = alpha > 0.0 ? bleu(final_hypothesis, final_ref, bleu_cfg) : 0.0;
  return (1.0 - alpha) * prefix + alpha * final_score;
}

double process_reward(const Generation& gen, const Utterance& u, int frame, const RewardConfig& cfg) {
  const auto full_ref = u.reference();
  const auto prefix_ref = cfg.full_reference_prefix ? full_ref : prefix_reference(u, frame);
  return mixed_reward(gen.text_tokens_until(frame), prefix_ref, gen.text_tokens(), full_ref, cfg.alpha, cfg.bleu);
}

Matrix normalize_group(const Matrix& raw) {
  if (raw.rows < 2) throw std::invalid_argument("normalize_group: group size must be >= 2");
  Matrix out(raw.rows, raw.cols);
  for (int j = 0; j < raw.cols; ++j) {
    double mean = 0.0;
    for (int i = 0; i < raw.rows; ++i) mean += raw(i, j);
    mean /= raw.rows;
    double var = 0.0;
    for (int i = 0; i < raw.rows; ++i) var += (raw(i, j) - mean) * (raw(i, j) - mean);
    const double stddev = std::sqrt(var / raw.rows);
    for (int i = 0; i < raw.rows; ++i) out(i, j) = stddev < 1e-8 ? 0.0 : (raw(i, j) - mean) / stddev;
  }
  return out;
}

std::vector<double> advantages(std::span<const double> normalized_row, std::span<const int> checkpoints,
                               int frames) {
  if (normalized_row.size() != checkpoints.size())
    throw std::invalid_argument("advantages: checkpoint count mismatch");
  std::vector<double> out(static_cast<std::size_t>(std::max(frames, 0)), 0.0);
  // Suffix sums over checkpoints, walking frames backwards.
  double suffix = 0.0;
  int j = static_cast<int>(checkpoints.size()) - 1;
  for (int t = frames - 1; t >= 0; --t) {
    while (j >= 0 && checkpoints[j] > t) suffix += normalized_row[j--];
    out[t] = suffix;
  }
  return out;
}

RewardTable compute_reward_table(std::span<const Generation> group, const Utterance& u, const RewardConfig& cfg) {
  cfg.validate();
  RewardTable table;
  table.checkpoints = reward_checkpoints(u, cfg.words_per_checkpoint);
  const int G = static_cast<int>(group.size());
  const int s = static_cast<int>(table.checkpoints.size());
  table.raw = Matrix(G, s);
  for (int i = 0; i < G; ++i)
    for (int j = 0; j < s; ++j) table.raw(i, j) = process_reward(group[i], u, table.checkpoints[j], cfg);
  table.normalized = normalize_group(table.raw);
  for (int i = 0; i < G; ++i)
    table.advantages.push_back(advantages(table.normalized.row(i), table.checkpoints, group[i].grid.num_frames()));
  return table;
}

}  // namespace simulrl
