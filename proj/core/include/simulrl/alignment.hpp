#pragma once

#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "simulrl/corpus.hpp"

namespace simulrl {

class Rng;

struct AlignConfig {
  double delta = 0.5;             // sentence delay fraction: delta_i ~ U(0, delta * d_i)
  double mu = 2.0;                // max punctuation silence, seconds
  double punctuation_rate = 0.3;  // probability a word boundary is a punctuation point
  bool input_eos = true;
  bool text_eos = true;
  bool full_sentence_delay = false;  // delta_i = d_i for every sentence
  int max_frames = 1500;          // pairs longer than this are rejected

  void validate() const;  // throws ConfigError
  bool operator==(const AlignConfig&) const = default;
};

// Placement of target speech: start frame of every target word. Words occupy
// frames_per_word consecutive frames; the text token sits on the first one.
struct TargetLayout {
  std::vector<int> word_starts;
  std::vector<int> sentence_offsets;  // first word of each sentence, plus total
  std::vector<int> sentence_delays;   // sampled delta_i per sentence (frames)
  int frames_per_word = 1;

  int num_sentences() const { return static_cast<int>(sentence_offsets.size()) - 1; }
  int onset(int sentence) const { return word_starts[sentence_offsets[sentence]]; }
  int sentence_end(int sentence) const {
    return word_starts[sentence_offsets[sentence + 1] - 1] + frames_per_word;
  }
  // First frame after the last target word.
  int end() const { return word_starts.empty() ? 0 : word_starts.back() + frames_per_word; }
  int speech_frames() const { return static_cast<int>(word_starts.size()) * frames_per_word; }
};

// Undelayed layout: target sentence i starts with source sentence i and its
// words are contiguous.
TargetLayout initial_target_layout(const Utterance& u, const EnvConfig& cfg);

// round_half_up(quantile * delta * duration), never exceeding delta * duration.
int sentence_delay_frames(double quantile, double delta, int duration);
// round_half_up(quantile * mu * frame_rate).
int punctuation_silence_frames(double quantile, double mu, double frame_rate);

// Shifts target sentence i to start delta_i frames after source sentence i.
// Overlaps are resolved by pushing later sentences right. One quantile per
// sentence; throws AlignmentError on a sentence-count mismatch.
TargetLayout insert_sentence_delays(const Utterance& u, TargetLayout layout, const AlignConfig& cfg,
                                    std::span<const double> quantiles);
TargetLayout insert_sentence_delays(const Utterance& u, TargetLayout layout, const AlignConfig& cfg,
                                    Rng& rng);

// Inserts U(0, mu) seconds of silence after sampled intra-sentence word
// boundaries, shifting all later words.
TargetLayout insert_punctuation_silences(TargetLayout layout, const AlignConfig& cfg,
                                         double frame_rate, Rng& rng);

// Full training grid (acoustic delay not applied): input streams carry the
// rendered source then an input-EOS column; output audio carries the delayed
// target speech; the text stream carries target words at their first frame,
// PAD elsewhere and a text EOS right after the last target word.
TokenGrid build_training_pair(const Utterance& u, const AlignConfig& align, const EnvConfig& env,
                              Rng& rng);
TokenGrid build_training_pair(const Utterance& u, const AlignConfig& align, const EnvConfig& env,
                              const TargetLayout& layout);
TargetLayout sample_target_layout(const Utterance& u, const AlignConfig& align, const EnvConfig& env,
                                  Rng& rng);

nlohmann::json grid_to_json(const TokenGrid& grid);
TokenGrid grid_from_json(const nlohmann::json& j);
// Manifest record plus a "grid" payload.
nlohmann::json pair_to_json(const Utterance& u, const TokenGrid& grid);

}  // namespace simulrl
