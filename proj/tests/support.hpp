#pragma once

#include <cmath>
#include <vector>

#include "simulrl/alignment.hpp"
#include "simulrl/corpus.hpp"
#include "simulrl/model.hpp"
#include "simulrl/rng.hpp"

namespace simulrl::testing {

// Tiny environment and model (< 10k parameters) for finite-difference checks.
inline EnvConfig micro_env() {
  EnvConfig env;
  env.source_vocab_size = 8;
  env.text_vocab_size = 11;
  env.codebook_size = 12;
  env.num_codebooks = 2;
  env.words_per_sentence = {3, 4};
  env.sentences_per_utterance = {1, 2};
  env.reorder_window = 2;
  env.sentence_gap_frames = 1;
  return env;
}

inline ModelConfig micro_model(const EnvConfig& env) {
  ModelConfig m;
  m.temporal = {8, 1, 2, 12};
  m.depth = {8, 1, 2, 12};
  m.context_frames = 48;
  return with_env_shapes(m, env);
}

inline AlignConfig micro_align() {
  AlignConfig a;
  a.mu = 0.16;
  a.max_frames = 48;
  return a;
}

inline TokenGrid micro_pair(const EnvConfig& env, const ModelConfig& mc, std::uint64_t seed) {
  const auto u = generate_utterance(env, seed);
  Rng rng(seed + 100);
  return apply_acoustic_delay(build_training_pair(u, micro_align(), env, rng), mc.acoustic_delay_frames);
}

inline double rel_error(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

}  // namespace simulrl::testing
