#pragma once

#include <optional>
#include <vector>

#include "simulrl/corpus.hpp"
#include "simulrl/model.hpp"
#include "simulrl/tensor.hpp"

namespace simulrl {

class Rng;

struct SamplingConfig {
  double temperature = 0.8;
  int top_k = 250;
  bool greedy = false;  // argmax decoding; also implied by temperature <= 0

  bool operator==(const SamplingConfig&) const = default;
};

struct EmittedWord {
  int token = 0;
  int frame = 0;
  bool operator==(const EmittedWord&) const = default;
};

struct Generation {
  // Generated frames in the model's (acoustic-delayed) domain. Text and output
  // audio are sampled; input streams hold the teacher-forced source.
  TokenGrid grid;
  // Untempered log-probability of every sampled token: frames x (Q + 1),
  // column 0 text, column c + 1 output codebook c.
  Matrix log_probs;
  std::vector<EmittedWord> words;  // non-PAD, non-EOS text tokens in frame order
  std::optional<int> eos_frame;

  std::vector<int> text_tokens() const;
  // Words emitted at frames <= frame.
  std::vector<int> text_tokens_until(int frame) const;
};

// Inference-time source grid of `frames` frames: rendered source, an input EOS
// column right after the source, silence afterwards, acoustic delay applied.
// Text and output streams are PAD/silence.
TokenGrid make_source_grid(const Utterance& u, const EnvConfig& env, int frames, int acoustic_delay);

// Picks a token from logits: greedy argmax (lowest index on ties) or
// temperature + top-k sampling.
int sample_token(std::span<const double> logits, const SamplingConfig& cfg, Rng& rng);

// Autoregressive decoding. Input streams are copied from `source` frame by
// frame; text and output audio are sampled. Stops after the frame carrying a
// text EOS or after max_frames frames.
Generation sample_translation(const ModelParams& params, const TokenGrid& source, const SamplingConfig& cfg,
                              Rng& rng, int max_frames);

// Log-probabilities of the output streams (text + output audio) of a grid,
// frames x (Q + 1), using the same conditioning as sampling.
Matrix output_log_probs(const ModelParams& params, const TokenGrid& grid);

}  // namespace simulrl
