#pragma once

#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "simulrl/corpus.hpp"
#include "simulrl/generate.hpp"
#include "simulrl/metrics.hpp"
#include "simulrl/model.hpp"

namespace simulrl {

struct DecodeConfig {
  SamplingConfig sampling{0.8, 250, true};
  int max_frames = 128;
  std::uint64_t seed = 0;  // sampling mode only; item i uses derive_seed(seed, {i})
};

struct ItemResult {
  std::uint64_t seed = 0;
  std::vector<int> hypothesis;
  std::vector<int> reference;
  std::vector<int> word_frames;
  double sentence_bleu = 0.0;  // exponential smoothing
  std::optional<double> laal;
  std::optional<double> end_offset;
  bool reached_eos = false;
};

struct EvalReport {
  std::vector<ItemResult> items;
  double corpus_bleu = 0.0;     // no smoothing
  double mean_laal = 0.0;       // over items with a defined LAAL
  double mean_end_offset = 0.0; // over items with a defined end offset
  int laal_count = 0;
  int end_offset_count = 0;

  nlohmann::json to_json() const;
};

// Latency inputs of one decoded item; word end-times are emission frame / frame rate.
LatencyInput latency_input(const Utterance& u, std::span<const int> word_frames, const EnvConfig& env);

ItemResult score_item(const Utterance& u, std::span<const int> hypothesis, std::span<const int> word_frames,
                      const EnvConfig& env, bool reached_eos);

// Aggregates per-item results. Throws std::invalid_argument on an empty set.
EvalReport aggregate(std::vector<ItemResult> items);

// Decodes every utterance and scores it. Throws std::invalid_argument on an
// empty set.
EvalReport evaluate(const ModelParams& params, std::span<const Utterance> utterances, const EnvConfig& env,
                    const DecodeConfig& decode, int workers = 1);

}  // namespace simulrl
