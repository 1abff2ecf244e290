#include "simulrl/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "simulrl/errors.hpp"
#include "simulrl/rng.hpp"

namespace simulrl {

void AlignConfig::validate() const {
  if (!(delta >= 0.0 && delta <= 1.0)) throw ConfigError("align: delta must be in [0, 1]");
  if (!(mu >= 0.0)) throw ConfigError("align: mu must be >= 0");
  if (!(punctuation_rate >= 0.0 && punctuation_rate <= 1.0))
    throw ConfigError("align: punctuation_rate must be in [0, 1]");
  if (max_frames < 1) throw ConfigError("align: max_frames must be >= 1");
}

namespace {

int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

}  // namespace

TargetLayout initial_target_layout(const Utterance& u, const EnvConfig& cfg) {
  TargetLayout layout;
  layout.frames_per_word = cfg.frames_per_word;
  layout.sentence_offsets = u.sentence_word_offsets();
  layout.sentence_delays.assign(static_cast<std::size_t>(u.num_sentences()), 0);
  for (int i = 0; i < u.num_sentences(); ++i) {
    const int words = static_cast<int>(u.reference_sentences[i].size());
    for (int k = 0; k < words; ++k)
      layout.word_starts.push_back(u.sentence_boundaries[i] + k * cfg.frames_per_word);
  }
  return layout;
}

int sentence_delay_frames(double quantile, double delta, int duration) {
  const double bound = delta * duration;
  const int rounded = round_half_up(std::clamp(quantile, 0.0, 1.0) * bound);
  return std::min(rounded, static_cast<int>(std::floor(bound + 1e-9)));
}

int punctuation_silence_frames(double quantile, double mu, double frame_rate) {
  return round_half_up(std::clamp(quantile, 0.0, 1.0) * mu * frame_rate);
}

TargetLayout insert_sentence_delays(const Utterance& u, TargetLayout layout, const AlignConfig& cfg,
                                    std::span<const double> quantiles) {
  const int n = u.num_sentences();
  if (layout.num_sentences() != n || static_cast<int>(quantiles.size()) != n)
    throw AlignmentError("sentence count mismatch between source and target");
  layout.sentence_delays.assign(static_cast<std::size_t>(n), 0);
  int previous_end = 0;
  for (int i = 0; i < n; ++i) {
    const int duration = u.sentence_boundaries[i + 1] - u.sentence_boundaries[i];
    const int delay = cfg.full_sentence_delay ? duration
                                              : sentence_delay_frames(quantiles[i], cfg.delta, duration);
    layout.sentence_delays[i] = delay;
    if (layout.sentence_offsets[i] == layout.sentence_offsets[i + 1]) continue;
    const int onset = std::max(u.sentence_boundaries[i] + delay, previous_end);
    const int shift = onset - layout.onset(i);
    for (int k = layout.sentence_offsets[i]; k < layout.sentence_offsets[i + 1]; ++k)
      layout.word_starts[k] += shift;
    previous_end = layout.sentence_end(i);
  }
  return layout;
}

TargetLayout insert_sentence_delays(const Utterance& u, TargetLayout layout, const AlignConfig& cfg,
                                    Rng& rng) {
  std::vector<double> quantiles(static_cast<std::size_t>(u.num_sentences()));
  for (auto& q : quantiles) q = rng.uniform();
  return insert_sentence_delays(u, std::move(layout), cfg, quantiles);
}

TargetLayout insert_punctuation_silences(TargetLayout layout, const AlignConfig& cfg,
                                         double frame_rate, Rng& rng) {
  if (!(cfg.mu >= 0.0)) throw ConfigError("align: mu must be >= 0");
  int shift = 0;
  for (int i = 0; i < layout.num_sentences(); ++i) {
    for (int k = layout.sentence_offsets[i]; k < layout.sentence_offsets[i + 1]; ++k) {
      layout.word_starts[k] += shift;
      const bool last_in_sentence = k + 1 == layout.sentence_offsets[i + 1];
      if (last_in_sentence || cfg.punctuation_rate <= 0.0 || cfg.mu <= 0.0) continue;
      if (rng.bernoulli(cfg.punctuation_rate))
        shift += punctuation_silence_frames(rng.uniform(), cfg.mu, frame_rate);
    }
  }
  return layout;
}

TargetLayout sample_target_layout(const Utterance& u, const AlignConfig& align, const EnvConfig& env,
                                  Rng& rng) {
  auto layout = insert_sentence_delays(u, initial_target_layout(u, env), align, rng);
  return insert_punctuation_silences(std::move(layout), align, env.frame_rate_hz, rng);
}

TokenGrid build_training_pair(const Utterance& u, const AlignConfig& align, const EnvConfig& env,
                              Rng& rng) {
  align.validate();
  return build_training_pair(u, align, env, sample_target_layout(u, align, env, rng));
}

TokenGrid build_training_pair(const Utterance& u, const AlignConfig& align, const EnvConfig& env,
                              const TargetLayout& layout) {
  if (layout.num_sentences() != u.num_sentences())
    throw AlignmentError("sentence count mismatch between source and target");
  const int source_end = u.duration_frames;
  const int target_end = layout.end();
  const int frames = std::max(align.input_eos ? source_end + 1 : source_end,
                              align.text_eos ? target_end + 1 : target_end);
  if (frames > align.max_frames)
    throw AlignmentError("pair rejected: " + std::to_string(frames) + " frames exceeds max_frames " +
                         std::to_string(align.max_frames));

  TokenGrid grid = render_source_streams(u, env);
  grid.resize_frames(frames);
  if (align.input_eos)
    for (int c = 0; c < env.num_codebooks; ++c) grid.at(source_end, grid.in_stream(c)) = audio_token::eos;

  const auto reference = u.reference();
  for (std::size_t k = 0; k < reference.size(); ++k) {
    const int start = layout.word_starts[k];
    const int word = reference[k] - text_token::first_word;
    grid.at(start, 0) = reference[k];
    for (int o = 0; o < env.frames_per_word; ++o)
      for (int c = 0; c < env.num_codebooks; ++c)
        grid.at(start + o, grid.out_stream(c)) = render_audio_token(env, Language::target, word, c, o);
  }
  if (align.text_eos) grid.at(target_end, 0) = text_token::eos;
  grid.fill_mask(true);
  return grid;
}

nlohmann::json grid_to_json(const TokenGrid& grid) {
  return nlohmann::json{{"frames", grid.num_frames()},
                        {"codebooks", grid.num_codebooks()},
                        {"tokens", std::vector<int>(grid.tokens().begin(), grid.tokens().end())}};
}

TokenGrid grid_from_json(const nlohmann::json& j) {
  try {
    TokenGrid grid(j.at("frames").get<int>(), j.at("codebooks").get<int>());
    const auto tokens = j.at("tokens").get<std::vector<int>>();
    if (tokens.size() != grid.tokens().size()) throw DataError("grid payload size mismatch");
    for (int t = 0; t < grid.num_frames(); ++t)
      for (int s = 0; s < grid.num_streams(); ++s)
        grid.at(t, s) = tokens[static_cast<std::size_t>(t) * grid.num_streams() + s];
    grid.fill_mask(true);
    return grid;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed grid payload: ") + e.what());
  }
}

nlohmann::json pair_to_json(const Utterance& u, const TokenGrid& grid) {
  auto j = utterance_to_json(u);
  j["grid"] = grid_to_json(grid);
  return j;
}

}  // namespace simulrl
