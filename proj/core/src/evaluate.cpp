#include "simulrl/evaluate.hpp"

#include <stdexcept>

#include "simulrl/bleu.hpp"
#include "simulrl/parallel.hpp"
#include "simulrl/rng.hpp"

namespace simulrl {

LatencyInput latency_input(const Utterance& u, std::span<const int> word_frames, const EnvConfig& env) {
  LatencyInput in;
  in.source_duration = u.duration_frames / env.frame_rate_hz;
  in.source_last_word_end = u.last_word_end() / env.frame_rate_hz;
  in.reference_words = static_cast<int>(u.reference().size());
  for (int f : word_frames) in.word_end_times.push_back(f / env.frame_rate_hz);
  return in;
}

ItemResult score_item(const Utterance& u, std::span<const int> hypothesis, std::span<const int> word_frames,
                      const EnvConfig& env, bool reached_eos) {
  ItemResult r;
  r.seed = u.seed;
  r.hypothesis.assign(hypothesis.begin(), hypothesis.end());
  r.reference = u.reference();
  r.word_frames.assign(word_frames.begin(), word_frames.end());
  r.sentence_bleu = bleu(r.hypothesis, r.reference, {4, Smoothing::exponential});
  const auto lat = latency_input(u, word_frames, env);
  r.laal = laal(lat);
  r.end_offset = end_offset(lat);
  r.reached_eos = reached_eos;
  return r;
}

EvalReport aggregate(std::vector<ItemResult> items) {
  if (items.empty()) throw std::invalid_argument("evaluate: empty evaluation set");
  EvalReport rep;
  std::vector<SegmentPair> pairs;
  double laal_sum = 0.0;
  double end_sum = 0.0;
  for (const auto& it : items) {
    pairs.emplace_back(it.hypothesis, it.reference);
    if (it.laal) {
      laal_sum += *it.laal;
      ++rep.laal_count;
    }
    if (it.end_offset) {
      end_sum += *it.end_offset;
      ++rep.end_offset_count;
    }
  }
  rep.corpus_bleu = corpus_bleu(pairs, {4, Smoothing::none});
  rep.mean_laal = rep.laal_count ? laal_sum / rep.laal_count : 0.0;
  rep.mean_end_offset = rep.end_offset_count ? end_sum / rep.end_offset_count : 0.0;
  rep.items = std::move(items);
  return rep;
}

EvalReport evaluate(const ModelParams& params, std::span<const Utterance> utterances, const EnvConfig& env,
                    const DecodeConfig& decode, int workers) {
  if (utterances.empty()) throw std::invalid_argument("evaluate: empty evaluation set");
  const int frames = std::min(decode.max_frames, params.config.context_frames);
  std::vector<ItemResult> items(utterances.size());
  parallel_for(static_cast<int>(utterances.size()), workers, [&](int i) {
    const auto& u = utterances[i];
    const TokenGrid source = make_source_grid(u, env, frames, params.config.acoustic_delay_frames);
    Rng rng(derive_seed(decode.seed, {static_cast<std::uint64_t>(i)}));
    const Generation gen = sample_translation(params, source, decode.sampling, rng, frames);
    std::vector<int> word_frames;
    for (const auto& w : gen.words) word_frames.push_back(w.frame);
    items[i] = score_item(u, gen.text_tokens(), word_frames, env, gen.eos_frame.has_value());
  });
  return aggregate(std::move(items));
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& it : items) {
    nlohmann::json r = {{"seed", it.seed},
                        {"hypothesis", it.hypothesis},
                        {"reference", it.reference},
                        {"word_frames", it.word_frames},
                        {"bleu", it.sentence_bleu},
                        {"reached_eos", it.reached_eos}};
    r["laal"] = it.laal ? nlohmann::json(*it.laal) : nlohmann::json(nullptr);
    r["end_offset"] = it.end_offset ? nlohmann::json(*it.end_offset) : nlohmann::json(nullptr);
    rows.push_back(std::move(r));
  }
  return {{"bleu", corpus_bleu},
          {"laal", mean_laal},
          {"end_offset", mean_end_offset},
          {"items", static_cast<int>(items.size())},
          {"laal_count", laal_count},
          {"end_offset_count", end_offset_count},
          {"per_item", rows}};
}

}  // namespace simulrl
