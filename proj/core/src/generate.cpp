#include "simulrl/generate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "model_internal.hpp"
#include "simulrl/errors.hpp"
#include "simulrl/rng.hpp"

namespace simulrl {

std::vector<int> Generation::text_tokens() const {
  std::vector<int> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(w.token);
  return out;
}

std::vector<int> Generation::text_tokens_until(int frame) const {
  std::vector<int> out;
  for (const auto& w : words) {
    if (w.frame > frame) break;
    out.push_back(w.token);
  }
  return out;
}

TokenGrid make_source_grid(const Utterance& u, const EnvConfig& env, int frames, int acoustic_delay) {
  TokenGrid grid = render_source_streams(u, env);
  const int total = std::max(frames, u.duration_frames + 1);
  grid.resize_frames(total);
  for (int c = 0; c < env.num_codebooks; ++c) grid.at(u.duration_frames, grid.in_stream(c)) = audio_token::eos;
  grid.fill_mask(false);
  TokenGrid delayed = apply_acoustic_delay(grid, acoustic_delay);
  delayed.resize_frames(frames);
  return delayed;
}

int sample_token(std::span<const double> logits, const SamplingConfig& cfg, Rng& rng) {
  const int n = static_cast<int>(logits.size());
  if (n == 0) throw std::invalid_argument("sample_token: empty logits");
  if (cfg.greedy || cfg.temperature <= 0.0 || cfg.top_k == 1)
    return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const int k = cfg.top_k > 0 ? std::min(cfg.top_k, n) : n;
  if (k < n) {
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
      return logits[a] > logits[b] || (logits[a] == logits[b] && a < b);
    });
    order.resize(static_cast<std::size_t>(k));
    std::sort(order.begin(), order.end());
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (int i : order) mx = std::max(mx, logits[i]);
  std::vector<double> weights(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) weights[i] = std::exp((logits[order[i]] - mx) / cfg.temperature);
  return order[rng.categorical(weights)];
}

namespace {

double log_softmax_at(const nn::RowVec& logits, int index) {
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return logits(index) - lse;
}

}  // namespace

Generation sample_translation(const ModelParams& params, const TokenGrid& source, const SamplingConfig& cfg,
                              Rng& rng, int max_frames) {
  const auto& mc = params.config;
  if (max_frames < 1) throw std::invalid_argument("sample_translation: max_frames must be >= 1");
  if (max_frames > mc.context_frames)
    throw DataError("sample_translation: max_frames exceeds the model context");
  if (source.num_codebooks() != mc.num_codebooks) throw DataError("source grid codebook mismatch");
  const int Q = mc.num_codebooks;

  Generation gen;
  gen.grid = TokenGrid(0, Q);
  gen.log_probs = Matrix(0, Q + 1);
  const auto m = detail::view(params);
  detail::IncrementalDecoder dec(params);

  for (int t = 0; t < max_frames; ++t) {
    const nn::RowVec z = dec.advance(detail::temporal_input(mc, m, gen.grid, t));
    gen.grid.resize_frames(t + 1);
    gen.log_probs.rows = t + 1;
    gen.log_probs.data.resize(static_cast<std::size_t>(t + 1) * (Q + 1));

    const nn::RowVec text_logits = dec.text_logits(z);
    const int word = sample_token({text_logits.data(), static_cast<std::size_t>(text_logits.size())}, cfg, rng);
    gen.grid.at(t, 0) = word;
    gen.grid.set_mask(t, 0, true);
    gen.log_probs(t, 0) = log_softmax_at(text_logits, word);

    dec.begin_frame(z);
    int previous = word;
    for (int c = 0; c < Q; ++c) {
      const nn::RowVec logits = dec.depth_step(c, previous);
      const int tok = sample_token({logits.data(), static_cast<std::size_t>(logits.size())}, cfg, rng);
      gen.grid.at(t, gen.grid.out_stream(c)) = tok;
      gen.grid.set_mask(t, gen.grid.out_stream(c), true);
      gen.log_probs(t, c + 1) = log_softmax_at(logits, tok);
      previous = tok;
    }
    for (int c = 0; c < Q; ++c) {
      const int in = t < source.num_frames() ? source.in_audio(t, c) : audio_token::silence;
      gen.grid.at(t, gen.grid.in_stream(c)) = in;
    }

    if (word == text_token::eos) {
      gen.eos_frame = t;
      break;
    }
    if (is_word_token(word)) gen.words.push_back({word, t});
  }
  return gen;
}

Matrix output_log_probs(const ModelParams& params, const TokenGrid& grid) {
  const Matrix all = token_log_probs(params, grid);
  const int Q = params.config.num_codebooks;
  Matrix out(all.rows, Q + 1);
  for (int t = 0; t < all.rows; ++t)
    for (int s = 0; s <= Q; ++s) out(t, s) = all(t, s);
  return out;
}

}  // namespace simulrl
