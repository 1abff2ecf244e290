#include <doctest.h>

#include <cmath>
#include <numeric>

#include "../support.hpp"
#include "simulrl/errors.hpp"
#include "simulrl/generate.hpp"

using namespace simulrl;
using namespace simulrl::testing;

TEST_CASE("micro model stays below 10k parameters") {
  const auto env = micro_env();
  const auto p = ModelParams::initialize(micro_model(env), 1);
  CHECK(p.size() < 10000);
  CHECK(p.all_finite());
}

TEST_CASE("supervised gradient matches central finite differences") {
  const auto env = micro_env();
  const auto mc = micro_model(env);
  auto p = ModelParams::initialize(mc, 3);
  const auto grid = micro_pair(env, mc, 5);
  const auto lg = supervised_loss_and_grads(p, grid);

  Rng rng(11);
  for (const auto& t : p.layout->tensors()) {
    const std::size_t i = t.offset + static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(t.size()) - 1));
    const double h = 1e-5;
    const double v = p.values[i];
    p.values[i] = v + h;
    const double up = supervised_loss_and_grads(p, grid).loss;
    p.values[i] = v - h;
    const double down = supervised_loss_and_grads(p, grid).loss;
    p.values[i] = v;
    const double fd = (up - down) / (2 * h);
    CAPTURE(t.name);
    CHECK(std::abs(fd - lg.grad[i]) <= 1e-4 * std::max(std::abs(fd), 1e-6));
  }
}

TEST_CASE("batch loss is a token mean") {
  const auto env = micro_env();
  const auto mc = micro_model(env);
  const auto p = ModelParams::initialize(mc, 3);
  const auto g = micro_pair(env, mc, 5);
  const std::vector<TokenGrid> one{g};
  const std::vector<TokenGrid> two{g, g};
  CHECK(supervised_loss_and_grads(p, two).loss == doctest::Approx(supervised_loss_and_grads(p, one).loss));
  CHECK(supervised_loss_and_grads(p, two, 2).grad == supervised_loss_and_grads(p, two, 1).grad);

  TokenGrid empty = g;
  empty.fill_mask(false);
  CHECK_THROWS_AS(supervised_loss_and_grads(p, empty), DataError);
}

TEST_CASE("uniform logits give ln V per token") {
  const auto env = micro_env();
  const auto mc = micro_model(env);
  auto p = ModelParams::initialize(mc, 3);
  // Zero readouts make every distribution uniform.
  std::fill(p.tensor("text_head").begin(), p.tensor("text_head").end(), 0.0);
  for (int s = 0; s < mc.depth_steps(); ++s) {
    auto head = p.tensor("depth.head" + std::to_string(s));
    std::fill(head.begin(), head.end(), 0.0);
  }
  const auto grid = micro_pair(env, mc, 2);
  const auto lp = token_log_probs(p, grid);
  for (int t = 0; t < grid.num_frames(); ++t) {
    CHECK(lp(t, 0) == doctest::Approx(-std::log(mc.text_vocab_size)));
    CHECK(lp(t, 1) == doctest::Approx(-std::log(mc.audio_vocab_size)));
  }
}

TEST_CASE("temporal causality") {
  const auto env = micro_env();
  const auto mc = micro_model(env);
  const auto p = ModelParams::initialize(mc, 4);
  auto grid = micro_pair(env, mc, 6);
  const auto z0 = temporal_forward(p, grid);
  grid.at(5, 1) = (grid.at(5, 1) + 1) % mc.audio_vocab_size;
  const auto z1 = temporal_forward(p, grid);
  for (int t = 0; t < grid.num_frames(); ++t) {
    const bool same = std::equal(z0.row(t).begin(), z0.row(t).end(), z1.row(t).begin());
    if (t <= 5)
      CHECK(same);  // row t sees columns < t
    else if (t == 6)
      CHECK_FALSE(same);
  }
  CHECK(temporal_forward(p, grid) == z1);

  TokenGrid too_long(mc.context_frames + 1, mc.num_codebooks);
  CHECK_THROWS_AS(temporal_forward(p, too_long), DataError);
}

TEST_CASE("depth causality and normalized logits") {
  const auto env = micro_env();
  const auto mc = micro_model(env);
  const auto p = ModelParams::initialize(mc, 4);
  const auto grid = micro_pair(env, mc, 6);
  const auto z = temporal_forward(p, grid);
  std::vector<int> tokens(grid.tokens().begin() + 3 * grid.num_streams(),
                          grid.tokens().begin() + 4 * grid.num_streams());
  const auto l0 = depth_forward(p, z.row(3), tokens);
  tokens[3] = (tokens[3] + 1) % mc.audio_vocab_size;
  const auto l1 = depth_forward(p, z.row(3), tokens);
  for (int s = 0; s < mc.num_streams(); ++s) {
    const bool same = std::equal(l0.row(s).begin(), l0.row(s).end(), l1.row(s).begin());
    if (s <= 3)
      CHECK(same);
    else if (s == 4)
      CHECK_FALSE(same);
    double total = 0.0;
    for (int v = 0; v < mc.vocab_size(s); ++v) total += std::exp(l0(s, v) - [&] {
      double mx = -1e300;
      for (int k = 0; k < mc.vocab_size(s); ++k) mx = std::max(mx, l0(s, k));
      double acc = 0.0;
      for (int k = 0; k < mc.vocab_size(s); ++k) acc += std::exp(l0(s, k) - mx);
      return mx + std::log(acc);
    }());
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("acoustic delay round trip") {
  const auto env = micro_env();
  const auto mc = micro_model(env);
  const auto u = generate_utterance(env, 3);
  Rng rng(1);
  const auto g = build_training_pair(u, micro_align(), env, rng);
  CHECK(apply_acoustic_delay(g, 0) == g);
  const auto d = apply_acoustic_delay(g, 2);
  for (int t = 0; t + 2 < g.num_frames(); ++t) {
    CHECK(d.at(t + 2, g.out_stream(1)) == g.at(t, g.out_stream(1)));
    CHECK(d.at(t + 2, g.in_stream(1)) == g.at(t, g.in_stream(1)));
    CHECK(d.at(t, g.out_stream(0)) == g.at(t, g.out_stream(0)));
  }
  CHECK(d.at(0, g.out_stream(1)) == audio_token::delay_fill);
  const auto r = realign(d, 2);
  for (int t = 0; t + 2 < g.num_frames(); ++t)
    for (int s = 0; s < g.num_streams(); ++s) CHECK(r.at(t, s) == g.at(t, s));
}

TEST_CASE("sampling is reproducible and its log-probs match rescoring") {
  const auto env = micro_env();
  const auto mc = micro_model(env);
  const auto p = ModelParams::initialize(mc, 8);
  const auto u = generate_utterance(env, 9);
  const auto src = make_source_grid(u, env, 40, mc.acoustic_delay_frames);
  SamplingConfig sc{0.8, 250, false};
  Rng a(5), b(5);
  const auto g1 = sample_translation(p, src, sc, a, 40);
  const auto g2 = sample_translation(p, src, sc, b, 40);
  CHECK(g1.grid == g2.grid);
  CHECK(g1.log_probs == g2.log_probs);

  const auto rescored = output_log_probs(p, g1.grid);
  for (int t = 0; t < g1.grid.num_frames(); ++t)
    for (int s = 0; s <= mc.num_codebooks; ++s) {
      CHECK(std::abs(rescored(t, s) - g1.log_probs(t, s)) < 1e-10);
      CHECK(g1.log_probs(t, s) <= 0.0);
    }
  for (int t = 0; t < g1.grid.num_frames(); ++t)
    for (int c = 0; c < mc.num_codebooks; ++c) CHECK(g1.grid.in_audio(t, c) == src.in_audio(t, c));
  for (const auto& w : g1.words) CHECK(is_word_token(w.token));
}

TEST_CASE("greedy decoding equals top-k 1") {
  const auto env = micro_env();
  const auto mc = micro_model(env);
  const auto p = ModelParams::initialize(mc, 8);
  const auto src = make_source_grid(generate_utterance(env, 2), env, 30, mc.acoustic_delay_frames);
  Rng a(1), b(2);
  const auto greedy = sample_translation(p, src, SamplingConfig{0.8, 250, true}, a, 30);
  const auto top1 = sample_translation(p, src, SamplingConfig{0.8, 1, false}, b, 30);
  CHECK(greedy.grid == top1.grid);
}

TEST_CASE("sample_token honours top-k") {
  const std::vector<double> logits{0.0, 5.0, 4.9, -1.0};
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const int t = sample_token(logits, SamplingConfig{1.0, 2, false}, rng);
    CHECK((t == 1 || t == 2));
  }
  CHECK(sample_token(logits, SamplingConfig{0.0, 250, false}, rng) == 1);
}
