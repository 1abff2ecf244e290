#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "../support.hpp"
#include "simulrl/alignment.hpp"
#include "simulrl/errors.hpp"
#include "simulrl/rng.hpp"

using namespace simulrl;
using namespace simulrl::testing;

TEST_CASE("utterance generation is deterministic and valid") {
  const EnvConfig env;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto a = generate_utterance(env, s);
    CHECK(a == generate_utterance(env, s));
    CHECK_NOTHROW(a.validate(env));
    CHECK(a.sentence_boundaries.front() == 0);
    CHECK(a.sentence_boundaries.back() == a.duration_frames);
    CHECK(a.num_sentences() >= env.sentences_per_utterance.min);
    CHECK(a.num_sentences() <= env.sentences_per_utterance.max);
    for (int i = 0; i < a.num_sentences(); ++i) {
      const int n = static_cast<int>(a.reference_sentences[i].size());
      CHECK(n >= env.words_per_sentence.min);
      CHECK(n <= env.words_per_sentence.max);
    }
  }
  CHECK_FALSE(generate_utterance(env, 1) == generate_utterance(env, 2));
}

TEST_CASE("reordering reverses windows") {
  CHECK(reorder_permutation(5, 2) == std::vector<int>{1, 0, 3, 2, 4});
  CHECK(reorder_permutation(4, 1) == std::vector<int>{0, 1, 2, 3});
  CHECK(reorder_permutation(5, 3) == std::vector<int>{2, 1, 0, 4, 3});
  const std::vector<int> src{7, 8, 9};
  CHECK(translate_sentence(src, 2) == std::vector<int>{translate_word(8), translate_word(7), translate_word(9)});
}

TEST_CASE("splits are disjoint and reproducible") {
  const EnvConfig env;
  const SplitSizes sizes{30, 10, 10};
  const auto a = split_corpus(env, sizes);
  const auto b = split_corpus(env, sizes);
  CHECK(a.train == b.train);
  CHECK(a.valid == b.valid);
  std::set<std::uint64_t> seeds;
  for (const auto* part : {&a.train, &a.valid, &a.test})
    for (const auto& u : *part) seeds.insert(u.seed);
  CHECK(seeds.size() == 50);
  CHECK(split_seed(Split::train, 0) != split_seed(Split::valid, 0));
}

TEST_CASE("manifest round trip and schema errors") {
  const EnvConfig env;
  const auto splits = split_corpus(env, {5, 0, 0});
  const auto dir = std::filesystem::temp_directory_path() / "simulrl_test_manifest";
  std::filesystem::create_directories(dir);
  const auto path = dir / "train.jsonl";
  write_manifest(path, splits.train);
  CHECK(read_manifest(path) == splits.train);

  auto j = utterance_to_json(splits.train[0]);
  CHECK(utterance_from_json(j) == splits.train[0]);
  auto broken = j;
  broken.erase("references");
  CHECK_THROWS_AS(utterance_from_json(broken), DataError);
  broken = j;
  broken["boundaries"] = "0 5";
  CHECK_THROWS_AS(utterance_from_json(broken), DataError);
  broken = j;
  broken["extra"] = 1;
  CHECK_THROWS_AS(utterance_from_json(broken), DataError);

  std::ofstream(dir / "bad.jsonl") << "{not json}\n";
  CHECK_THROWS_AS(read_manifest(dir / "bad.jsonl"), DataError);
  CHECK_THROWS_AS(read_manifest(dir / "missing.jsonl"), DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("audio rendering is injective and invertible") {
  const EnvConfig env;
  for (auto lang : {Language::source, Language::target})
    for (int c = 0; c < env.num_codebooks; ++c)
      for (int o = 0; o < env.frames_per_word; ++o) {
        std::set<int> seen;
        for (int w = 0; w < env.source_vocab_size; ++w) {
          const int tok = render_audio_token(env, lang, w, c, o);
          CHECK(tok >= audio_token::first_word);
          CHECK(tok < env.codebook_size);
          seen.insert(tok);
          CHECK(decode_audio_token(env, lang, tok, c, o) == w);
        }
        CHECK(static_cast<int>(seen.size()) == env.source_vocab_size);
        CHECK_FALSE(decode_audio_token(env, lang, audio_token::silence, c, o).has_value());
      }
  const auto u = generate_utterance(env, 4);
  CHECK(read_source_words(render_source_streams(u, env), u, env) == u.source_words);
}

TEST_CASE("sentence delays are bounded by delta times the sentence duration") {
  CHECK(sentence_delay_frames(0.0, 0.5, 9) == 0);
  CHECK(sentence_delay_frames(1.0, 0.5, 9) == 4);  // rounding may not exceed 4.5
  CHECK(sentence_delay_frames(0.5, 0.5, 10) == 3); // 2.5 rounds half up
  CHECK(sentence_delay_frames(1.0, 0.5, 10) == 5);
  CHECK(punctuation_silence_frames(0.5, 0.32, 12.5) == 2);
  CHECK(punctuation_silence_frames(0.0, 0.32, 12.5) == 0);

  const EnvConfig env;
  const auto u = generate_utterance(env, 7);
  AlignConfig cfg;
  cfg.delta = 0.5;
  const std::vector<double> q(u.num_sentences(), 1.0);
  const auto layout = insert_sentence_delays(u, initial_target_layout(u, env), cfg, q);
  for (int i = 0; i < u.num_sentences(); ++i) {
    const int d = u.sentence_boundaries[i + 1] - u.sentence_boundaries[i];
    CHECK(layout.sentence_delays[i] <= 0.5 * d);
    CHECK(layout.onset(i) >= u.sentence_boundaries[i] + layout.sentence_delays[i]);
    if (i > 0) CHECK(layout.onset(i) >= layout.sentence_end(i - 1));
  }
  CHECK_THROWS_AS(insert_sentence_delays(u, initial_target_layout(u, env), cfg, std::vector<double>{0.5}),
                  AlignmentError);

  cfg.full_sentence_delay = true;
  const auto full = insert_sentence_delays(u, initial_target_layout(u, env), cfg, q);
  for (int i = 0; i < u.num_sentences(); ++i) CHECK(full.onset(i) >= u.sentence_boundaries[i + 1]);
}

TEST_CASE("training pairs place EOS tokens and target words") {
  const EnvConfig env;
  const auto u = generate_utterance(env, 11);
  AlignConfig cfg;
  cfg.mu = 0.32;
  Rng rng(3);
  const auto layout = sample_target_layout(u, cfg, env, rng);
  const auto grid = build_training_pair(u, cfg, env, layout);
  CHECK(grid.num_frames() == std::max(u.duration_frames, layout.end()) + 1);
  for (int c = 0; c < env.num_codebooks; ++c) CHECK(grid.in_audio(u.duration_frames, c) == audio_token::eos);
  CHECK(grid.text(layout.end()) == text_token::eos);

  std::vector<int> words;
  for (int t = 0; t < grid.num_frames(); ++t)
    if (is_word_token(grid.text(t))) words.push_back(grid.text(t));
  CHECK(words == u.reference());

  // Layouts drawn from the same stream are identical.
  Rng r1(9), r2(9);
  CHECK(build_training_pair(u, cfg, env, r1) == build_training_pair(u, cfg, env, r2));

  cfg.max_frames = 5;
  Rng r3(1);
  CHECK_THROWS_AS(build_training_pair(u, cfg, env, r3), AlignmentError);
}

TEST_CASE("grid json round trip") {
  const auto env = micro_env();
  const auto mc = micro_model(env);
  const auto g = micro_pair(env, mc, 1);
  CHECK(grid_from_json(grid_to_json(g)) == g);
  auto j = grid_to_json(g);
  j["frames"] = g.num_frames() + 1;
  CHECK_THROWS_AS(grid_from_json(j), DataError);
}

TEST_CASE("configuration validation") {
  EnvConfig env;
  env.num_codebooks = 0;
  CHECK_THROWS_AS(env.validate(), ConfigError);
  AlignConfig a;
  a.delta = 1.5;
  CHECK_THROWS_AS(a.validate(), ConfigError);
}
