#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace simulrl {

struct IntRange {
  int min = 0;
  int max = 0;
  bool operator==(const IntRange&) const = default;
};

// Synthetic bilingual "speech" environment.
struct EnvConfig {
  int source_vocab_size = 50;
  IntRange words_per_sentence{4, 6};
  IntRange sentences_per_utterance{2, 3};
  int frames_per_word = 2;
  double frame_rate_hz = 12.5;
  int num_codebooks = 4;       // Q: one semantic level plus acoustic levels
  int codebook_size = 64;      // N_a, including reserved audio tokens
  int text_vocab_size = 53;    // N_W, word tokens plus PAD/BOS/EOS
  int reorder_window = 2;      // 0 or 1 = monotonic
  int sentence_gap_frames = 2; // silence between source sentences
  std::uint64_t seed = 1;

  void validate() const;  // throws ConfigError
  bool operator==(const EnvConfig&) const = default;
};

// Reserved text-stream ids; word tokens start at text_token::first_word.
namespace text_token {
inline constexpr int pad = 0;
inline constexpr int bos = 1;
inline constexpr int eos = 2;
inline constexpr int first_word = 3;
}  // namespace text_token

// Reserved audio ids shared by every codebook.
namespace audio_token {
inline constexpr int silence = 0;
inline constexpr int delay_fill = 1;  // front fill for delayed acoustic levels
inline constexpr int eos = 2;         // forced input end-of-stream column
inline constexpr int bos = 3;
inline constexpr int first_word = 4;
}  // namespace audio_token

enum class Language { source = 0, target = 1 };

// Translation map: source word id -> target text token.
inline int translate_word(int source_word) { return source_word + text_token::first_word; }
inline bool is_word_token(int text_token_id) { return text_token_id >= text_token::first_word; }

// sigma: target position j reads source position perm[j]. Reverses every
// block of `window` consecutive positions (a pairwise swap for window 2).
std::vector<int> reorder_permutation(int length, int window);

// Reference translation of one source sentence.
std::vector<int> translate_sentence(std::span<const int> source_sentence, int window);

struct Utterance {
  std::uint64_t seed = 0;
  std::vector<int> source_words;                  // source word ids
  std::vector<int> sentence_boundaries;           // t_0 = 0 < ... < t_n = duration
  std::vector<std::vector<int>> reference_sentences;  // target text tokens per sentence
  int duration_frames = 0;
  std::vector<int> word_end_frames;               // exclusive end frame per source word

  int num_sentences() const { return static_cast<int>(reference_sentences.size()); }
  int num_words() const { return static_cast<int>(source_words.size()); }
  // Index of the first source word of each sentence, plus a trailing total.
  std::vector<int> sentence_word_offsets() const;
  // Full reference y_T (all sentences concatenated).
  std::vector<int> reference() const;
  // Frame at which the last source word ends.
  int last_word_end() const { return word_end_frames.empty() ? 0 : word_end_frames.back(); }

  void validate(const EnvConfig& cfg) const;  // throws DataError
  bool operator==(const Utterance&) const = default;
};

Utterance generate_utterance(const EnvConfig& cfg, std::uint64_t utterance_seed);

// Frame-major grid of discrete tokens. Stream 0 is the text (inner monologue)
// stream, streams 1..Q the output audio codebooks and Q+1..2Q the input audio
// codebooks. Each cell carries a loss/train mask bit.
class TokenGrid {
 public:
  TokenGrid() = default;
  TokenGrid(int num_frames, int num_codebooks);

  int num_frames() const { return frames_; }
  int num_codebooks() const { return codebooks_; }
  int num_streams() const { return 2 * codebooks_ + 1; }
  int out_stream(int codebook) const { return 1 + codebook; }
  int in_stream(int codebook) const { return 1 + codebooks_ + codebook; }

  int at(int frame, int stream) const { return tokens_[index(frame, stream)]; }
  int& at(int frame, int stream) { return tokens_[index(frame, stream)]; }
  bool masked(int frame, int stream) const { return mask_[index(frame, stream)] != 0; }
  void set_mask(int frame, int stream, bool on) { mask_[index(frame, stream)] = on ? 1 : 0; }
  void fill_mask(bool on);
  std::size_t mask_count() const;

  int text(int frame) const { return at(frame, 0); }
  int out_audio(int frame, int codebook) const { return at(frame, out_stream(codebook)); }
  int in_audio(int frame, int codebook) const { return at(frame, in_stream(codebook)); }

  std::span<const int> tokens() const { return tokens_; }
  // Extends or truncates to `frames`; new frames are PAD text and silence audio.
  void resize_frames(int frames);

  bool operator==(const TokenGrid&) const = default;

 private:
  std::size_t index(int frame, int stream) const {
    return static_cast<std::size_t>(frame) * static_cast<std::size_t>(num_streams()) +
           static_cast<std::size_t>(stream);
  }

  int frames_ = 0;
  int codebooks_ = 0;
  std::vector<int> tokens_;
  std::vector<std::uint8_t> mask_;
};

// Audio token of word `word` at codebook `codebook` and intra-word frame
// offset `offset`. Injective in `word` for fixed (language, codebook, offset).
int render_audio_token(const EnvConfig& cfg, Language lang, int word, int codebook, int offset);
// Inverse of render_audio_token on any codebook; nullopt for reserved tokens.
std::optional<int> decode_audio_token(const EnvConfig& cfg, Language lang, int token, int codebook,
                                      int offset);

// Grid of duration_frames frames whose input streams hold the rendered source.
// Text is PAD and output audio silent; only input streams are masked in.
TokenGrid render_source_streams(const Utterance& u, const EnvConfig& cfg);

// Recovers the source word sequence from the semantic input codebook.
std::vector<int> read_source_words(const TokenGrid& grid, const Utterance& u, const EnvConfig& cfg);

struct SplitSizes {
  int train = 0;
  int valid = 0;
  int test = 0;
  bool operator==(const SplitSizes&) const = default;
};

struct CorpusSplits {
  std::vector<Utterance> train;
  std::vector<Utterance> valid;
  std::vector<Utterance> test;
};

enum class Split { train = 0, valid = 1, test = 2 };

// Utterance seed of item `index` in `split`; the ranges never overlap.
std::uint64_t split_seed(Split split, std::uint64_t index);

CorpusSplits split_corpus(const EnvConfig& cfg, SplitSizes sizes);

nlohmann::json utterance_to_json(const Utterance& u);
Utterance utterance_from_json(const nlohmann::json& j);  // throws DataError on schema violations

void write_manifest(const std::filesystem::path& path, std::span<const Utterance> utterances);
std::vector<Utterance> read_manifest(const std::filesystem::path& path);

}  // namespace simulrl
