#include "simulrl/corpus.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <numeric>
#include <string>

#include <nlohmann/json.hpp>

#include "simulrl/errors.hpp"
#include "simulrl/rng.hpp"

namespace simulrl {

void EnvConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("env: " + msg); };
  if (source_vocab_size < 1) fail("source_vocab_size must be >= 1");
  if (words_per_sentence.min < 1 || words_per_sentence.max < words_per_sentence.min)
    fail("words_per_sentence must be a non-empty range of positive counts");
  if (sentences_per_utterance.min < 1 || sentences_per_utterance.max < sentences_per_utterance.min)
    fail("sentences_per_utterance must be a non-empty range of positive counts");
  if (frames_per_word < 1) fail("frames_per_word must be >= 1");
  if (!(frame_rate_hz > 0.0)) fail("frame_rate_hz must be positive");
  if (num_codebooks < 2) fail("num_codebooks must be >= 2 (semantic + acoustic)");
  if (reorder_window < 0 || reorder_window >= words_per_sentence.min)
    fail("reorder_window must be in [0, min words_per_sentence)");
  if (text_vocab_size < source_vocab_size + text_token::first_word)
    fail("text_vocab_size must be >= source_vocab_size + 3");
  if (codebook_size - audio_token::first_word < source_vocab_size)
    fail("codebook_size too small for an injective word rendering");
  if (sentence_gap_frames < 0) fail("sentence_gap_frames must be >= 0");
}

std::vector<int> reorder_permutation(int length, int window) {
  std::vector<int> perm(static_cast<std::size_t>(std::max(length, 0)));
  std::iota(perm.begin(), perm.end(), 0);
  if (window <= 1) return perm;
  for (int start = 0; start < length; start += window) {
    const int end = std::min(start + window, length);
    std::reverse(perm.begin() + start, perm.begin() + end);
  }
  return perm;
}

std::vector<int> translate_sentence(std::span<const int> source_sentence, int window) {
  const auto perm = reorder_permutation(static_cast<int>(source_sentence.size()), window);
  std::vector<int> out;
  out.reserve(perm.size());
  for (int p : perm) out.push_back(translate_word(source_sentence[p]));
  return out;
}

std::vector<int> Utterance::sentence_word_offsets() const {
  std::vector<int> offsets{0};
  for (const auto& s : reference_sentences) offsets.push_back(offsets.back() + static_cast<int>(s.size()));
  return offsets;
}

std::vector<int> Utterance::reference() const {
  std::vector<int> out;
  for (const auto& s : reference_sentences) out.insert(out.end(), s.begin(), s.end());
  return out;
}

void Utterance::validate(const EnvConfig& cfg) const {
  auto fail = [](const std::string& msg) { throw DataError("utterance: " + msg); };
  const int n = num_sentences();
  if (n < 1) fail("no sentences");
  if (static_cast<int>(sentence_boundaries.size()) != n + 1) fail("boundary count != sentences + 1");
  if (sentence_boundaries.front() != 0) fail("t_0 must be 0");
  if (sentence_boundaries.back() != duration_frames) fail("t_n must equal duration_frames");
  for (int i = 0; i < n; ++i)
    if (sentence_boundaries[i + 1] <= sentence_boundaries[i]) fail("boundaries not strictly increasing");
  if (word_end_frames.size() != source_words.size()) fail("word_end_frames size mismatch");
  const auto offsets = sentence_word_offsets();
  if (offsets.back() != num_words()) fail("reference word count differs from source word count");
  for (int w : source_words)
    if (w < 0 || w >= cfg.source_vocab_size) fail("source word out of vocabulary");
  for (int i = 0; i < n; ++i) {
    std::span<const int> src(source_words.data() + offsets[i], offsets[i + 1] - offsets[i]);
    if (translate_sentence(src, cfg.reorder_window) != reference_sentences[i])
      fail("reference sentence is not the translation of its source sentence");
    for (int k = offsets[i]; k < offsets[i + 1]; ++k) {
      const int end = word_end_frames[k];
      if (end - cfg.frames_per_word < sentence_boundaries[i] || end > sentence_boundaries[i + 1])
        fail("word end frame outside its sentence span");
    }
  }
}

Utterance generate_utterance(const EnvConfig& cfg, std::uint64_t utterance_seed) {
  Rng rng(derive_seed(cfg.seed, {utterance_seed}));
  Utterance u;
  u.seed = utterance_seed;
  const int n = rng.uniform_int(cfg.sentences_per_utterance.min, cfg.sentences_per_utterance.max);
  int t = 0;
  u.sentence_boundaries.push_back(0);
  for (int i = 0; i < n; ++i) {
    const int len = rng.uniform_int(cfg.words_per_sentence.min, cfg.words_per_sentence.max);
    std::vector<int> sentence;
    for (int k = 0; k < len; ++k) {
      sentence.push_back(rng.uniform_int(0, cfg.source_vocab_size - 1));
      u.word_end_frames.push_back(t + (k + 1) * cfg.frames_per_word);
    }
    t += len * cfg.frames_per_word;
    if (i + 1 < n) t += cfg.sentence_gap_frames;
    u.sentence_boundaries.push_back(t);
    u.reference_sentences.push_back(translate_sentence(sentence, cfg.reorder_window));
    u.source_words.insert(u.source_words.end(), sentence.begin(), sentence.end());
  }
  u.duration_frames = t;
  return u;
}

TokenGrid::TokenGrid(int num_frames, int num_codebooks)
    : frames_(num_frames), codebooks_(num_codebooks) {
  if (num_frames < 0 || num_codebooks < 1) throw std::invalid_argument("TokenGrid: bad shape");
  const auto cells = static_cast<std::size_t>(num_frames) * static_cast<std::size_t>(num_streams());
  tokens_.assign(cells, audio_token::silence);
  mask_.assign(cells, 0);
  for (int t = 0; t < frames_; ++t) at(t, 0) = text_token::pad;
}

void TokenGrid::fill_mask(bool on) { std::fill(mask_.begin(), mask_.end(), on ? 1 : 0); }

std::size_t TokenGrid::mask_count() const {
  return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), std::uint8_t{1}));
}

void TokenGrid::resize_frames(int frames) {
  if (frames < 0) throw std::invalid_argument("TokenGrid: negative frame count");
  const int old = frames_;
  const auto cells = static_cast<std::size_t>(frames) * static_cast<std::size_t>(num_streams());
  tokens_.resize(cells, audio_token::silence);
  mask_.resize(cells, 0);
  frames_ = frames;
  for (int t = old; t < frames_; ++t) at(t, 0) = text_token::pad;
}

namespace {

struct HashParams {
  long multiplier;
  long inverse;
  long offset_step;
  long shift;
};

long modular_inverse(long a, long m) {
  long t = 0, new_t = 1, r = m, new_r = a % m;
  while (new_r != 0) {
    const long q = r / new_r;
    t = std::exchange(new_t, t - q * new_t);
    r = std::exchange(new_r, r - q * new_r);
  }
  if (r != 1) throw ConfigError("audio rendering: multiplier not invertible");
  return t < 0 ? t + m : t;
}

HashParams hash_params(const EnvConfig& cfg, Language lang, int codebook) {
  static constexpr std::array<long, 24> primes{7,  11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47,
                                               53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103};
  const long m = cfg.codebook_size - audio_token::first_word;
  const long slot = static_cast<long>(lang) * cfg.num_codebooks + codebook;
  long seen = 0;
  long multiplier = 1;
  for (std::size_t i = 0; i < primes.size() * 4; ++i) {
    const long p = primes[i % primes.size()] + static_cast<long>(i / primes.size()) * 104;
    if (std::gcd(p, m) != 1) continue;
    if (seen++ == slot) {
      multiplier = p;
      break;
    }
  }
  return {multiplier % m, modular_inverse(multiplier % m, m), 5 + 2L * codebook + 3L * static_cast<long>(lang),
          11L * codebook + 29L * static_cast<long>(lang) + 1};
}

long positive_mod(long x, long m) { return ((x % m) + m) % m; }

}  // namespace

int render_audio_token(const EnvConfig& cfg, Language lang, int word, int codebook, int offset) {
  const long m = cfg.codebook_size - audio_token::first_word;
  if (word < 0 || word >= m)
    throw ConfigError("audio rendering: vocabulary overflow (codebook_size too small)");
  const auto h = hash_params(cfg, lang, codebook);
  return audio_token::first_word +
         static_cast<int>(positive_mod(word * h.multiplier + offset * h.offset_step + h.shift, m));
}

std::optional<int> decode_audio_token(const EnvConfig& cfg, Language lang, int token, int codebook,
                                      int offset) {
  if (token < audio_token::first_word) return std::nullopt;
  const long m = cfg.codebook_size - audio_token::first_word;
  const auto h = hash_params(cfg, lang, codebook);
  const long base = positive_mod(token - audio_token::first_word - offset * h.offset_step - h.shift, m);
  return static_cast<int>(positive_mod(base * h.inverse, m));
}

TokenGrid render_source_streams(const Utterance& u, const EnvConfig& cfg) {
  TokenGrid grid(u.duration_frames, cfg.num_codebooks);
  for (int k = 0; k < u.num_words(); ++k) {
    const int start = u.word_end_frames[k] - cfg.frames_per_word;
    for (int o = 0; o < cfg.frames_per_word; ++o)
      for (int c = 0; c < cfg.num_codebooks; ++c)
        grid.at(start + o, grid.in_stream(c)) =
            render_audio_token(cfg, Language::source, u.source_words[k], c, o);
  }
  for (int t = 0; t < grid.num_frames(); ++t)
    for (int c = 0; c < cfg.num_codebooks; ++c) grid.set_mask(t, grid.in_stream(c), true);
  return grid;
}

std::vector<int> read_source_words(const TokenGrid& grid, const Utterance& u, const EnvConfig& cfg) {
  std::vector<int> words;
  for (int k = 0; k < u.num_words(); ++k) {
    const int start = u.word_end_frames[k] - cfg.frames_per_word;
    auto w = decode_audio_token(cfg, Language::source, grid.in_audio(start, 0), 0, 0);
    if (!w) throw DataError("read_source_words: silence where a word was expected");
    words.push_back(*w);
  }
  return words;
}

std::uint64_t split_seed(Split split, std::uint64_t index) {
  return (static_cast<std::uint64_t>(split) << 40) + index;
}

CorpusSplits split_corpus(const EnvConfig& cfg, SplitSizes sizes) {
  cfg.validate();
  if (sizes.train < 0 || sizes.valid < 0 || sizes.test < 0)
    throw ConfigError("split sizes must be non-negative");
  CorpusSplits out;
  auto fill = [&](std::vector<Utterance>& dst, Split split, int n) {
    dst.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) dst.push_back(generate_utterance(cfg, split_seed(split, i)));
  };
  fill(out.train, Split::train, sizes.train);
  fill(out.valid, Split::valid, sizes.valid);
  fill(out.test, Split::test, sizes.test);
  return out;
}

nlohmann::json utterance_to_json(const Utterance& u) {
  return nlohmann::json{{"seed", u.seed},
                        {"duration_frames", u.duration_frames},
                        {"boundaries", u.sentence_boundaries},
                        {"words", u.source_words},
                        {"word_end_frames", u.word_end_frames},
                        {"references", u.reference_sentences}};
}

Utterance utterance_from_json(const nlohmann::json& j) {
  static const std::array<const char*, 6> keys{"seed",  "duration_frames", "boundaries",
                                                "words", "word_end_frames", "references"};
  if (!j.is_object()) throw DataError("manifest record is not an object");
  for (const char* k : keys)
    if (!j.contains(k)) throw DataError(std::string("manifest record missing field '") + k + "'");
  for (const auto& [k, v] : j.items()) {
    (void)v;
    if (std::find_if(keys.begin(), keys.end(), [&](const char* s) { return k == s; }) == keys.end())
      throw DataError("manifest record has unknown field '" + k + "'");
  }
  try {
    Utterance u;
    u.seed = j.at("seed").get<std::uint64_t>();
    u.duration_frames = j.at("duration_frames").get<int>();
    u.sentence_boundaries = j.at("boundaries").get<std::vector<int>>();
    u.source_words = j.at("words").get<std::vector<int>>();
    u.word_end_frames = j.at("word_end_frames").get<std::vector<int>>();
    u.reference_sentences = j.at("references").get<std::vector<std::vector<int>>>();
    return u;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("manifest record has a malformed field: ") + e.what());
  }
}

void write_manifest(const std::filesystem::path& path, std::span<const Utterance> utterances) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write manifest: " + path.string());
  for (const auto& u : utterances) out << utterance_to_json(u).dump() << '\n';
  if (!out) throw DataError("error while writing manifest: " + path.string());
}

std::vector<Utterance> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read manifest: " + path.string());
  std::vector<Utterance> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(utterance_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace simulrl
