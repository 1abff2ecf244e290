#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "simulrl/bleu.hpp"

using namespace simulrl;

namespace {

// Letters as token ids: a=1, b=2, ...
std::vector<int> toks(const char* s) {
  std::vector<int> out;
  for (; *s; ++s)
    if (*s != ' ') out.push_back(*s - 'a' + 1);
  return out;
}

const BleuConfig kNone{4, Smoothing::none};
const BleuConfig kExp{4, Smoothing::exponential};

}  // namespace

TEST_CASE("segment BLEU hand-computed table") {
  struct Case {
    const char* hyp;
    const char* ref;
    BleuConfig cfg;
    double expected;
  };
  const Case cases[] = {
      {"a b c d", "a b c d", kNone, 1.0},
      {"a b c d", "a b c e", kNone, 0.0},  // no 4-gram match
      {"a b c d", "a b c e", kExp, std::pow(3.0 / 4 * 2.0 / 3 * 1.0 / 2 * 1.0 / 2, 0.25)},
      {"a b c", "a b c d", kExp, std::exp(1.0 - 4.0 / 3.0)},  // effective order 3, brevity penalty
      {"a b c", "a b c d", kNone, 0.0},
      {"a a a a", "a b c d", kExp, std::pow(1.0 / 4 * 1.0 / 6 * 1.0 / 8 * 1.0 / 8, 0.25)},
      {"a b c d e", "a b c d", kNone, std::pow(4.0 / 5 * 3.0 / 4 * 2.0 / 3 * 1.0 / 2, 0.25)},
      {"", "a b c d", kExp, 0.0},
      {"b a", "a b", kExp, std::sqrt(0.5)},
      {"a b e", "a b c d", BleuConfig{1, Smoothing::none}, 2.0 / 3.0 * std::exp(1.0 - 4.0 / 3.0)},
      {"a b a b", "a b a b", kExp, 1.0},
      {"e f", "a b c d", kExp, 0.25 * std::exp(1.0 - 2.0)},  // smoothed 1/4 at both orders
  };
  for (const auto& c : cases) {
    CAPTURE(c.hyp);
    CAPTURE(c.ref);
    CHECK(std::abs(bleu(toks(c.hyp), toks(c.ref), c.cfg) - c.expected) < 1e-9);
  }
}

TEST_CASE("corpus BLEU aggregates statistics before scoring") {
  const std::vector<SegmentPair> a{{toks("a b c d"), toks("a b c d")}, {toks("a b c e"), toks("a b c d")}};
  CHECK(std::abs(corpus_bleu(a, kNone) - std::pow(7.0 / 8 * 5.0 / 6 * 3.0 / 4 * 1.0 / 2, 0.25)) < 1e-9);

  // The second segment alone has no 4-gram match, yet the corpus score is positive.
  const std::vector<SegmentPair> b{{toks("a b c"), toks("a b c d")}, {toks("a b c d e"), toks("a b c d")}};
  CHECK(std::abs(corpus_bleu(b, kNone) - std::pow(7.0 / 8 * 5.0 / 6 * 3.0 / 4 * 1.0 / 2, 0.25)) < 1e-9);

  CHECK_THROWS_AS(corpus_bleu(std::vector<SegmentPair>{}, kNone), std::invalid_argument);
}

TEST_CASE("BLEU properties") {
  CHECK(bleu(toks("a b c d"), toks("a b c d"), kExp) == doctest::Approx(1.0));
  // Argument order matters: the brevity penalty only applies to short hypotheses.
  CHECK(bleu(toks("a b c"), toks("a b c d"), kExp) != doctest::Approx(bleu(toks("a b c d"), toks("a b c"), kExp)));
  // Without zero counts, duplicating statistics leaves the score unchanged.
  const auto s = bleu_stats(toks("a b c d e"), toks("a b c d"), 4);
  BleuStats sum(4);
  sum += s;
  sum += s;
  CHECK(bleu_from_stats(sum, kNone) == doctest::Approx(bleu_from_stats(s, kNone)));
  // Exponential smoothing depends on the absolute n-gram totals.
  const auto z = bleu_stats(toks("a b c d"), toks("a b c e"), 4);
  BleuStats zz(4);
  zz += z;
  zz += z;
  CHECK(bleu_from_stats(zz, kExp) < bleu_from_stats(z, kExp));
  CHECK_THROWS(bleu(toks("a"), toks("a"), BleuConfig{0, Smoothing::none}));
}
