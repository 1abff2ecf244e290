#pragma once

#include <span>
#include <utility>
#include <vector>

namespace simulrl {

enum class Smoothing {
  none,
  // Each n-gram order with zero matches gets precision 1 / (2^k * total),
  // k counting the zero orders so far; the geometric mean only runs over the
  // orders the hypothesis is long enough to have (effective order).
  exponential,
};

struct BleuConfig {
  int max_order = 4;
  Smoothing smoothing = Smoothing::none;

  void validate() const;
};

// Sufficient statistics: clipped n-gram matches and hypothesis n-gram totals
// per order, plus lengths. Stats are additive over segments.
struct BleuStats {
  std::vector<long> matches;
  std::vector<long> totals;
  long hyp_length = 0;
  long ref_length = 0;

  explicit BleuStats(int max_order = 4) : matches(max_order, 0), totals(max_order, 0) {}

  BleuStats& operator+=(const BleuStats& other);
  bool operator==(const BleuStats&) const = default;
};

BleuStats bleu_stats(std::span<const int> hypothesis, std::span<const int> reference,
                     int max_order);

double bleu_from_stats(const BleuStats& stats, const BleuConfig& cfg);

// Segment BLEU in [0, 1]. Argument order matters.
double bleu(std::span<const int> hypothesis, std::span<const int> reference,
            const BleuConfig& cfg = {});

using SegmentPair = std::pair<std::vector<int>, std::vector<int>>;  // (hypothesis, reference)

// Aggregates n-gram statistics over all pairs before computing precision and
// brevity penalty. Throws std::invalid_argument on an empty corpus.
double corpus_bleu(std::span<const SegmentPair> pairs, const BleuConfig& cfg = {});

}  // namespace simulrl
