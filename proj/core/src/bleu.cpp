#include "simulrl/bleu.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace simulrl {

void BleuConfig::validate() const {
  if (max_order < 1) throw std::invalid_argument("bleu: max_order must be >= 1");
}

BleuStats& BleuStats::operator+=(const BleuStats& other) {
  if (other.matches.size() != matches.size())
    throw std::invalid_argument("bleu: adding stats of different orders");
  for (std::size_t n = 0; n < matches.size(); ++n) {
    matches[n] += other.matches[n];
    totals[n] += other.totals[n];
  }
  hyp_length += other.hyp_length;
  ref_length += other.ref_length;
  return *this;
}

namespace {

using NgramCounts = std::map<std::vector<int>, long>;

NgramCounts count_ngrams(std::span<const int> tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[std::vector<int>(tokens.begin() + i, tokens.begin() + i + n)];
  return counts;
}

}  // namespace

BleuStats bleu_stats(std::span<const int> hypothesis, std::span<const int> reference,
                     int max_order) {
  BleuStats stats(max_order);
  stats.hyp_length = static_cast<long>(hypothesis.size());
  stats.ref_length = static_cast<long>(reference.size());
  for (int n = 1; n <= max_order; ++n) {
    const auto hyp_counts = count_ngrams(hypothesis, n);
    const auto ref_counts = count_ngrams(reference, n);
    long matched = 0;
    for (const auto& [gram, count] : hyp_counts) {
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) matched += std::min(count, it->second);
    }
    stats.matches[n - 1] = matched;
    stats.totals[n - 1] =
        std::max<long>(0, static_cast<long>(hypothesis.size()) - n + 1);
  }
  return stats;
}

double bleu_from_stats(const BleuStats& stats, const BleuConfig& cfg) {
  cfg.validate();
  if (static_cast<int>(stats.matches.size()) != cfg.max_order)
    throw std::invalid_argument("bleu: stats order does not match config");
  if (stats.hyp_length == 0) return 0.0;

  double log_sum = 0.0;
  int orders_used = 0;
  double smooth = 1.0;
  for (int n = 0; n < cfg.max_order; ++n) {
    const long total = stats.totals[n];
    const long match = stats.matches[n];
    if (cfg.smoothing == Smoothing::none) {
      if (total == 0 || match == 0) return 0.0;
      log_sum += std::log(static_cast<double>(match) / static_cast<double>(total));
      ++orders_used;
      continue;
    }
    if (total == 0) break;  // hypothesis too short for this order
    double precision;
    if (match == 0) {
      smooth *= 2.0;
      precision = 1.0 / (smooth * static_cast<double>(total));
    } else {
      precision = static_cast<double>(match) / static_cast<double>(total);
    }
    log_sum += std::log(precision);
    ++orders_used;
  }
  if (orders_used == 0) return 0.0;

  const double ratio = static_cast<double>(stats.ref_length) / static_cast<double>(stats.hyp_length);
  const double log_bp = std::min(0.0, 1.0 - ratio);
  const double score = std::exp(log_bp + log_sum / orders_used);
  return std::clamp(score, 0.0, 1.0);
}

double bleu(std::span<const int> hypothesis, std::span<const int> reference,
            const BleuConfig& cfg) {
  return bleu_from_stats(bleu_stats(hypothesis, reference, cfg.max_order), cfg);
}

double corpus_bleu(std::span<const SegmentPair> pairs, const BleuConfig& cfg) {
  if (pairs.empty()) throw std::invalid_argument("corpus_bleu: empty corpus");
  cfg.validate();
  BleuStats total(cfg.max_order);
  for (const auto& [hyp, ref] : pairs) total += bleu_stats(hyp, ref, cfg.max_order);
  return bleu_from_stats(total, cfg);
}

}  // namespace simulrl
