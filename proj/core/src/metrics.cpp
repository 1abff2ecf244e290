#include "simulrl/metrics.hpp"

#include <algorithm>
#include <stdexcept>

namespace simulrl {

namespace {

void check(const LatencyInput& in) {
  if (!(in.source_duration > 0.0))
    throw std::invalid_argument("latency: source duration must be positive");
  if (!std::is_sorted(in.word_end_times.begin(), in.word_end_times.end()))
    throw std::invalid_argument("latency: word end times must be non-decreasing");
}

}  // namespace

std::optional<double> laal(const LatencyInput& in) {
  check(in);
  const auto& d = in.word_end_times;
  if (d.empty()) return std::nullopt;
  const auto n_gen = static_cast<long>(d.size());
  const long denom = std::max<long>(n_gen, in.reference_words);
  const double gamma = in.source_duration / static_cast<double>(denom);

  long n_max = n_gen;
  for (long i = 0; i < n_gen; ++i) {
    if (d[i] >= in.source_duration) {
      n_max = i + 1;
      break;
    }
  }
  double sum = 0.0;
  for (long i = 0; i < n_max; ++i) sum += d[i] - static_cast<double>(i) * gamma;
  return sum / static_cast<double>(n_max);
}

std::optional<double> end_offset(const LatencyInput& in) {
  check(in);
  if (in.word_end_times.empty()) return std::nullopt;
  return in.word_end_times.back() - in.source_last_word_end;
}

}  // namespace simulrl
