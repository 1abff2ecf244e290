#pragma once

#include <optional>
#include <vector>

namespace simulrl {

// Timing of one translated item, in seconds.
struct LatencyInput {
  double source_duration = 0.0;          // duration of the source speech
  double source_last_word_end = 0.0;     // end of the last source word
  std::vector<double> word_end_times;    // generated word ends, non-decreasing
  int reference_words = 0;               // words in the reference translation
};

// Length-adaptive average lagging:
//   gamma = source_duration / max(n_gen, n_ref)
//   n_max = min{ i : d_i >= source_duration }   (n_gen if no word reaches it)
//   LAAL  = 1/n_max * sum_{i=1..n_max} (d_i - (i - 1) * gamma)
// Returns nullopt when nothing was generated.
std::optional<double> laal(const LatencyInput& in);

// Last generated word end minus last source word end; signed.
std::optional<double> end_offset(const LatencyInput& in);

}  // namespace simulrl
