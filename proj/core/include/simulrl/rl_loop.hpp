#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "simulrl/config.hpp"
#include "simulrl/evaluate.hpp"

namespace simulrl {

struct ValidationPoint {
  int update = 0;
  double bleu = 0.0;
  double text_laal = 0.0;
  double end_offset = 0.0;
};

// Best quality/latency trade-off: among points whose BLEU is at least
// base_bleu - tolerance, the one with the lowest text LAAL (earliest on ties);
// if none qualifies, the highest BLEU. Returns the index into `points`.
std::optional<std::size_t> select_checkpoint(const std::vector<ValidationPoint>& points, double base_bleu,
                                             double tolerance);

struct RLRun {
  std::string name = "rl";
  std::filesystem::path base_checkpoint;
  int workers = 1;
  std::uint64_t seed_salt = 0;  // mixed into every seed when runs are not deterministic
};

struct RLResult {
  std::filesystem::path log;
  std::filesystem::path best_checkpoint;
  ValidationPoint base;
  std::vector<ValidationPoint> validations;
  std::optional<ValidationPoint> selected;
  int skipped_updates = 0;
};

std::filesystem::path rl_run_dir(const RunConfig& cfg, const std::string& name);
std::filesystem::path rl_log_path(const RunConfig& cfg, const std::string& name);

// GRPO fine-tuning from a supervised checkpoint. Writes one JSONL record per
// update and per validation, a checkpoint per validation point (if
// rl.save_series) and the selected checkpoint as best.ckpt. Throws DataError
// if the base checkpoint or manifests are missing.
RLResult rl_loop(const RunConfig& cfg, const RLRun& run);

}  // namespace simulrl
