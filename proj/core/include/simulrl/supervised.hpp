#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "simulrl/config.hpp"
#include "simulrl/evaluate.hpp"

namespace simulrl {

// Learning rate at `step` (0-based): linear warmup, then cosine decay to
// min_lr_fraction * learning_rate at the last step.
double supervised_learning_rate(const SupervisedConfig& cfg, int step);

// Training grids of one step: batch items are drawn from `train` and aligned
// with fresh sentence delays and punctuation silences. Pairs that exceed the
// model context are redrawn.
std::vector<TokenGrid> supervised_batch(const RunConfig& cfg, std::span<const Utterance> train, int step);

struct SupervisedRun {
  std::string tag = "base";  // names checkpoints and logs
  bool resume = true;        // continue from the last periodic checkpoint if present
  int workers = 1;
  std::uint64_t seed_salt = 0;  // mixed into every seed when runs are not deterministic
};

struct SupervisedResult {
  std::filesystem::path checkpoint;
  std::filesystem::path log;
  int steps_run = 0;
  double final_loss = 0.0;
  EvalReport valid;
};

std::filesystem::path supervised_checkpoint_path(const RunConfig& cfg, const std::string& tag);
std::filesystem::path supervised_log_path(const RunConfig& cfg, const std::string& tag);

// Reads train and valid manifests from the data directory (DataError if
// missing), trains, writes periodic checkpoints, a JSONL loss log and the final
// checkpoint with the validation report in its metadata.
SupervisedResult train_supervised(const RunConfig& cfg, const SupervisedRun& run);

DecodeConfig validation_decode(const RunConfig& cfg);
std::vector<Utterance> load_split(const RunConfig& cfg, const std::string& split);

}  // namespace simulrl
