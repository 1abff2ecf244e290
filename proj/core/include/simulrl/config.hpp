#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "simulrl/alignment.hpp"
#include "simulrl/corpus.hpp"
#include "simulrl/grpo.hpp"
#include "simulrl/model.hpp"

namespace simulrl {

struct SupervisedConfig {
  int steps = 2000;
  int batch_size = 16;
  double learning_rate = 3e-3;
  int warmup_steps = 100;
  double min_lr_fraction = 0.1;  // cosine decay floor
  double grad_clip = 1.0;
  double weight_decay = 0.0;
  double text_loss_weight = 1.0;  // relative weight of text-stream tokens in the mean
  int log_every = 10;
  int checkpoint_every = 500;
  std::uint64_t seed = 1;

  void validate() const;
  bool operator==(const SupervisedConfig&) const = default;
};

struct EvalConfig {
  std::string set = "valid";     // valid | test
  std::string decode = "greedy"; // greedy | sample
  int max_items = 0;             // 0 = whole set
  int validation_items = 64;     // items used for validation during RL
  std::uint64_t seed = 7;        // sampling decode only

  void validate() const;
  bool operator==(const EvalConfig&) const = default;
};

struct PathsConfig {
  std::string workdir = "work";
  std::string data = "data";
  std::string checkpoints = "checkpoints";
  std::string logs = "logs";

  bool operator==(const PathsConfig&) const = default;
};

struct RunConfig {
  EnvConfig env;
  SplitSizes splits{2000, 64, 64};
  AlignConfig align;
  ModelConfig model;
  SupervisedConfig supervised;
  RLConfig rl;
  EvalConfig eval;
  PathsConfig paths;
  bool deterministic = true;
  int workers = 0;  // 0 = available cores

  // Model config with vocabulary shapes taken from the environment.
  ModelConfig resolved_model() const { return with_env_shapes(model, env); }
  int resolved_workers() const;

  std::filesystem::path workdir() const;  // honours SIMULRL_WORKDIR
  std::filesystem::path data_dir() const { return workdir() / paths.data; }
  std::filesystem::path checkpoint_dir() const { return workdir() / paths.checkpoints; }
  std::filesystem::path log_dir() const { return workdir() / paths.logs; }

  void validate() const;  // throws ConfigError
  bool operator==(const RunConfig&) const = default;
};

inline constexpr const char* kWorkdirEnv = "SIMULRL_WORKDIR";

// Unknown keys, wrong types and invalid values throw ConfigError. Missing keys
// keep their defaults.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace simulrl
