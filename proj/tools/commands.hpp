#pragma once

#include <optional>
#include <string>
#include <vector>

#include "simulrl/config.hpp"

namespace simulrl::cli {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct Common {
  std::string config_path;  // empty = built-in defaults
  std::string workdir;      // overrides config and environment when set
  int workers = -1;         // -1 = from config
};

// Loads the run config and applies the common overrides.
RunConfig load_config(const Common& common);

void synth_data(const RunConfig& cfg);

struct TrainSlOptions {
  std::string ablation = "none";  // none | B | C
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;
  bool resume = true;
};
void train_sl(RunConfig cfg, const TrainSlOptions& opt);

struct TrainRlOptions {
  std::optional<double> alpha;
  std::optional<int> words_per_checkpoint;
  std::string ablation = "none";  // none | A | B | C
  std::optional<std::uint64_t> seed;
  std::optional<int> updates;
  std::string name;   // default derived from the options
  std::string base;   // default: supervised checkpoint of the ablation's tag
};
void train_rl(RunConfig cfg, const TrainRlOptions& opt);

struct EvalOptions {
  std::string checkpoint;
  std::string set;     // default from config
  std::string decode;  // default from config
  std::string out;     // default: <logs>/eval_<set>.json
};
void eval(RunConfig cfg, const EvalOptions& opt);

struct PlotOptions {
  std::vector<std::string> logs;  // label=path or path
  double ema_weight = 0.9;
  std::string out;  // empty = stdout
};
void plot(const PlotOptions& opt);

// Name of the supervised checkpoint tag used by an ablation.
std::string base_tag(const std::string& ablation);
std::string default_rl_name(const std::string& ablation, double alpha, int nw, std::uint64_t seed);

}  // namespace simulrl::cli
