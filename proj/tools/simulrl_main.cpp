#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "commands.hpp"
#include "simulrl/errors.hpp"

using namespace simulrl;

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Gradient buffers are a few MB and are reallocated every step; keep them
  // on the heap instead of paying an mmap/munmap round trip each time.
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 128 << 20);
#endif
  CLI::App app{"Simultaneous speech translation toy: synthetic data, supervised training, GRPO fine-tuning"};
  app.require_subcommand(1);

  cli::Common common;
  app.add_option("-c,--config", common.config_path, "Run config (JSON); defaults are built in")->check(CLI::ExistingFile);
  app.add_option("-w,--workdir", common.workdir, "Working directory (overrides the config and SIMULRL_WORKDIR)");
  app.add_option("-j,--workers", common.workers, "Worker threads (0 = available cores)")->check(CLI::NonNegativeNumber);

  auto* synth = app.add_subcommand("synth-data", "Write train/valid/test manifests");

  cli::TrainSlOptions sl;
  auto* train_sl = app.add_subcommand("train-sl", "Supervised training on aligned pairs");
  train_sl->add_option("--ablation", sl.ablation, "none, B (full-sentence delay) or C (no punctuation silences)")
      ->check(CLI::IsMember({"none", "B", "C"}));
  train_sl->add_option("--steps", sl.steps, "Override supervised.steps");
  train_sl->add_option("--seed", sl.seed, "Override supervised.seed");
  train_sl->add_flag("!--no-resume", sl.resume, "Start from scratch even if a periodic checkpoint exists");

  cli::TrainRlOptions rl;
  auto* train_rl = app.add_subcommand("train-rl", "GRPO fine-tuning from a supervised checkpoint");
  train_rl->add_option("--alpha", rl.alpha, "Weight of the final-BLEU term")->check(CLI::Range(0.0, 1.0));
  train_rl->add_option("--nw", rl.words_per_checkpoint, "Input words per reward checkpoint")->check(CLI::PositiveNumber);
  train_rl->add_option("--ablation", rl.ablation, "none, A (full reference), B or C (ablation bases)")
      ->check(CLI::IsMember({"none", "A", "B", "C"}));
  train_rl->add_option("--seed", rl.seed, "Override rl.seed");
  train_rl->add_option("--updates", rl.updates, "Override rl.updates");
  train_rl->add_option("--name", rl.name, "Run name (log and checkpoint directory)");
  train_rl->add_option("--base", rl.base, "Base checkpoint (default: supervised checkpoint of the ablation)");

  cli::EvalOptions ev;
  auto* eval = app.add_subcommand("eval", "Decode a split and report BLEU, LAAL and End Offset");
  eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint to evaluate")->required();
  eval->add_option("--set", ev.set, "train, valid or test")->check(CLI::IsMember({"train", "valid", "test"}));
  eval->add_option("--decode", ev.decode, "greedy or sample")->check(CLI::IsMember({"greedy", "sample"}));
  eval->add_option("-o,--out", ev.out, "Report path");

  cli::PlotOptions pl;
  auto* plot = app.add_subcommand("plot", "Merge RL metric logs into EMA-smoothed CSV");
  plot->add_option("--log", pl.logs, "label=path or path (repeatable)")->required();
  plot->add_option("--ema", pl.ema_weight, "EMA weight of the newest sample (1 = raw)");
  plot->add_option("-o,--out", pl.out, "CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? cli::kOk : cli::kUsage;
  }

  try {
    if (plot->parsed()) {
      cli::plot(pl);
      return cli::kOk;
    }
    const RunConfig cfg = cli::load_config(common);
    if (synth->parsed()) cli::synth_data(cfg);
    if (train_sl->parsed()) cli::train_sl(cfg, sl);
    if (train_rl->parsed()) cli::train_rl(cfg, rl);
    if (eval->parsed()) cli::eval(cfg, ev);
    return cli::kOk;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return cli::kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return cli::kData;
  }
}
