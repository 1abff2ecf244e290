#include "commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "simulrl/checkpoint.hpp"
#include "simulrl/errors.hpp"
#include "simulrl/evaluate.hpp"
#include "simulrl/plot.hpp"
#include "simulrl/rl_loop.hpp"
#include "simulrl/supervised.hpp"

namespace simulrl::cli {

namespace {

std::uint64_t seed_salt(const RunConfig& cfg) {
  if (cfg.deterministic) return 0;
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32 | rd()) | 1;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::string format_number(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

}  // namespace

RunConfig load_config(const Common& common) {
  RunConfig cfg = common.config_path.empty() ? RunConfig{} : load_run_config(common.config_path);
  if (!common.workdir.empty()) cfg.paths.workdir = common.workdir;
  if (common.workers >= 0) cfg.workers = common.workers;
  cfg.validate();
  return cfg;
}

void synth_data(const RunConfig& cfg) {
  const auto splits = split_corpus(cfg.env, cfg.splits);
  const auto dir = cfg.data_dir();
  std::filesystem::create_directories(dir);
  write_manifest(dir / "train.jsonl", splits.train);
  write_manifest(dir / "valid.jsonl", splits.valid);
  write_manifest(dir / "test.jsonl", splits.test);
  write_text(dir / "config.json", run_config_to_json(cfg).dump(2) + "\n");
  std::cout << nlohmann::json{{"command", "synth-data"},
                              {"dir", dir.string()},
                              {"train", splits.train.size()},
                              {"valid", splits.valid.size()},
                              {"test", splits.test.size()}}
                   .dump()
            << '\n';
}

std::string base_tag(const std::string& ablation) {
  if (ablation == "B" || ablation == "C") return ablation;
  return "base";
}

std::string default_rl_name(const std::string& ablation, double alpha, int nw, std::uint64_t seed) {
  return "rl_" + (ablation == "none" ? std::string("ref") : ablation) + "_a" + format_number(alpha) + "_nw" +
         std::to_string(nw) + "_s" + std::to_string(seed);
}

void train_sl(RunConfig cfg, const TrainSlOptions& opt) {
  if (opt.ablation == "B")
    cfg.align.full_sentence_delay = true;
  else if (opt.ablation == "C")
    cfg.align.mu = 0.0;
  else if (opt.ablation != "none")
    throw ConfigError("train-sl: --ablation must be none, B or C");
  if (opt.steps) cfg.supervised.steps = *opt.steps;
  if (opt.seed) cfg.supervised.seed = *opt.seed;
  cfg.validate();

  SupervisedRun run;
  run.tag = base_tag(opt.ablation);
  run.resume = opt.resume;
  run.workers = cfg.resolved_workers();
  run.seed_salt = seed_salt(cfg);
  const auto res = train_supervised(cfg, run);
  std::cout << nlohmann::json{{"command", "train-sl"},
                              {"tag", run.tag},
                              {"checkpoint", res.checkpoint.string()},
                              {"log", res.log.string()},
                              {"steps_run", res.steps_run},
                              {"final_loss", res.final_loss},
                              {"valid_bleu", res.valid.corpus_bleu},
                              {"valid_laal", res.valid.mean_laal},
                              {"valid_end_offset", res.valid.mean_end_offset}}
                   .dump()
            << '\n';
}

void train_rl(RunConfig cfg, const TrainRlOptions& opt) {
  if (opt.ablation != "none" && opt.ablation != "A" && opt.ablation != "B" && opt.ablation != "C")
    throw ConfigError("train-rl: --ablation must be none, A, B or C");
  cfg.rl.ablation = opt.ablation;
  if (opt.alpha) cfg.rl.reward.alpha = *opt.alpha;
  if (opt.words_per_checkpoint) cfg.rl.reward.words_per_checkpoint = *opt.words_per_checkpoint;
  if (opt.seed) cfg.rl.seed = *opt.seed;
  if (opt.updates) cfg.rl.updates = *opt.updates;
  cfg.validate();

  RLRun run;
  run.name = opt.name.empty() ? default_rl_name(opt.ablation, cfg.rl.reward.alpha,
                                                cfg.rl.reward.words_per_checkpoint, cfg.rl.seed)
                              : opt.name;
  run.base_checkpoint =
      opt.base.empty() ? supervised_checkpoint_path(cfg, base_tag(opt.ablation)) : std::filesystem::path(opt.base);
  run.workers = cfg.resolved_workers();
  run.seed_salt = seed_salt(cfg);
  const auto res = rl_loop(cfg, run);

  nlohmann::json summary = {{"command", "train-rl"},
                            {"run", run.name},
                            {"log", res.log.string()},
                            {"best_checkpoint", res.best_checkpoint.string()},
                            {"base_bleu", res.base.bleu},
                            {"base_text_laal", res.base.text_laal},
                            {"validations", res.validations.size()},
                            {"skipped_updates", res.skipped_updates}};
  if (res.selected) {
    summary["selected_update"] = res.selected->update;
    summary["selected_bleu"] = res.selected->bleu;
    summary["selected_text_laal"] = res.selected->text_laal;
  }
  std::cout << summary.dump() << '\n';
}

void eval(RunConfig cfg, const EvalOptions& opt) {
  if (!opt.set.empty()) cfg.eval.set = opt.set;
  if (!opt.decode.empty()) cfg.eval.decode = opt.decode;
  cfg.validate();
  if (opt.checkpoint.empty()) throw ConfigError("eval: --checkpoint is required");
  const auto ckpt = load_checkpoint(opt.checkpoint);
  auto items = load_split(cfg, cfg.eval.set);
  if (cfg.eval.max_items > 0 && static_cast<int>(items.size()) > cfg.eval.max_items)
    items.resize(static_cast<std::size_t>(cfg.eval.max_items));
  if (items.empty()) throw DataError("eval: empty evaluation set");
  const auto rep = evaluate(ckpt.params, items, cfg.env, validation_decode(cfg), cfg.resolved_workers());

  auto report = rep.to_json();
  report["checkpoint"] = opt.checkpoint;
  report["set"] = cfg.eval.set;
  report["decode"] = cfg.eval.decode;
  const std::filesystem::path out = opt.out.empty() ? cfg.log_dir() / ("eval_" + cfg.eval.set + ".json") : std::filesystem::path(opt.out);
  write_text(out, report.dump(2) + "\n");
  std::cout << nlohmann::json{{"command", "eval"},
                              {"report", out.string()},
                              {"bleu", rep.corpus_bleu},
                              {"laal", rep.mean_laal},
                              {"end_offset", rep.mean_end_offset},
                              {"items", rep.items.size()}}
                   .dump()
            << '\n';
}

void plot(const PlotOptions& opt) {
  if (opt.logs.empty()) throw ConfigError("plot: at least one --log is required");
  std::vector<PlotSeries> series;
  for (const auto& entry : opt.logs) {
    const auto eq = entry.find('=');
    const std::string path = eq == std::string::npos ? entry : entry.substr(eq + 1);
    const std::string label =
        eq == std::string::npos ? std::filesystem::path(path).stem().string() : entry.substr(0, eq);
    if (label.find(',') != std::string::npos) throw ConfigError("plot: labels must not contain commas");
    series.push_back(read_validation_series(path, label));
  }
  if (!(opt.ema_weight > 0.0 && opt.ema_weight <= 1.0)) throw ConfigError("plot: --ema must be in (0, 1]");
  const auto csv = plot_csv(series, opt.ema_weight);
  if (opt.out.empty())
    std::cout << csv;
  else
    write_text(opt.out, csv);
}

}  // namespace simulrl::cli
