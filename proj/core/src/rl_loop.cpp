#include "simulrl/rl_loop.hpp"

#include <numeric>

#include "simulrl/checkpoint.hpp"
#include "simulrl/errors.hpp"
#include "simulrl/grpo.hpp"
#include "simulrl/jsonl.hpp"
#include "simulrl/parallel.hpp"
#include "simulrl/rng.hpp"
#include "simulrl/supervised.hpp"

namespace simulrl {

std::optional<std::size_t> select_checkpoint(const std::vector<ValidationPoint>& points, double base_bleu,
                                             double tolerance) {
  std::optional<std::size_t> best_latency;
  std::optional<std::size_t> best_bleu;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (p.bleu >= base_bleu - tolerance && (!best_latency || p.text_laal < points[*best_latency].text_laal))
      best_latency = i;
    if (!best_bleu || p.bleu > points[*best_bleu].bleu) best_bleu = i;
  }
  return best_latency ? best_latency : best_bleu;
}

std::filesystem::path rl_run_dir(const RunConfig& cfg, const std::string& name) { return cfg.checkpoint_dir() / name; }

std::filesystem::path rl_log_path(const RunConfig& cfg, const std::string& name) {
  return cfg.log_dir() / (name + ".jsonl");
}

namespace {

ValidationPoint to_point(int update, const EvalReport& rep) {
  return {update, rep.corpus_bleu, rep.mean_laal, rep.mean_end_offset};
}

nlohmann::json point_record(const char* type, const ValidationPoint& p) {
  return {{"type", type},
          {"update", p.update},
          {"bleu", p.bleu},
          {"text_laal", p.text_laal},
          {"end_offset", p.end_offset}};
}

// Walks the training set in shuffled epochs; a fresh permutation is drawn
// from an advanced seed whenever the current one is exhausted.
class EpochSampler {
 public:
  EpochSampler(std::size_t size, std::uint64_t seed) : order_(size), seed_(seed) { reshuffle(); }

  std::size_t next() {
    if (cursor_ == order_.size()) {
      ++epoch_;
      reshuffle();
    }
    return order_[cursor_++];
  }

 private:
  void reshuffle() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    Rng rng(derive_seed(seed_, {0xE90C, static_cast<std::uint64_t>(epoch_)}));
    rng.shuffle(std::span<std::size_t>(order_));
    cursor_ = 0;
  }

  std::vector<std::size_t> order_;
  std::uint64_t seed_;
  std::size_t cursor_ = 0;
  int epoch_ = 0;
};

}  // namespace

RLResult rl_loop(const RunConfig& cfg_in, const RLRun& run) {
  RunConfig cfg = cfg_in;
  cfg.validate();
  RLConfig rl = cfg.rl;
  if (rl.ablation == "A") rl.reward.full_reference_prefix = true;
  if (run.seed_salt) rl.seed = derive_seed(rl.seed, {run.seed_salt});

  if (!std::filesystem::exists(run.base_checkpoint))
    throw DataError("missing base checkpoint " + run.base_checkpoint.string() + " (run train-sl)");
  auto base = load_checkpoint(run.base_checkpoint);
  if (base.params.config.num_codebooks != cfg.env.num_codebooks)
    throw ConfigError("base checkpoint does not match the environment");

  const auto train = load_split(cfg, "train");
  auto valid = load_split(cfg, "valid");
  if (cfg.eval.validation_items > 0 && static_cast<int>(valid.size()) > cfg.eval.validation_items)
    valid.resize(static_cast<std::size_t>(cfg.eval.validation_items));
  if (train.empty() || valid.empty()) throw DataError("rl: empty train or valid split");

  const DecodeConfig decode = validation_decode(cfg);
  RLResult result;
  result.log = rl_log_path(cfg, run.name);
  const auto dir = rl_run_dir(cfg, run.name);
  std::filesystem::create_directories(dir);
  result.best_checkpoint = dir / "best.ckpt";
  JsonlWriter log(result.log, false);

  PolicyState state(std::move(base.params), AdamConfig{});
  result.base = to_point(0, evaluate(state.current(), valid, cfg.env, decode, run.workers));
  log.write(point_record("base", result.base));

  // Parameters of the currently selected point, kept in memory so best.ckpt
  // does not depend on the series being saved. A point that is not selected
  // when it arrives can never become the final choice.
  std::optional<ModelParams> selected_params;

  EpochSampler sampler(train.size(), rl.seed);
  for (int update = 1; update <= rl.updates; ++update) {
    std::vector<const Utterance*> inputs;
    for (int b = 0; b < rl.batch_size; ++b) inputs.push_back(&train[sampler.next()]);

    std::vector<GroupBatch> groups(inputs.size());
    parallel_for(static_cast<int>(inputs.size()), run.workers, [&](int b) {
      groups[b] = sample_group(state.old(), *inputs[b], cfg.env, rl,
                               derive_seed(rl.seed, {static_cast<std::uint64_t>(update), static_cast<std::uint64_t>(b)}));
    });
    double reward_sum = 0.0;
    std::size_t reward_count = 0;
    for (const auto& g : groups)
      for (double r : g.rewards.raw.data) {
        reward_sum += r;
        ++reward_count;
      }

    // Rollouts are already parallel across the batch; the objective is too.
    const auto stats = state.update(groups, rl, run.workers);
    if (stats.skipped) ++result.skipped_updates;
    nlohmann::json rec = {{"type", "update"},
                          {"update", update},
                          {"mean_raw_reward", reward_count ? reward_sum / reward_count : 0.0},
                          {"mean_ratio", stats.mean_ratio},
                          {"clip_fraction", stats.clip_fraction},
                          {"objective", stats.objective},
                          {"grad_norm", stats.grad_norm}};
    if (stats.skipped) {
      rec["skipped"] = true;
      rec["diagnostic"] = stats.diagnostic;
    }
    log.write(rec);

    if (update % rl.eval_every == 0) {
      const auto p = to_point(update, evaluate(state.current(), valid, cfg.env, decode, run.workers));
      result.validations.push_back(p);
      log.write(point_record("validation", p));
      if (rl.save_series)
        save_checkpoint(dir / ("update_" + std::to_string(update) + ".ckpt"),
                        {state.current(), std::nullopt, {{"update", update}, {"run", run.name}}});
      const auto sel = select_checkpoint(result.validations, result.base.bleu, rl.selection_bleu_tolerance);
      if (sel && *sel + 1 == result.validations.size()) selected_params = state.current();
    }
  }

  nlohmann::json meta = {{"run", run.name},
                         {"stage", "rl"},
                         {"alpha", rl.reward.alpha},
                         {"words_per_checkpoint", rl.reward.words_per_checkpoint},
                         {"ablation", rl.ablation},
                         {"base_bleu", result.base.bleu},
                         {"base_text_laal", result.base.text_laal}};
  if (const auto sel = select_checkpoint(result.validations, result.base.bleu, rl.selection_bleu_tolerance)) {
    result.selected = result.validations[*sel];
    log.write(point_record("selected", *result.selected));
    meta["update"] = result.selected->update;
    save_checkpoint(result.best_checkpoint, {*selected_params, std::nullopt, meta});
  } else {
    meta["update"] = rl.updates;
    save_checkpoint(result.best_checkpoint, {state.current(), std::nullopt, meta});
  }
  return result;
}

}  // namespace simulrl
