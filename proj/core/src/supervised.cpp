#include "simulrl/supervised.hpp"

#include <cmath>
#include <numbers>

#include "simulrl/checkpoint.hpp"
#include "simulrl/errors.hpp"
#include "simulrl/jsonl.hpp"
#include "simulrl/optim.hpp"
#include "simulrl/rng.hpp"

namespace simulrl {

namespace {

constexpr int kMaxRedraws = 64;

}  // namespace

double supervised_learning_rate(const SupervisedConfig& cfg, int step) {
  if (cfg.warmup_steps > 0 && step < cfg.warmup_steps)
    return cfg.learning_rate * static_cast<double>(step + 1) / cfg.warmup_steps;
  const int decay_steps = cfg.steps - cfg.warmup_steps;
  if (decay_steps <= 1) return cfg.learning_rate;
  const double progress = std::min(1.0, static_cast<double>(step - cfg.warmup_steps) / (decay_steps - 1));
  const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return cfg.learning_rate * (cfg.min_lr_fraction + (1.0 - cfg.min_lr_fraction) * cosine);
}

std::vector<TokenGrid> supervised_batch(const RunConfig& cfg, std::span<const Utterance> train, int step) {
  if (train.empty()) throw DataError("supervised: empty training set");
  const auto model = cfg.resolved_model();
  AlignConfig align = cfg.align;
  align.max_frames = std::min(align.max_frames, model.context_frames);
  const auto base = cfg.supervised.seed;
  std::vector<TokenGrid> batch;
  for (int b = 0; b < cfg.supervised.batch_size; ++b) {
    for (int attempt = 0;; ++attempt) {
      if (attempt == kMaxRedraws) throw DataError("supervised: no training pair fits the model context");
      const std::uint64_t s = derive_seed(base, {static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(b),
                                                 static_cast<std::uint64_t>(attempt)});
      Rng rng(s);
      const auto& u = train[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(train.size()) - 1))];
      try {
        batch.push_back(apply_acoustic_delay(build_training_pair(u, align, cfg.env, rng), model.acoustic_delay_frames));
        break;
      } catch (const AlignmentError&) {
      }
    }
  }
  return batch;
}

std::filesystem::path supervised_checkpoint_path(const RunConfig& cfg, const std::string& tag) {
  return cfg.checkpoint_dir() / ("sl_" + tag + ".ckpt");
}

std::filesystem::path supervised_log_path(const RunConfig& cfg, const std::string& tag) {
  return cfg.log_dir() / ("sl_" + tag + ".jsonl");
}

DecodeConfig validation_decode(const RunConfig& cfg) {
  DecodeConfig d;
  d.sampling = cfg.rl.sampling;
  d.sampling.greedy = cfg.eval.decode == "greedy";
  d.max_frames = std::min(cfg.rl.rollout_frames, cfg.model.context_frames);
  d.seed = cfg.eval.seed;
  return d;
}

std::vector<Utterance> load_split(const RunConfig& cfg, const std::string& split) {
  const auto path = cfg.data_dir() / (split + ".jsonl");
  if (!std::filesystem::exists(path)) throw DataError("missing manifest " + path.string() + " (run synth-data)");
  auto items = read_manifest(path);
  for (const auto& u : items) u.validate(cfg.env);
  return items;
}

namespace {

std::vector<Utterance> validation_subset(const RunConfig& cfg) {
  auto valid = load_split(cfg, "valid");
  if (cfg.eval.validation_items > 0 && static_cast<int>(valid.size()) > cfg.eval.validation_items)
    valid.resize(static_cast<std::size_t>(cfg.eval.validation_items));
  return valid;
}

}  // namespace

SupervisedResult train_supervised(const RunConfig& cfg_in, const SupervisedRun& run) {
  RunConfig cfg = cfg_in;
  cfg.validate();
  if (run.seed_salt) cfg.supervised.seed = derive_seed(cfg.supervised.seed, {run.seed_salt});
  const auto& sl = cfg.supervised;
  const auto train = load_split(cfg, "train");
  const auto valid = validation_subset(cfg);
  const auto model_cfg = cfg.resolved_model();

  const auto last_path = cfg.checkpoint_dir() / ("sl_" + run.tag + "_last.ckpt");
  SupervisedResult result;
  result.checkpoint = supervised_checkpoint_path(cfg, run.tag);
  result.log = supervised_log_path(cfg, run.tag);

  ModelParams params = ModelParams::initialize(model_cfg, derive_seed(sl.seed, {0xC0FFEE}));
  AdamConfig adam_cfg;
  adam_cfg.weight_decay = sl.weight_decay;
  Adam adam(adam_cfg, params.size());
  int start = 0;

  if (run.resume && std::filesystem::exists(last_path)) {
    auto ckpt = load_checkpoint(last_path);
    if (!(ckpt.params.config == model_cfg)) throw ConfigError("resume: checkpoint model config differs from config");
    if (!ckpt.optimizer) throw DataError("resume: checkpoint has no optimizer state");
    params = std::move(ckpt.params);
    adam = Adam(adam_cfg, std::move(*ckpt.optimizer));
    start = ckpt.meta.at("step").get<int>();
  }

  // Keep log records up to the resume point so the log matches an
  // uninterrupted run.
  std::vector<nlohmann::json> kept;
  if (start > 0 && std::filesystem::exists(result.log))
    for (auto& r : read_jsonl(result.log))
      if (r.value("step", 0) <= start && r.value("type", "") != "final") kept.push_back(std::move(r));
  JsonlWriter log(result.log, false);
  for (const auto& r : kept) log.write(r);

  std::vector<double> stream_weights(static_cast<std::size_t>(model_cfg.num_streams()), 1.0);
  stream_weights[0] = sl.text_loss_weight;

  const DecodeConfig decode = validation_decode(cfg);
  for (int step = start; step < sl.steps; ++step) {
    const auto batch = supervised_batch(cfg, train, step);
    auto lg = supervised_loss_and_grads(params, batch, run.workers, stream_weights);
    if (!std::isfinite(lg.loss)) throw NumericError("supervised: non-finite loss at step " + std::to_string(step));
    const double grad_norm = clip_grad_norm(lg.grad, sl.grad_clip);
    if (!std::isfinite(grad_norm)) throw NumericError("supervised: non-finite gradient at step " + std::to_string(step));
    const double lr = supervised_learning_rate(sl, step);
    adam.step(params.values, lg.grad, lr);
    result.final_loss = lg.loss;
    ++result.steps_run;

    const int done = step + 1;
    if (done % sl.log_every == 0 || done == sl.steps)
      log.write({{"type", "train"},
                 {"step", done},
                 {"loss", lg.loss},
                 {"text_loss", lg.stream_loss[0]},
                 {"lr", lr},
                 {"grad_norm", grad_norm}});
    if (done % sl.checkpoint_every == 0 && done < sl.steps) {
      save_checkpoint(last_path, {params, adam.state(), {{"step", done}, {"tag", run.tag}}});
      const auto rep = evaluate(params, valid, cfg.env, decode, run.workers);
      log.write({{"type", "valid"}, {"step", done}, {"bleu", rep.corpus_bleu}, {"laal", rep.mean_laal},
                 {"end_offset", rep.mean_end_offset}});
    }
  }

  result.valid = evaluate(params, valid, cfg.env, decode, run.workers);
  log.write({{"type", "final"},
             {"step", sl.steps},
             {"valid_bleu", result.valid.corpus_bleu},
             {"valid_laal", result.valid.mean_laal},
             {"valid_end_offset", result.valid.mean_end_offset}});
  nlohmann::json meta = {{"step", sl.steps},
                         {"tag", run.tag},
                         {"stage", "supervised"},
                         {"valid_bleu", result.valid.corpus_bleu},
                         {"valid_laal", result.valid.mean_laal},
                         {"valid_end_offset", result.valid.mean_end_offset},
                         {"align", {{"delta", cfg.align.delta}, {"mu", cfg.align.mu},
                                    {"full_sentence_delay", cfg.align.full_sentence_delay}}}};
  save_checkpoint(result.checkpoint, {params, std::nullopt, meta});
  save_checkpoint(last_path, {params, adam.state(), {{"step", sl.steps}, {"tag", run.tag}}});
  return result;
}

}  // namespace simulrl
