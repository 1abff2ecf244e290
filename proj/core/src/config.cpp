#include "simulrl/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>

#include "simulrl/errors.hpp"
#include "simulrl/parallel.hpp"

namespace simulrl {

namespace {

using nlohmann::json;

// One schema description drives both parsing and serialization. In read mode
// present keys overwrite defaults and unknown keys are rejected; in write mode
// every field is emitted.
class Binder {
 public:
  Binder(const json* in, json* out, std::string path) : in_(in), out_(out), path_(std::move(path)) {
    if (in_ && !in_->is_object()) throw ConfigError(where() + ": expected an object");
  }

  template <typename T>
  void field(const char* key, T& value) {
    if (out_) {
      (*out_)[key] = value;
      return;
    }
    seen_.insert(key);
    if (!in_->contains(key)) return;
    try {
      value = in_->at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + ": wrong type");
    }
  }

  void smoothing(const char* key, Smoothing& value) {
    std::string s = value == Smoothing::none ? "none" : "exponential";
    field(key, s);
    if (s == "none")
      value = Smoothing::none;
    else if (s == "exponential")
      value = Smoothing::exponential;
    else
      throw ConfigError(where(key) + ": expected none or exponential");
  }

  void object(const char* key, const std::function<void(Binder&)>& fn) {
    if (out_) {
      json sub = json::object();
      Binder b(nullptr, &sub, path_ + "." + key);
      fn(b);
      (*out_)[key] = std::move(sub);
      return;
    }
    seen_.insert(key);
    const json empty = json::object();
    const json& sub = in_->contains(key) ? in_->at(key) : empty;
    Binder b(&sub, nullptr, path_ + "." + key);
    fn(b);
    b.finish();
  }

  void finish() const {
    if (!in_) return;
    for (const auto& [k, _] : in_->items())
      if (!seen_.count(k)) throw ConfigError(where(k) + ": unknown key");
  }

 private:
  std::string where(const std::string& key = "") const {
    std::string p = path_;
    if (!key.empty()) p += "." + key;
    return "config " + p;
  }

  const json* in_;
  json* out_;
  std::string path_;
  std::set<std::string> seen_;
};

void bind_range(Binder& b, const char* key, IntRange& r) {
  b.object(key, [&](Binder& s) {
    s.field("min", r.min);
    s.field("max", r.max);
  });
}

void bind_transformer(Binder& b, const char* key, TransformerConfig& t) {
  b.object(key, [&](Binder& s) {
    s.field("latent_dim", t.latent_dim);
    s.field("layers", t.layers);
    s.field("heads", t.heads);
    s.field("ffn_dim", t.ffn_dim);
  });
}

void bind(Binder& b, RunConfig& c) {
  b.object("env", [&](Binder& s) {
    auto& e = c.env;
    s.field("source_vocab_size", e.source_vocab_size);
    bind_range(s, "words_per_sentence", e.words_per_sentence);
    bind_range(s, "sentences_per_utterance", e.sentences_per_utterance);
    s.field("frames_per_word", e.frames_per_word);
    s.field("frame_rate_hz", e.frame_rate_hz);
    s.field("num_codebooks", e.num_codebooks);
    s.field("codebook_size", e.codebook_size);
    s.field("text_vocab_size", e.text_vocab_size);
    s.field("reorder_window", e.reorder_window);
    s.field("sentence_gap_frames", e.sentence_gap_frames);
    s.field("seed", e.seed);
  });
  b.object("splits", [&](Binder& s) {
    s.field("train", c.splits.train);
    s.field("valid", c.splits.valid);
    s.field("test", c.splits.test);
  });
  b.object("align", [&](Binder& s) {
    auto& a = c.align;
    s.field("delta", a.delta);
    s.field("mu", a.mu);
    s.field("punctuation_rate", a.punctuation_rate);
    s.field("input_eos", a.input_eos);
    s.field("text_eos", a.text_eos);
    s.field("full_sentence_delay", a.full_sentence_delay);
    s.field("max_frames", a.max_frames);
  });
  b.object("model", [&](Binder& s) {
    auto& m = c.model;
    bind_transformer(s, "temporal", m.temporal);
    s.field("context_frames", m.context_frames);
    bind_transformer(s, "depth", m.depth);
    s.field("depth_shared_weights", m.depth_shared_weights);
    s.field("acoustic_delay_frames", m.acoustic_delay_frames);
    s.field("positional", m.positional);
    s.field("rope_base", m.rope_base);
  });
  b.object("supervised", [&](Binder& s) {
    auto& p = c.supervised;
    s.field("steps", p.steps);
    s.field("batch_size", p.batch_size);
    s.field("learning_rate", p.learning_rate);
    s.field("warmup_steps", p.warmup_steps);
    s.field("min_lr_fraction", p.min_lr_fraction);
    s.field("grad_clip", p.grad_clip);
    s.field("weight_decay", p.weight_decay);
    s.field("text_loss_weight", p.text_loss_weight);
    s.field("log_every", p.log_every);
    s.field("checkpoint_every", p.checkpoint_every);
    s.field("seed", p.seed);
  });
  b.object("rl", [&](Binder& s) {
    auto& r = c.rl;
    s.field("group_size", r.group_size);
    s.field("rollout_frames", r.rollout_frames);
    s.field("clip_epsilon", r.clip_epsilon);
    s.field("refresh_period", r.refresh_period);
    s.field("text_weight", r.text_weight);
    s.field("audio_weight", r.audio_weight);
    s.field("learning_rate", r.learning_rate);
    s.field("batch_size", r.batch_size);
    s.field("updates", r.updates);
    s.field("eval_every", r.eval_every);
    s.field("grad_clip", r.grad_clip);
    s.field("seed", r.seed);
    s.field("ablation", r.ablation);
    s.field("selection_bleu_tolerance", r.selection_bleu_tolerance);
    s.field("save_series", r.save_series);
    s.object("sampling", [&](Binder& t) {
      t.field("temperature", r.sampling.temperature);
      t.field("top_k", r.sampling.top_k);
      t.field("greedy", r.sampling.greedy);
    });
    s.object("reward", [&](Binder& t) {
      t.field("alpha", r.reward.alpha);
      t.field("words_per_checkpoint", r.reward.words_per_checkpoint);
      t.field("full_reference_prefix", r.reward.full_reference_prefix);
      t.field("bleu_max_order", r.reward.bleu.max_order);
      t.smoothing("bleu_smoothing", r.reward.bleu.smoothing);
    });
  });
  b.object("eval", [&](Binder& s) {
    s.field("set", c.eval.set);
    s.field("decode", c.eval.decode);
    s.field("max_items", c.eval.max_items);
    s.field("validation_items", c.eval.validation_items);
    s.field("seed", c.eval.seed);
  });
  b.object("paths", [&](Binder& s) {
    s.field("workdir", c.paths.workdir);
    s.field("data", c.paths.data);
    s.field("checkpoints", c.paths.checkpoints);
    s.field("logs", c.paths.logs);
  });
  b.field("deterministic", c.deterministic);
  b.field("workers", c.workers);
}

}  // namespace

void SupervisedConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("supervised: " + m); };
  if (steps < 0) fail("steps must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) fail("learning_rate must be >= 0");
  if (warmup_steps < 0) fail("warmup_steps must be >= 0");
  if (!(min_lr_fraction >= 0.0 && min_lr_fraction <= 1.0)) fail("min_lr_fraction must be in [0, 1]");
  if (!(text_loss_weight > 0.0)) fail("text_loss_weight must be > 0");
  if (log_every < 1) fail("log_every must be >= 1");
  if (checkpoint_every < 1) fail("checkpoint_every must be >= 1");
}

void EvalConfig::validate() const {
  if (set != "valid" && set != "test" && set != "train") throw ConfigError("eval: set must be train, valid or test");
  if (decode != "greedy" && decode != "sample") throw ConfigError("eval: decode must be greedy or sample");
  if (max_items < 0 || validation_items < 0) throw ConfigError("eval: item counts must be >= 0");
}

int RunConfig::resolved_workers() const { return workers > 0 ? workers : default_workers(); }

std::filesystem::path RunConfig::workdir() const {
  if (const char* env_dir = std::getenv(kWorkdirEnv); env_dir && *env_dir) return env_dir;
  return paths.workdir;
}

void RunConfig::validate() const {
  env.validate();
  align.validate();
  resolved_model().validate();
  supervised.validate();
  rl.validate();
  eval.validate();
  if (splits.train < 1 || splits.valid < 1 || splits.test < 0) throw ConfigError("splits: train and valid must be >= 1");
  if (workers < 0) throw ConfigError("workers must be >= 0");
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig cfg;
  Binder b(&j, nullptr, "");
  bind(b, cfg);
  b.finish();
  cfg.validate();
  return cfg;
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
  nlohmann::json out = nlohmann::json::object();
  RunConfig copy = cfg;
  Binder b(nullptr, &out, "");
  bind(b, copy);
  return out;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace simulrl
