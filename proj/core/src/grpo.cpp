#include "simulrl/grpo.hpp"

#include <algorithm>
#include <cmath>

#include "simulrl/errors.hpp"
#include "simulrl/parallel.hpp"
#include "simulrl/rng.hpp"

namespace simulrl {

void RLConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("rl: " + msg); };
  if (group_size < 2) fail("group_size must be >= 2");
  if (rollout_frames < 1) fail("rollout_frames must be >= 1");
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) fail("clip_epsilon must be in (0, 1)");
  if (refresh_period < 1) fail("refresh_period must be >= 1");
  if (text_weight < 0.0 || audio_weight < 0.0) fail("stream weights must be >= 0");
  if (learning_rate < 0.0) fail("learning_rate must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (updates < 0) fail("updates must be >= 0");
  if (eval_every < 1) fail("eval_every must be >= 1");
  if (ablation != "none" && ablation != "A" && ablation != "B" && ablation != "C")
    fail("ablation must be one of none, A, B, C");
  reward.validate();
}

Matrix probability_ratios(const Matrix& logp_new, const Matrix& logp_old) {
  if (logp_new.rows != logp_old.rows || logp_new.cols != logp_old.cols)
    throw std::invalid_argument("probability_ratios: shape mismatch");
  Matrix out(logp_new.rows, logp_new.cols);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const double a = logp_new.data[i];
    const double b = logp_old.data[i];
    if (!std::isfinite(a) || !std::isfinite(b)) throw NumericError("non-finite log-probability in ratio");
    out.data[i] = std::exp(a - b);
    if (!std::isfinite(out.data[i])) throw NumericError("probability ratio overflow");
  }
  return out;
}

double clip_ratio(double ratio, double epsilon) { return std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon); }

double clipped_term(double ratio, double advantage, double epsilon) {
  return std::min(ratio * advantage, clip_ratio(ratio, epsilon) * advantage);
}

double clipped_term_grad(double ratio, double advantage, double epsilon) {
  const double unclipped = ratio * advantage;
  const double clipped = clip_ratio(ratio, epsilon) * advantage;
  return clipped < unclipped ? 0.0 : advantage;
}

double clipped_objective(std::span<const double> ratios, std::span<const double> advantages, double epsilon) {
  if (ratios.size() != advantages.size()) throw std::invalid_argument("clipped_objective: length mismatch");
  double sum = 0.0;
  for (std::size_t t = 0; t < ratios.size(); ++t) sum += clipped_term(ratios[t], advantages[t], epsilon);
  return sum;
}

ObjectiveResult grpo_objective(const ModelParams& params, std::span<const GroupBatch> batches, const RLConfig& cfg,
                               int workers, bool with_grad) {
  if (batches.empty()) throw std::invalid_argument("grpo_objective: empty batch");
  const int Q = params.config.num_codebooks;

  struct Job {
    int batch;
    int rollout;
  };
  std::vector<Job> jobs;
  for (int b = 0; b < static_cast<int>(batches.size()); ++b)
    for (int i = 0; i < static_cast<int>(batches[b].rollouts.size()); ++i) jobs.push_back({b, i});

  struct Partial {
    double objective = 0.0;
    double ratio_sum = 0.0;
    std::size_t clipped = 0;
    std::size_t tokens = 0;
    std::vector<double> grad;
  };
  std::vector<Partial> partials(jobs.size());

  parallel_for(static_cast<int>(jobs.size()), workers, [&](int k) {
    const auto& batch = batches[jobs[k].batch];
    const auto& gen = batch.rollouts[jobs[k].rollout];
    const auto& adv = batch.rewards.advantages[jobs[k].rollout];
    const double group = static_cast<double>(batch.rollouts.size());
    const double scale = 1.0 / (group * static_cast<double>(batches.size()));
    Partial& out = partials[k];
    const int T = gen.grid.num_frames();
    if (T == 0) return;

    ModelTape tape(params, gen.grid);
    Matrix logp_new(T, Q + 1);
    for (int t = 0; t < T; ++t)
      for (int s = 0; s <= Q; ++s) logp_new(t, s) = tape.log_probs()(t, s);
    const Matrix ratios = probability_ratios(logp_new, gen.log_probs);

    Matrix weights(T, gen.grid.num_streams());
    for (int t = 0; t < T; ++t) {
      for (int s = 0; s <= Q; ++s) {
        const double r = ratios(t, s);
        const double c = cfg.stream_weight(s) * scale;
        out.objective += c * clipped_term(r, adv[t], cfg.clip_epsilon);
        out.ratio_sum += r;
        out.clipped += (r < 1.0 - cfg.clip_epsilon || r > 1.0 + cfg.clip_epsilon) ? 1 : 0;
        ++out.tokens;
        // d/dlogp of c * term = c * dterm/dratio * ratio.
        weights(t, s) = c * clipped_term_grad(r, adv[t], cfg.clip_epsilon) * r;
      }
    }
    if (with_grad) {
      out.grad.assign(params.values.size(), 0.0);
      tape.backward(weights, out.grad);
    }
  });

  ObjectiveResult result;
  if (with_grad) result.grad.assign(params.values.size(), 0.0);
  double ratio_sum = 0.0;
  std::size_t clipped = 0;
  for (const auto& p : partials) {
    result.objective += p.objective;
    ratio_sum += p.ratio_sum;
    clipped += p.clipped;
    result.tokens += p.tokens;
    if (with_grad && !p.grad.empty())
      for (std::size_t i = 0; i < result.grad.size(); ++i) result.grad[i] += p.grad[i];
  }
  if (result.tokens > 0) {
    result.mean_ratio = ratio_sum / static_cast<double>(result.tokens);
    result.clip_fraction = static_cast<double>(clipped) / static_cast<double>(result.tokens);
  }
  return result;
}

PolicyState::PolicyState(ModelParams initial, AdamConfig adam)
    : current_(initial), old_(std::move(initial)), optimizer_(adam, current_.values.size()) {}

void PolicyState::refresh_old_policy() { old_.values = current_.values; }

UpdateStats PolicyState::update(std::span<const GroupBatch> batches, const RLConfig& cfg, int workers) {
  UpdateStats stats;
  ObjectiveResult result;
  try {
    result = grpo_objective(current_, batches, cfg, workers, true);
  } catch (const NumericError& e) {
    stats.skipped = true;
    stats.diagnostic = e.what();
    ++updates_;
    if (updates_ % cfg.refresh_period == 0) refresh_old_policy();
    return stats;
  }
  stats.objective = result.objective;
  stats.mean_ratio = result.mean_ratio;
  stats.clip_fraction = result.clip_fraction;
  stats.grad_norm = l2_norm(result.grad);
  if (!std::isfinite(stats.grad_norm)) {
    stats.skipped = true;
    stats.diagnostic = "non-finite gradient";
  } else {
    clip_grad_norm(result.grad, cfg.grad_clip);
    // Gradient ascent: descend on the negated objective.
    for (double& g : result.grad) g = -g;
    optimizer_.step(current_.values, result.grad, cfg.learning_rate);
  }
  ++updates_;
  if (updates_ % cfg.refresh_period == 0) refresh_old_policy();
  return stats;
}

GroupBatch sample_group(const ModelParams& policy, const Utterance& u, const EnvConfig& env, const RLConfig& cfg,
                        std::uint64_t seed) {
  GroupBatch batch;
  batch.utterance = &u;
  const int frames = std::min(cfg.rollout_frames, policy.config.context_frames);
  const TokenGrid source = make_source_grid(u, env, frames, policy.config.acoustic_delay_frames);
  for (int i = 0; i < cfg.group_size; ++i) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
    batch.rollouts.push_back(sample_translation(policy, source, cfg.sampling, rng, frames));
  }
  batch.rewards = compute_reward_table(batch.rollouts, u, cfg.reward);
  return batch;
}

}  // namespace simulrl
