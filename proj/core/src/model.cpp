#include "simulrl/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "model_internal.hpp"
#include "simulrl/errors.hpp"
#include "simulrl/parallel.hpp"
#include "simulrl/rng.hpp"

namespace simulrl {

using nn::Mat;
using nn::RowVec;

void ModelConfig::validate() const {
  auto check_tc = [](const TransformerConfig& tc, const char* what) {
    if (tc.latent_dim < 2 || tc.layers < 1 || tc.heads < 1 || tc.ffn_dim < 1)
      throw ConfigError(std::string("model.") + what + ": dimensions must be positive");
    if (tc.latent_dim % tc.heads != 0)
      throw ConfigError(std::string("model.") + what + ": latent_dim must be divisible by heads");
  };
  check_tc(temporal, "temporal");
  check_tc(depth, "depth");
  if (positional != "rope" && positional != "none")
    throw ConfigError("model.positional must be \"rope\" or \"none\"");
  if (positional == "rope" && (temporal.latent_dim / temporal.heads) % 2 != 0)
    throw ConfigError("model: rotary positions need an even head dimension");
  if (!depth_shared_weights)
    throw ConfigError("model.depth.shared_weights=false (per-codebook depth weights) is not supported");
  if (acoustic_delay_frames < 0) throw ConfigError("model.acoustic_delay_frames must be >= 0");
  if (context_frames < 1) throw ConfigError("model.context_frames must be >= 1");
  if (num_codebooks < 2 || text_vocab_size < 1 || audio_vocab_size < 1)
    throw ConfigError("model: vocabulary shapes not set");
}

ModelConfig with_env_shapes(ModelConfig cfg, const EnvConfig& env) {
  cfg.num_codebooks = env.num_codebooks;
  cfg.text_vocab_size = env.text_vocab_size;
  cfg.audio_vocab_size = env.codebook_size;
  return cfg;
}

ParamLayout::ParamLayout(const ModelConfig& cfg) {
  const int D = cfg.temporal.latent_dim;
  const int d = cfg.depth.latent_dim;
  const int steps = cfg.depth_steps();
  auto block = [&](const std::string& prefix, const TransformerConfig& tc) {
    add(prefix + ".attn_norm", 1, tc.latent_dim);
    add(prefix + ".wqkv", tc.latent_dim, 3 * tc.latent_dim);
    add(prefix + ".wo", tc.latent_dim, tc.latent_dim);
    add(prefix + ".ffn_norm", 1, tc.latent_dim);
    add(prefix + ".w_gate", tc.latent_dim, tc.ffn_dim);
    add(prefix + ".w_up", tc.latent_dim, tc.ffn_dim);
    add(prefix + ".w_down", tc.ffn_dim, tc.latent_dim);
  };
  add("temporal.bos", 1, D);
  add("temporal.embed.text", cfg.text_vocab_size, D);
  for (int s = 1; s <= steps; ++s) add("temporal.embed.s" + std::to_string(s), cfg.audio_vocab_size, D);
  for (int l = 0; l < cfg.temporal.layers; ++l) block("temporal.block" + std::to_string(l), cfg.temporal);
  add("temporal.norm", 1, D);
  add("text_head", D, cfg.text_vocab_size);
  add("depth.in_proj", D, d);
  add("depth.step_embed", steps, d);
  add("depth.embed.text", cfg.text_vocab_size, d);
  for (int j = 1; j < steps; ++j) add("depth.embed.s" + std::to_string(j), cfg.audio_vocab_size, d);
  for (int l = 0; l < cfg.depth.layers; ++l) block("depth.block" + std::to_string(l), cfg.depth);
  add("depth.norm", 1, d);
  for (int j = 0; j < steps; ++j) add("depth.head" + std::to_string(j), d, cfg.audio_vocab_size);
}

void ParamLayout::add(const std::string& name, int rows, int cols) {
  tensors_.push_back({name, total_, rows, cols});
  total_ += static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
}

const TensorInfo& ParamLayout::find(const std::string& name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return t;
  throw std::out_of_range("no parameter tensor named " + name);
}

ModelParams ModelParams::initialize(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams p;
  p.config = cfg;
  p.layout = std::make_shared<const ParamLayout>(cfg);
  p.values.assign(p.layout->total_size(), 0.0);
  Rng rng(derive_seed(seed, {0x1A17}));
  const double residual_scale = 1.0 / std::sqrt(2.0 * (cfg.temporal.layers + cfg.depth.layers));
  auto ends_with = [](const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  for (const auto& t : p.layout->tensors()) {
    double* base = p.values.data() + t.offset;
    double stddev;
    if (ends_with(t.name, "_norm") || t.name == "temporal.norm" || t.name == "depth.norm") {
      std::fill(base, base + t.size(), 1.0);
      continue;
    }
    if (t.name.find("embed") != std::string::npos || t.name == "temporal.bos") {
      stddev = 0.5;
    } else {
      stddev = 1.0 / std::sqrt(static_cast<double>(t.rows));
      if (ends_with(t.name, ".wo") || ends_with(t.name, ".w_down")) stddev *= residual_scale;
      if (t.name == "text_head" || t.name.rfind("depth.head", 0) == 0) stddev *= 0.5;
    }
    for (std::size_t i = 0; i < t.size(); ++i) base[i] = stddev * rng.normal();
  }
  return p;
}

ModelParams ModelParams::zeros_like(const ModelParams& other) {
  ModelParams p;
  p.config = other.config;
  p.layout = other.layout;
  p.values.assign(other.values.size(), 0.0);
  return p;
}

std::span<double> ModelParams::tensor(const std::string& name) {
  const auto& t = layout->find(name);
  return {values.data() + t.offset, t.size()};
}

std::span<const double> ModelParams::tensor(const std::string& name) const {
  const auto& t = layout->find(name);
  return {values.data() + t.offset, t.size()};
}

bool ModelParams::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

TokenGrid apply_acoustic_delay(const TokenGrid& grid, int k) {
  if (k < 0) throw std::invalid_argument("acoustic delay must be >= 0");
  if (grid.num_frames() < k) throw DataError("grid shorter than the acoustic delay");
  TokenGrid out = grid;
  const int Q = grid.num_codebooks();
  for (int c = 1; c < Q; ++c) {
    for (int stream : {grid.out_stream(c), grid.in_stream(c)}) {
      for (int t = 0; t < grid.num_frames(); ++t)
        out.at(t, stream) = t < k ? audio_token::delay_fill : grid.at(t - k, stream);
    }
  }
  return out;
}

TokenGrid realign(const TokenGrid& grid, int k) {
  if (k < 0) throw std::invalid_argument("acoustic delay must be >= 0");
  if (grid.num_frames() < k) throw DataError("grid shorter than the acoustic delay");
  TokenGrid out = grid;
  const int Q = grid.num_codebooks();
  const int T = grid.num_frames();
  for (int c = 1; c < Q; ++c) {
    for (int stream : {grid.out_stream(c), grid.in_stream(c)}) {
      for (int t = 0; t < T; ++t)
        out.at(t, stream) = t + k < T ? grid.at(t + k, stream) : audio_token::delay_fill;
    }
  }
  return out;
}

namespace detail {

void check_grid(const ModelConfig& cfg, const TokenGrid& grid) {
  if (grid.num_codebooks() != cfg.num_codebooks) throw DataError("grid codebook count does not match model");
  if (grid.num_frames() < 1) throw DataError("empty grid");
  if (grid.num_frames() > cfg.context_frames)
    throw DataError("context overflow: " + std::to_string(grid.num_frames()) + " frames > context_frames " +
                    std::to_string(cfg.context_frames));
  for (int t = 0; t < grid.num_frames(); ++t)
    for (int s = 0; s < grid.num_streams(); ++s) {
      const int tok = grid.at(t, s);
      if (tok < 0 || tok >= cfg.vocab_size(s)) throw DataError("token out of its stream vocabulary");
    }
}

RowVec temporal_input(const ModelConfig& cfg, const ConstTensors& m, const TokenGrid& grid, int position) {
  const int D = cfg.temporal.latent_dim;
  if (position == 0) return nn::CRowMap(m.bos, D);
  const int t = position - 1;
  RowVec x = nn::CRowMap(m.temporal_text_embed + static_cast<std::size_t>(grid.at(t, 0)) * D, D);
  for (int s = 1; s < grid.num_streams(); ++s)
    x += nn::CRowMap(m.temporal_audio_embed[s - 1] + static_cast<std::size_t>(grid.at(t, s)) * D, D);
  return x;
}

IncrementalDecoder::IncrementalDecoder(const ModelParams& params)
    : params_(params), m_(view(params)), rope_(temporal_rope(params.config)) {
  const auto& cfg = params.config;
  temporal_cache_.resize(static_cast<std::size_t>(cfg.temporal.layers));
  for (auto& c : temporal_cache_) c.reset(cfg.context_frames, cfg.temporal.latent_dim);
  depth_cache_.resize(static_cast<std::size_t>(cfg.depth.layers));
}

RowVec IncrementalDecoder::advance(const RowVec& input) {
  const auto& cfg = params_.config;
  if (position_ >= cfg.context_frames) throw DataError("context overflow during decoding");
  RowVec x = input;
  for (std::size_t l = 0; l < m_.temporal_blocks.size(); ++l)
    x = nn::block_step(m_.temporal_blocks[l], rope_, x, temporal_cache_[l]);
  ++position_;
  return nn::rmsnorm_row(x, m_.temporal_norm);
}

RowVec IncrementalDecoder::text_logits(const RowVec& latent) const {
  const auto& cfg = params_.config;
  return latent * nn::cmap(m_.text_head, cfg.temporal.latent_dim, cfg.text_vocab_size);
}

void IncrementalDecoder::begin_frame(const RowVec& latent) {
  const auto& cfg = params_.config;
  depth_base_ = latent * nn::cmap(m_.depth_in_proj, cfg.temporal.latent_dim, cfg.depth.latent_dim);
  for (auto& c : depth_cache_) c.reset(cfg.depth_steps(), cfg.depth.latent_dim);
}

RowVec IncrementalDecoder::depth_step(int step, int input_token) {
  const auto& cfg = params_.config;
  const int d = cfg.depth.latent_dim;
  RowVec x = depth_base_ + nn::CRowMap(m_.depth_step_embed + static_cast<std::size_t>(step) * d, d) +
             nn::CRowMap(depth_input_embedding(cfg, m_, step, input_token), d);
  const nn::Rope no_rope{};
  for (std::size_t l = 0; l < m_.depth_blocks.size(); ++l)
    x = nn::block_step(m_.depth_blocks[l], no_rope, x, depth_cache_[l]);
  const RowVec h = nn::rmsnorm_row(x, m_.depth_norm);
  return h * nn::cmap(m_.depth_heads[step], d, cfg.audio_vocab_size);
}

}  // namespace detail

struct ModelTape::Impl {
  const ModelParams* params = nullptr;
  TokenGrid grid;
  int frames = 0;
  detail::ConstTensors m;
  nn::Rope rope;

  std::vector<nn::BlockCache> temporal_caches;
  nn::NormCache temporal_norm_cache;
  Mat z;                     // T x D
  Mat text_logp;             // T x N_W
  std::vector<nn::BlockCache> depth_caches;
  nn::NormCache depth_norm_cache;
  Mat depth_out;             // T*steps x d
  std::vector<Mat> step_logp;  // per depth step: T x N_a
  Matrix log_probs;

  void forward() {
    const auto& cfg = params->config;
    const int D = cfg.temporal.latent_dim;
    const int d = cfg.depth.latent_dim;
    const int steps = cfg.depth_steps();
    const int T = frames;

    Mat x(T, D);
    for (int p = 0; p < T; ++p) x.row(p) = detail::temporal_input(cfg, m, grid, p);
    temporal_caches.resize(m.temporal_blocks.size());
    for (std::size_t l = 0; l < m.temporal_blocks.size(); ++l) {
      Mat y;
      nn::block_forward(m.temporal_blocks[l], rope, T, x, y, temporal_caches[l]);
      x = std::move(y);
    }
    nn::rmsnorm_forward(x, m.temporal_norm, temporal_norm_cache, z);
    nn::log_softmax_rows(z * nn::cmap(m.text_head, D, cfg.text_vocab_size), text_logp);

    const Mat zp = z * nn::cmap(m.depth_in_proj, D, d);
    Mat u(static_cast<Eigen::Index>(T) * steps, d);
    const nn::CMap step_embed = nn::cmap(m.depth_step_embed, steps, d);
    for (int p = 0; p < T; ++p)
      for (int j = 0; j < steps; ++j)
        u.row(p * steps + j) = zp.row(p) + step_embed.row(j) +
                               nn::CRowMap(detail::depth_input_embedding(cfg, m, j, grid.at(p, j)), d);
    depth_caches.resize(m.depth_blocks.size());
    const nn::Rope no_rope{};
    for (std::size_t l = 0; l < m.depth_blocks.size(); ++l) {
      Mat y;
      nn::block_forward(m.depth_blocks[l], no_rope, steps, u, y, depth_caches[l]);
      u = std::move(y);
    }
    nn::rmsnorm_forward(u, m.depth_norm, depth_norm_cache, depth_out);
    step_logp.resize(static_cast<std::size_t>(steps));
    for (int j = 0; j < steps; ++j) {
      Mat h(T, d);
      for (int p = 0; p < T; ++p) h.row(p) = depth_out.row(p * steps + j);
      nn::log_softmax_rows(h * nn::cmap(m.depth_heads[j], d, cfg.audio_vocab_size), step_logp[j]);
    }

    log_probs = Matrix(T, cfg.num_streams());
    for (int p = 0; p < T; ++p) {
      log_probs(p, 0) = text_logp(p, grid.at(p, 0));
      for (int j = 0; j < steps; ++j) log_probs(p, j + 1) = step_logp[j](p, grid.at(p, j + 1));
    }
  }

  void backward(const Matrix& weights, std::span<double> grad_buffer) const {
    const auto& cfg = params->config;
    const int D = cfg.temporal.latent_dim;
    const int d = cfg.depth.latent_dim;
    const int steps = cfg.depth_steps();
    const int T = frames;
    if (weights.rows != T || weights.cols != cfg.num_streams())
      throw std::invalid_argument("ModelTape::backward: weight shape mismatch");
    if (grad_buffer.size() != params->values.size())
      throw std::invalid_argument("ModelTape::backward: gradient size mismatch");
    const auto g = detail::resolve(cfg, *params->layout, grad_buffer.data());

    // d/dlogits of w * log_softmax(logits)[tok] = w * (onehot - softmax).
    auto logit_grad = [&](const Mat& logp, int stream) {
      Mat dl = Mat::Zero(T, logp.cols());
      for (int p = 0; p < T; ++p) {
        const double w = weights(p, stream);
        if (w == 0.0) continue;
        dl.row(p) = -w * logp.row(p).array().exp();
        dl(p, grid.at(p, stream)) += w;
      }
      return dl;
    };

    Mat dz = Mat::Zero(T, D);
    {
      const Mat dl = logit_grad(text_logp, 0);
      nn::mmap(g.text_head, D, cfg.text_vocab_size).noalias() += z.transpose() * dl;
      dz.noalias() += dl * nn::cmap(m.text_head, D, cfg.text_vocab_size).transpose();
    }

    Mat dout = Mat::Zero(static_cast<Eigen::Index>(T) * steps, d);
    bool any_depth = false;
    for (int j = 0; j < steps; ++j) {
      bool active = false;
      for (int p = 0; p < T && !active; ++p) active = weights(p, j + 1) != 0.0;
      if (!active) continue;
      any_depth = true;
      const Mat dl = logit_grad(step_logp[j], j + 1);
      Mat h(T, d);
      for (int p = 0; p < T; ++p) h.row(p) = depth_out.row(p * steps + j);
      nn::mmap(g.depth_heads[j], d, cfg.audio_vocab_size).noalias() += h.transpose() * dl;
      const Mat dh = dl * nn::cmap(m.depth_heads[j], d, cfg.audio_vocab_size).transpose();
      for (int p = 0; p < T; ++p) dout.row(p * steps + j) = dh.row(p);
    }

    if (any_depth) {
      Mat du;
      nn::rmsnorm_backward(depth_norm_cache, m.depth_norm, g.depth_norm, dout, du);
      const nn::Rope no_rope{};
      for (std::size_t l = m.depth_blocks.size(); l-- > 0;) {
        Mat dx;
        nn::block_backward(m.depth_blocks[l], g.depth_blocks[l], no_rope, steps, depth_caches[l], du, dx);
        du = std::move(dx);
      }
      nn::MMap step_grad = nn::mmap(g.depth_step_embed, steps, d);
      Mat dzp = Mat::Zero(T, d);
      for (int p = 0; p < T; ++p)
        for (int j = 0; j < steps; ++j) {
          const auto row = du.row(p * steps + j);
          step_grad.row(j) += row;
          dzp.row(p) += row;
          const int tok = grid.at(p, j);
          double* table = j == 0 ? g.depth_text_embed : g.depth_audio_embed[j - 1];
          nn::MRowMap(table + static_cast<std::size_t>(tok) * d, d) += row;
        }
      nn::mmap(g.depth_in_proj, D, d).noalias() += z.transpose() * dzp;
      dz.noalias() += dzp * nn::cmap(m.depth_in_proj, D, d).transpose();
    }

    Mat dx;
    nn::rmsnorm_backward(temporal_norm_cache, m.temporal_norm, g.temporal_norm, dz, dx);
    for (std::size_t l = m.temporal_blocks.size(); l-- > 0;) {
      Mat dprev;
      nn::block_backward(m.temporal_blocks[l], g.temporal_blocks[l], rope, T, temporal_caches[l], dx, dprev);
      dx = std::move(dprev);
    }
    nn::MRowMap(g.bos, D) += dx.row(0);
    for (int p = 1; p < T; ++p) {
      const int t = p - 1;
      nn::MRowMap(g.temporal_text_embed + static_cast<std::size_t>(grid.at(t, 0)) * D, D) += dx.row(p);
      for (int s = 1; s < grid.num_streams(); ++s)
        nn::MRowMap(g.temporal_audio_embed[s - 1] + static_cast<std::size_t>(grid.at(t, s)) * D, D) += dx.row(p);
    }
  }
};

ModelTape::ModelTape(const ModelParams& params, const TokenGrid& grid) : impl_(std::make_unique<Impl>()) {
  detail::check_grid(params.config, grid);
  impl_->params = &params;
  impl_->grid = grid;
  impl_->frames = grid.num_frames();
  impl_->m = detail::view(params);
  impl_->rope = detail::temporal_rope(params.config);
  impl_->forward();
}

ModelTape::~ModelTape() = default;
ModelTape::ModelTape(ModelTape&&) noexcept = default;
ModelTape& ModelTape::operator=(ModelTape&&) noexcept = default;

const Matrix& ModelTape::log_probs() const { return impl_->log_probs; }

void ModelTape::backward(const Matrix& weights, std::span<double> grad) const { impl_->backward(weights, grad); }

Matrix temporal_forward(const ModelParams& params, const TokenGrid& grid) {
  detail::check_grid(params.config, grid);
  const auto m = detail::view(params);
  detail::IncrementalDecoder dec(params);
  Matrix z(grid.num_frames(), params.config.temporal.latent_dim);
  for (int p = 0; p < grid.num_frames(); ++p) {
    const RowVec zp = dec.advance(detail::temporal_input(params.config, m, grid, p));
    std::copy(zp.data(), zp.data() + zp.size(), z.row(p).begin());
  }
  return z;
}

Matrix depth_forward(const ModelParams& params, std::span<const double> latent, std::span<const int> frame_tokens) {
  const auto& cfg = params.config;
  if (static_cast<int>(latent.size()) != cfg.temporal.latent_dim)
    throw std::invalid_argument("depth_forward: latent size mismatch");
  if (static_cast<int>(frame_tokens.size()) != cfg.num_streams())
    throw std::invalid_argument("depth_forward: frame token count mismatch");
  const int width = std::max(cfg.text_vocab_size, cfg.audio_vocab_size);
  Matrix out(cfg.num_streams(), width, -std::numeric_limits<double>::infinity());
  detail::IncrementalDecoder dec(params);
  const RowVec z = nn::CRowMap(latent.data(), cfg.temporal.latent_dim);
  const RowVec text = dec.text_logits(z);
  for (int i = 0; i < cfg.text_vocab_size; ++i) out(0, i) = text(i);
  dec.begin_frame(z);
  for (int j = 0; j < cfg.depth_steps(); ++j) {
    const int tok = frame_tokens[j];
    if (tok < 0 || tok >= cfg.vocab_size(j)) throw DataError("depth_forward: token out of vocabulary");
    const RowVec logits = dec.depth_step(j, tok);
    for (int i = 0; i < cfg.audio_vocab_size; ++i) out(j + 1, i) = logits(i);
  }
  return out;
}

Matrix token_log_probs(const ModelParams& params, const TokenGrid& grid) {
  return ModelTape(params, grid).log_probs();
}

LossAndGrad supervised_loss_and_grads(const ModelParams& params, const TokenGrid& grid) {
  return supervised_loss_and_grads(params, std::span<const TokenGrid>(&grid, 1), 1);
}

LossAndGrad supervised_loss_and_grads(const ModelParams& params, std::span<const TokenGrid> batch, int workers,
                                      std::span<const double> stream_weights) {
  if (batch.empty()) throw DataError("empty batch");
  const int S = params.config.num_streams();
  if (!stream_weights.empty() && static_cast<int>(stream_weights.size()) != S)
    throw std::invalid_argument("supervised_loss_and_grads: one weight per stream required");
  auto weight = [&](int s) { return stream_weights.empty() ? 1.0 : stream_weights[s]; };

  std::size_t total_tokens = 0;
  std::vector<std::size_t> stream_tokens(S, 0);
  for (const auto& g : batch)
    for (int t = 0; t < g.num_frames(); ++t)
      for (int s = 0; s < S; ++s)
        if (g.masked(t, s)) ++stream_tokens[s];
  double total_weight = 0.0;
  for (int s = 0; s < S; ++s) {
    total_tokens += stream_tokens[s];
    total_weight += weight(s) * static_cast<double>(stream_tokens[s]);
  }
  if (total_tokens == 0) throw DataError("empty loss mask");
  if (!(total_weight > 0.0)) throw std::invalid_argument("supervised_loss_and_grads: zero total weight");
  const double scale = 1.0 / total_weight;

  std::vector<std::vector<double>> grads(batch.size());
  std::vector<std::vector<double>> sums(batch.size(), std::vector<double>(S, 0.0));
  parallel_for(static_cast<int>(batch.size()), workers, [&](int i) {
    const TokenGrid& grid = batch[i];
    grads[i].assign(params.values.size(), 0.0);
    if (grid.mask_count() == 0) return;
    ModelTape tape(params, grid);
    Matrix weights(grid.num_frames(), grid.num_streams());
    for (int t = 0; t < grid.num_frames(); ++t)
      for (int s = 0; s < grid.num_streams(); ++s)
        if (grid.masked(t, s)) {
          weights(t, s) = -weight(s) * scale;
          sums[i][s] -= tape.log_probs()(t, s);
        }
    tape.backward(weights, grads[i]);
  });

  LossAndGrad out;
  out.tokens = total_tokens;
  out.grad.assign(params.values.size(), 0.0);
  out.stream_loss.assign(S, 0.0);
  double weighted = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (int s = 0; s < S; ++s) {
      weighted += weight(s) * sums[i][s];
      out.stream_loss[s] += sums[i][s];
    }
    for (std::size_t k = 0; k < out.grad.size(); ++k) out.grad[k] += grads[i][k];
  }
  for (int s = 0; s < S; ++s)
    out.stream_loss[s] = stream_tokens[s] ? out.stream_loss[s] / static_cast<double>(stream_tokens[s]) : 0.0;
  out.loss = weighted * scale;
  return out;
}

}  // namespace simulrl
