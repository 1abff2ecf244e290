#pragma once

#include <vector>

#include "nn.hpp"
#include "simulrl/model.hpp"

namespace simulrl::detail {

// Named tensors of a ModelParams buffer (or of a gradient buffer with the
// same layout) resolved to raw pointers.
template <typename Ptr>
struct ModelTensors {
  Ptr bos = nullptr;                    // 1 x D
  Ptr temporal_text_embed = nullptr;    // N_W x D
  std::vector<Ptr> temporal_audio_embed;  // stream s (1..2Q) at index s - 1; N_a x D
  std::vector<nn::BlockTensors<Ptr>> temporal_blocks;
  Ptr temporal_norm = nullptr;          // 1 x D
  Ptr text_head = nullptr;              // D x N_W
  Ptr depth_in_proj = nullptr;          // D x d
  Ptr depth_step_embed = nullptr;       // 2Q x d
  Ptr depth_text_embed = nullptr;       // N_W x d, input of step 0
  std::vector<Ptr> depth_audio_embed;   // input of step j (1..2Q-1) at index j - 1; N_a x d
  std::vector<nn::BlockTensors<Ptr>> depth_blocks;
  Ptr depth_norm = nullptr;             // 1 x d
  std::vector<Ptr> depth_heads;         // step j predicts stream j + 1; d x N_a
};

template <typename Ptr>
ModelTensors<Ptr> resolve(const ModelConfig& cfg, const ParamLayout& layout, Ptr base) {
  auto at = [&](const std::string& name) { return base + layout.find(name).offset; };
  auto block = [&](const std::string& prefix, const TransformerConfig& tc) {
    nn::BlockTensors<Ptr> b;
    b.dim = tc.latent_dim;
    b.heads = tc.heads;
    b.ffn = tc.ffn_dim;
    b.attn_norm = at(prefix + ".attn_norm");
    b.wqkv = at(prefix + ".wqkv");
    b.wo = at(prefix + ".wo");
    b.ffn_norm = at(prefix + ".ffn_norm");
    b.w_gate = at(prefix + ".w_gate");
    b.w_up = at(prefix + ".w_up");
    b.w_down = at(prefix + ".w_down");
    return b;
  };
  ModelTensors<Ptr> m;
  const int steps = cfg.depth_steps();
  m.bos = at("temporal.bos");
  m.temporal_text_embed = at("temporal.embed.text");
  for (int s = 1; s <= steps; ++s) m.temporal_audio_embed.push_back(at("temporal.embed.s" + std::to_string(s)));
  for (int l = 0; l < cfg.temporal.layers; ++l)
    m.temporal_blocks.push_back(block("temporal.block" + std::to_string(l), cfg.temporal));
  m.temporal_norm = at("temporal.norm");
  m.text_head = at("text_head");
  m.depth_in_proj = at("depth.in_proj");
  m.depth_step_embed = at("depth.step_embed");
  m.depth_text_embed = at("depth.embed.text");
  for (int j = 1; j < steps; ++j) m.depth_audio_embed.push_back(at("depth.embed.s" + std::to_string(j)));
  for (int l = 0; l < cfg.depth.layers; ++l)
    m.depth_blocks.push_back(block("depth.block" + std::to_string(l), cfg.depth));
  m.depth_norm = at("depth.norm");
  for (int j = 0; j < steps; ++j) m.depth_heads.push_back(at("depth.head" + std::to_string(j)));
  return m;
}

using ConstTensors = ModelTensors<const double*>;
using GradTensors = ModelTensors<double*>;

inline ConstTensors view(const ModelParams& p) { return resolve(p.config, *p.layout, p.values.data()); }

inline nn::Rope temporal_rope(const ModelConfig& cfg) { return {cfg.positional == "rope", cfg.rope_base}; }

// Embedding row of `token` for the depth-step-j input.
inline const double* depth_input_embedding(const ModelConfig& cfg, const ConstTensors& m, int step, int token) {
  const int d = cfg.depth.latent_dim;
  if (step == 0) return m.depth_text_embed + static_cast<std::size_t>(token) * d;
  return m.depth_audio_embed[step - 1] + static_cast<std::size_t>(token) * d;
}

// Temporal input row for position p: BOS at p = 0, otherwise the sum of all
// stream embeddings of grid column p - 1.
nn::RowVec temporal_input(const ModelConfig& cfg, const ConstTensors& m, const TokenGrid& grid, int position);

// Incremental decoder state for sampling.
class IncrementalDecoder {
 public:
  explicit IncrementalDecoder(const ModelParams& params);

  // Feeds the temporal input for the next position and returns Z for it.
  nn::RowVec advance(const nn::RowVec& input);
  int position() const { return position_; }

  // Depth decoding inside one frame: begin() with the frame latent, then
  // step(j, token_of_stream_j) returns logits of stream j + 1.
  void begin_frame(const nn::RowVec& latent);
  nn::RowVec depth_step(int step, int input_token);
  nn::RowVec text_logits(const nn::RowVec& latent) const;

 private:
  const ModelParams& params_;
  ConstTensors m_;
  nn::Rope rope_;
  std::vector<nn::KVCache> temporal_cache_;
  std::vector<nn::KVCache> depth_cache_;
  nn::RowVec depth_base_;
  int position_ = 0;
};

void check_grid(const ModelConfig& cfg, const TokenGrid& grid);

}  // namespace simulrl::detail
