#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "simulrl/corpus.hpp"
#include "simulrl/tensor.hpp"

namespace simulrl {

struct TransformerConfig {
  int latent_dim = 64;
  int layers = 2;
  int heads = 2;
  int ffn_dim = 128;  // hidden width of the gated SiLU feed-forward

  bool operator==(const TransformerConfig&) const = default;
};

struct ModelConfig {
  TransformerConfig temporal{64, 2, 2, 128};
  int context_frames = 128;
  TransformerConfig depth{32, 1, 2, 64};
  bool depth_shared_weights = true;  // one depth transformer for every codebook step
  int acoustic_delay_frames = 2;
  std::string positional = "rope";   // temporal positions; depth steps use learned embeddings
  double rope_base = 10000.0;
  // Vocabulary shapes, copied from the environment.
  int num_codebooks = 4;
  int text_vocab_size = 53;
  int audio_vocab_size = 64;

  int num_streams() const { return 2 * num_codebooks + 1; }
  int depth_steps() const { return 2 * num_codebooks; }
  int vocab_size(int stream) const { return stream == 0 ? text_vocab_size : audio_vocab_size; }
  void validate() const;  // throws ConfigError
  bool operator==(const ModelConfig&) const = default;
};

// Copies vocabulary shapes from an environment into a model config.
ModelConfig with_env_shapes(ModelConfig cfg, const EnvConfig& env);

struct TensorInfo {
  std::string name;
  std::size_t offset = 0;
  int rows = 0;
  int cols = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

// Flat parameter layout: every tensor is a row-major slice of one buffer, so
// optimizers, checkpoints and finite-difference checks work on a single span.
class ParamLayout {
 public:
  explicit ParamLayout(const ModelConfig& cfg);

  const std::vector<TensorInfo>& tensors() const { return tensors_; }
  const TensorInfo& find(const std::string& name) const;
  std::size_t total_size() const { return total_; }

 private:
  void add(const std::string& name, int rows, int cols);

  std::vector<TensorInfo> tensors_;
  std::size_t total_ = 0;
};

struct ModelParams {
  ModelConfig config;
  std::shared_ptr<const ParamLayout> layout;
  std::vector<double> values;

  static ModelParams initialize(const ModelConfig& cfg, std::uint64_t seed);
  // Same config and layout, values set to zero (a gradient buffer).
  static ModelParams zeros_like(const ModelParams& other);

  std::size_t size() const { return values.size(); }
  std::span<double> tensor(const std::string& name);
  std::span<const double> tensor(const std::string& name) const;
  bool all_finite() const;
};

// Shifts acoustic codebooks (codebook index >= 1, both output and input
// streams) k frames later; the first k frames get audio_token::delay_fill.
TokenGrid apply_acoustic_delay(const TokenGrid& grid, int k);
// Inverse shift; the last k frames of acoustic codebooks become delay_fill.
TokenGrid realign(const TokenGrid& grid, int k);

// Z_t for every frame t of the grid: row t depends on BOS and columns < t.
Matrix temporal_forward(const ModelParams& params, const TokenGrid& grid);

// Logits of every stream at one frame. Row 0 holds text logits (a linear map
// of the latent); row s >= 1 holds stream s logits from depth step s - 1,
// which sees the latent and the frame's tokens of streams < s. Rows are padded
// to the widest vocabulary.
Matrix depth_forward(const ModelParams& params, std::span<const double> latent,
                     std::span<const int> frame_tokens);

// Log-probability of every grid token under the model (frames x streams).
Matrix token_log_probs(const ModelParams& params, const TokenGrid& grid);

// Forward pass with retained activations. backward() accumulates the gradient
// of sum_{t,s} weights(t, s) * log p(token(t, s)) into `grad`.
class ModelTape {
 public:
  ModelTape(const ModelParams& params, const TokenGrid& grid);
  ~ModelTape();
  ModelTape(ModelTape&&) noexcept;
  ModelTape& operator=(ModelTape&&) noexcept;

  const Matrix& log_probs() const;
  void backward(const Matrix& weights, std::span<double> grad) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct LossAndGrad {
  double loss = 0.0;          // (weighted) mean token cross-entropy over masked cells
  std::size_t tokens = 0;     // number of masked cells
  std::vector<double> grad;   // d loss / d params
  std::vector<double> stream_loss;  // unweighted mean cross-entropy per stream
};

// Mean cross-entropy over the grid's mask. Throws DataError on an empty mask.
LossAndGrad supervised_loss_and_grads(const ModelParams& params, const TokenGrid& grid);
// Token-mean over a batch of grids; items are processed by `workers` threads
// and reduced in index order. Optional per-stream weights turn it into a
// weighted mean: sum_s w_s * nll_s / sum_s w_s * count_s.
LossAndGrad supervised_loss_and_grads(const ModelParams& params, std::span<const TokenGrid> batch,
                                      int workers = 1, std::span<const double> stream_weights = {});

}  // namespace simulrl
