#pragma once

#include <string>
#include <utility>
#include <vector>

#include "arft/tape.hpp"

namespace arft {

// LayerNorm epsilon used everywhere in the model.
inline constexpr double kLayerNormEps = 1e-5;

struct ModelConfig {
  std::size_t p = 0;           // feature count (excludes the [CLS] slot)
  std::size_t d_token = 32;    // token width
  std::size_t n_heads = 8;     // attention heads m
  std::size_t n_layers = 3;    // stacked transformer layers L
  double ffn_hidden_factor = 4.0 / 3.0;  // hidden = floor(d_token * factor)
  double dropout_rate = 0.1;
  std::size_t head_classes = 2;
  // Ablation switch: false drops every attention sublayer (and its parameters),
  // keeping tokenizer, per-layer FFN blocks, final LayerNorm and head.
  bool with_attention = true;

  std::size_t d_head() const { return d_token / n_heads; }
  std::size_t ffn_hidden() const {
    const auto h = static_cast<std::size_t>(static_cast<double>(d_token) * ffn_hidden_factor);
    return h < 1 ? 1 : h;
  }
  void validate() const;
};

// Per-feature affine tokenizer. Row j of weight/bias is (W_j, b_j); row 0 is
// the [CLS] slot, which is fed a constant 1 input.
struct TokenizerParams {
  Tensor weight;  // [p+1, d_token]
  Tensor bias;    // [p+1, d_token]
};

// One transformer layer. The per-head projections W_{q,m}, W_{k,m}, W_{v,m}
// (each d_token x d_k) are stored concatenated along columns, so head m owns
// columns [m*d_k, (m+1)*d_k) of wq/wk/wv.
struct LayerParams {
  Tensor wq, wk, wv;  // [d_token, d_token] each (empty when attention is off)
  Tensor wo;          // [d_token, d_token] (empty when attention is off)
  Tensor attn_norm_gain, attn_norm_bias;  // [d_token] (empty when attention is off)
  Tensor ffn_w1, ffn_b1;                  // [d_token, 2*hidden], [2*hidden]
  Tensor ffn_w2, ffn_b2;                  // [hidden, d_token], [d_token]
  Tensor ffn_norm_gain, ffn_norm_bias;    // [d_token]
};

struct HeadParams {
  Tensor norm_gain, norm_bias;  // [d_token]
  Tensor weight;                // [d_token, 2]
  Tensor bias;                  // [2]
};

struct ModelParams {
  ModelConfig config;
  TokenizerParams tokenizer;
  std::vector<LayerParams> layers;
  HeadParams head;

  // Every parameter tensor with a stable name, in a fixed order shared by
  // initialization, staging, the optimizer, and checkpoints.
  std::vector<std::pair<std::string, Tensor*>> named_tensors();
  std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;
  std::size_t count_scalars() const;
};

// Kaiming-uniform fan-in init (entries in +/- sqrt(6/fan_in)) for weights,
// zeros for biases, ones for LayerNorm gains. Deterministic per rng state.
ModelParams init_params(const ModelConfig& config, Rng& rng);

// Parameters staged onto a tape for one forward/backward pass. `all` holds
// the same tensors in named_tensors() order.
struct StagedModel {
  Var tok_w, tok_b;
  struct StagedLayer {
    Var wq, wk, wv, wo;
    Var attn_norm_gain, attn_norm_bias;
    Var ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    Var ffn_norm_gain, ffn_norm_bias;
  };
  std::vector<StagedLayer> layers;
  Var head_norm_gain, head_norm_bias, head_w, head_b;
  std::vector<Var> all;
};

// trainable=true registers parameters (gradients tracked); false stages them
// as constants for pure inference.
StagedModel stage(Tape& t, const ModelParams& params, bool trainable);

// Rebuilds the staged structure from a flat var list in named_tensors()
// order (as produced by a gradient checker that owns the leaf tensors).
StagedModel stage_from_vars(const ModelConfig& config, const std::vector<Var>& vars);

// tokens[i, 0, :] = 1*W_0 + b_0 ([CLS]); tokens[i, j, :] = x[i,j-1]*W_j + b_j.
Var tokenize(Tape& t, const Tensor& x, Var tok_w, Var tok_b);

// Pre-norm residual attention block over all p+1 tokens. skip_pre_norm drops
// the leading LayerNorm (used by the first layer). If attn_probe is non-null,
// one [N, T, T] row-stochastic weight tensor per head is appended to it.
Var attention_layer(Tape& t, Var x, const StagedModel::StagedLayer& lp, const ModelConfig& cfg,
                    bool skip_pre_norm, bool training, Rng& rng,
                    std::vector<Var>* attn_probe = nullptr);

// x + Dropout(Affine2(ReGLU(Affine1(LayerNorm(x))))).
Var ffn_block(Tape& t, Var x, const StagedModel::StagedLayer& lp, const ModelConfig& cfg,
              bool training, Rng& rng);

struct ForwardResult {
  Var logits;      // [N, 2]
  Var cls_repr;    // [N, d_token]: final-layer [CLS], before the head LayerNorm
  Var tokens_repr; // [N, p+1, d_token]: all final-layer tokens (alt. MMD reprs)
  std::vector<Var> attention;  // one [N,T,T] per (layer, head); empty for baseline
};

// Full FT-Transformer pass: tokenize, L x (attention + FFN), [CLS] readout,
// LayerNorm + linear head. Requires config.with_attention.
ForwardResult forward(Tape& t, const StagedModel& m, const ModelConfig& cfg, const Tensor& x,
                      bool training, Rng& rng);

// Ablation baseline: identical pipeline with every attention sublayer removed.
ForwardResult baseline_forward(Tape& t, const StagedModel& m, const ModelConfig& cfg,
                               const Tensor& x, bool training, Rng& rng);

// Dispatches on cfg.with_attention.
ForwardResult run_forward(Tape& t, const StagedModel& m, const ModelConfig& cfg, const Tensor& x,
                          bool training, Rng& rng);

// Inference convenience: dropout off, no gradients.
Tensor infer_logits(const ModelParams& params, const Tensor& x);

// softmax over the two logits; label 1 iff P(class 1) > threshold (a tie maps
// to 0, the conservative side).
std::vector<int> predict(const Tensor& logits, double threshold = 0.5);

// Text checkpoint with config and all tensors; %.17g values make the
// save -> load -> forward round trip bit-identical.
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace arft
