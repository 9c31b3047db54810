#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tprf/mat.hpp"
#include "tprf/rng.hpp"
#include "tprf/tape.hpp"

namespace tprf {

// Architecture hyperparameters of the feedback encoder.
struct ModelConfig {
  uint32_t layers = 1;
  uint32_t heads = 1;
  uint32_t model_dim = 768;
  uint32_t ffn_dim = 1024;
  float dropout = 0.2f;

  // d % h == 0 is enforced here, never at encode time.
  void validate() const;
  uint32_t head_dim() const { return model_dim / heads; }
};

// How the (k+1)-row output matrix reduces to one query vector: take the
// transformed row at the query position (default), or mean-pool all
// rows (ablation switch).
enum class OutputReduction { QueryRow, MeanPool };

// One encoder layer's weights. Row-vector convention: y = x * W + b.
struct LayerParams {
  Mat w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;  // attention, all d x d / 1 x d
  Mat w_1, b_1;                                // d x ffn / 1 x ffn
  Mat w_2, b_2;                                // ffn x d / 1 x d
  Mat ln1_gain, ln1_bias, ln2_gain, ln2_bias;  // 1 x d each
};

// Full learnable weight set. Held in 64-bit in memory (training and
// gradient checks run in double); serialized as float32 in checkpoints.
struct Parameters {
  ModelConfig config;
  std::vector<LayerParams> layers;

  // Visits tensors in the fixed serialization order. `decayed` marks
  // tensors subject to weight decay (weight matrices only; biases and
  // layer-norm parameters are excluded).
  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    for (auto& l : layers) {
      fn(l.w_q, true); fn(l.b_q, false);
      fn(l.w_k, true); fn(l.b_k, false);
      fn(l.w_v, true); fn(l.b_v, false);
      fn(l.w_o, true); fn(l.b_o, false);
      fn(l.w_1, true); fn(l.b_1, false);
      fn(l.w_2, true); fn(l.b_2, false);
      fn(l.ln1_gain, false); fn(l.ln1_bias, false);
      fn(l.ln2_gain, false); fn(l.ln2_bias, false);
    }
  }
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    const_cast<Parameters*>(this)->for_each_tensor(
        [&fn](Mat& m, bool decayed) { fn(const_cast<const Mat&>(m), decayed); });
  }

  uint64_t tensor_entry_count() const;
  bool all_finite() const;
};

// count = l * [4(d^2 + d) + (d*ffn + ffn) + (ffn*d + d) + 4d]
uint64_t param_count(const ModelConfig& config);
// 4 bytes per float32 parameter.
uint64_t size_bytes(const ModelConfig& config);

// Xavier-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases,
// unit layer-norm gains. Deterministic per seed.
Parameters init_params(const ModelConfig& config, uint64_t seed);

// Stacks the query (row 0) over the feedback vectors (rows 1..k, in
// first-stage rank order). k must be >= 1 and all dims must agree.
Mat build_input_matrix(std::span<const float> query,
                       const std::vector<std::span<const float>>& feedback);

// Sinusoidal position offsets added in place of rank position:
// out[pos][2i]   = in[pos][2i]   + sin(pos / 10000^(2i/d))
// out[pos][2i+1] = in[pos][2i+1] + cos(pos / 10000^(2i/d))
// The query row sits at position 0.
Mat positional_encode(const Mat& input);

// Optional per-layer introspection for tests and diagnostics.
struct LayerTrace {
  std::vector<Mat> attention;  // one (n x n) softmax matrix per head
};

// One post-norm encoder layer:
//   y1  = LayerNorm(x + MultiHeadAttention(x))
//   out = LayerNorm(y1 + FFN(y1)),  FFN(z) = ReLU(z*W1 + b1)*W2 + b2
// Attention is scaled dot-product with h heads of dim d/h. Passing a
// dropout_rng enables dropout on attention weights and FFN hidden
// activations; with it null the op is deterministic.
Mat encoder_layer(const Mat& x, const LayerParams& layer, const ModelConfig& config,
                  Rng* dropout_rng = nullptr, LayerTrace* trace = nullptr);

// Full feedback fusion: stack -> positional encoding -> all encoder
// layers (dropout off) -> reduce to one d-dim query vector.
std::vector<float> encode(std::span<const float> query,
                          const std::vector<std::span<const float>>& feedback,
                          const Parameters& params,
                          OutputReduction reduction = OutputReduction::QueryRow);

// Tape-graph assembly shared by encode() and the trainer. Registers
// every parameter tensor as a borrowed leaf (ids appended to
// param_leaves in serialization order), builds all layers on top of
// input node `x`, and returns the node holding the final (k+1) x d
// matrix. `params` must outlive the tape.
int build_encoder_graph(Tape& tape, int x, const Parameters& params,
                        std::vector<int>* param_leaves, Rng* dropout_rng,
                        std::vector<int>* attention_nodes = nullptr);

// Checkpoint file, little-endian: magic "TPRF", version u32, l, h, d,
// ffn_dim u32, dropout f32, then parameters as float32 row-major in
// for_each_tensor order.
void save_checkpoint(const Parameters& params, const std::string& path);
Parameters load_checkpoint(const std::string& path);

}  // namespace tprf
