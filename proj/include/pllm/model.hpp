#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pllm/common.hpp"
#include "pllm/vocab.hpp"

namespace pllm {

struct ModelConfig {
  int vocab = 0;
  int dim = 64;
  int layers = 2;
  int heads = 4;
  int ffn = 256;
  int feat_dim = 16;
  int context = 256;

  bool operator==(const ModelConfig&) const = default;
};

struct LayerParams {
  Vec ln1_gain, ln1_bias;
  Mat wq, wk, wv, wo;  // [d x d]
  Vec bq, bk, bv, bo;  // [d]
  Vec ln2_gain, ln2_bias;
  Mat w_ff1;  // [d x ffn]
  Vec b_ff1;
  Mat w_ff2;  // [ffn x d]
  Vec b_ff2;
};

// All trainable tensors of the decoder. Pre-LN blocks, sinusoidal positions
// (not trainable), a linear modality projector without bias so projected
// embeddings stay exactly linear in the features, and an output head whose
// rows are this model's "feature channels" for gradient surgery.
struct ModelParams {
  ModelConfig config;
  Mat tok_embed;  // [V x d]
  Mat w_proj;     // [feat_dim x d]
  std::vector<LayerParams> layers;
  Vec lnf_gain, lnf_bias;
  Mat w_out;  // [d x V]
  Vec b_out;  // [V]
};

ModelParams init_params(const ModelConfig& config, u64 seed);
ModelParams zeros_like(const ModelConfig& config);
i64 param_count(const ModelConfig& config);

// Flat view over every tensor in checkpoint order. Vectors report cols == 1.
struct TensorRef {
  std::string name;
  double* data;
  i64 rows, cols;
  i64 size() const { return rows * cols; }
};
std::vector<TensorRef> tensor_refs(ModelParams& p);

// Name of the first tensor containing a non-finite entry, if any.
std::optional<std::string> find_non_finite(ModelParams& p);

struct Batch {
  std::vector<std::vector<int>> ids;            // [B][S], equal lengths
  std::vector<std::vector<int>> targets;        // [B][S]
  std::vector<std::vector<std::uint8_t>> mask;  // [B][S], 1 on answer positions
  std::vector<std::optional<Mat>> features;     // per example [n_modal x feat_dim]
};

struct LayerCache {
  Mat x_in;
  Vec ln1_mean, ln1_rstd;
  Mat a1;
  Mat q, k, v;
  std::vector<Mat> att;  // per head [S x S]
  Mat head_concat;
  Mat x_mid;
  Vec ln2_mean, ln2_rstd;
  Mat a2;
  Mat ff1;
  Mat ff_act;
};

struct ExampleCache {
  Mat embed;  // spliced embeddings before positional encoding (H_v at modal slots)
  Mat x0;
  std::vector<LayerCache> layers;
  Mat x_final;
  Vec lnf_mean, lnf_rstd;
  Mat hidden;  // final pre-logit activations [S x d]
  Mat logits;  // [S x V]
};

struct ForwardResult {
  std::vector<ExampleCache> examples;
};

ForwardResult forward(const ModelParams& params, const Batch& batch);

struct BackwardResult {
  double loss = 0.0;
  ModelParams grads;
};

// Masked mean negative log-likelihood of targets plus exact reverse-mode
// gradients for every tensor.
BackwardResult loss_and_backward(const ModelParams& params, const Batch& batch,
                                 const ForwardResult& fwd);

double loss_only(const ModelParams& params, const Batch& batch);

// Greedy decoding until <eos> or max_new tokens.
std::vector<int> generate(const ModelParams& params, const std::vector<int>& prompt_ids,
                          const std::optional<Mat>& features, int max_new);

struct Model {
  Vocab vocab;
  ModelParams params;
};

}  // namespace pllm
