#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "attnlab/matrix.hpp"
#include "attnlab/params.hpp"
#include "attnlab/rng.hpp"

namespace attnlab {

enum class NormPlacement { post, pre };

NormPlacement parse_norm_placement(std::string_view name);

struct TransformerConfig {
  std::size_t model_dim = 300;
  std::size_t num_heads = 4;
  std::size_t ffn_dim = 600;
  std::size_t num_layers = 2;
  NormPlacement norm = NormPlacement::post;
  double ln_eps = 1e-5;

  std::size_t head_dim() const noexcept { return model_dim / num_heads; }
  void validate() const;
};

struct TransformerLayerParams {
  Matrix wq, bq, wk, bk, wv, bv, wo, bo;  // projections are d×d, biases 1×d
  Matrix w1, b1, w2, b2;                  // d×f, 1×f, f×d, 1×d
  Matrix ln1_gain, ln1_bias, ln2_gain, ln2_bias;

  ParamList parameters();
};

struct TransformerParams {
  TransformerConfig config;
  std::vector<TransformerLayerParams> layers;

  ParamList parameters();
  static TransformerParams init(const TransformerConfig& config, SeededRng& rng);
  static TransformerParams zeros_like(const TransformerParams& p);
};

struct LayerNormCache {
  Matrix normalized;          // x̂
  std::vector<double> rstd;   // 1 / sqrt(var + eps) per row
};

struct TransformerLayerCache {
  Matrix input;
  Matrix attn_in;  // input, or LN1(input) for pre-norm
  Matrix q, k, v;
  std::vector<Matrix> attention;  // per head, L×L
  Matrix context;                 // concatenated heads, L×d
  Matrix residual1;               // post-norm: input + attn;  pre-norm: Y1
  LayerNormCache ln1;
  Matrix ffn_in;  // Y1 (post) or LN2(Y1) (pre)
  Matrix hidden_pre;
  Matrix hidden;
  LayerNormCache ln2;
};

struct TransformerCache {
  TransformerConfig config;
  std::vector<bool> padded;  // true where the key position is padding
  std::vector<TransformerLayerCache> layers;
  // Borrowed from the forward call; must outlive the cache and stay unchanged
  // until backward has run.
  const TransformerParams* params = nullptr;
};

struct TransformerResult {
  Matrix output;
  // traces[layer][head] is an L×L row-stochastic matrix over unpadded keys.
  std::vector<std::vector<Matrix>> traces;
  TransformerCache cache;
};

struct TransformerGrads {
  Matrix d_input;
  TransformerParams d_params;
};

// Encoder stack of multi-head scaled dot-product attention, residuals,
// layer norm and a ReLU feed-forward block. `padded[j]` removes key j from
// every softmax.
TransformerResult transformer_forward(const Matrix& x, const TransformerParams& params,
                                      const std::optional<std::vector<bool>>& padded = {});

TransformerGrads transformer_backward(const TransformerCache& cache, const Matrix& d_output);
// Adds parameter gradients into `param_grads` and returns the input gradient.
Matrix transformer_backward_accumulate(const TransformerCache& cache, const Matrix& d_output,
                                       TransformerParams& param_grads);

}  // namespace attnlab
