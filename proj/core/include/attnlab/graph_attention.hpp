#pragma once

#include "attnlab/matrix.hpp"
#include "attnlab/params.hpp"
#include "attnlab/rng.hpp"

namespace attnlab {

// Single-head graph attention over projected node states g = h · proj:
//   β_ij = LeakyReLU(attn_vec · [g_i, g_j])      for j ∈ N(i)
//   α_ij = softmax over N(i) of β_i·             (exact zero outside N(i))
//   h'_i = ReLU(Σ_j α_ij g_j)
struct GraphAttentionParams {
  Matrix proj;      // d_in × d_out; identity recovers the unprojected layer
  Matrix attn_vec;  // 1 × 2·d_out, source half then neighbour half
  double leaky_slope = 0.2;

  std::size_t in_dim() const noexcept { return proj.rows(); }
  std::size_t out_dim() const noexcept { return proj.cols(); }

  // Throws ValidationError on inconsistent sizes or slope outside (0, 1).
  void validate() const;
  ParamList parameters();

  static GraphAttentionParams init(std::size_t d_in, std::size_t d_out, SeededRng& rng,
                                   double leaky_slope = 0.2);
  static GraphAttentionParams zeros_like(const GraphAttentionParams& p);
};

struct GraphAttentionCache {
  Matrix input;      // N × d_in
  Matrix projected;  // N × d_out
  Matrix logits;     // N × N pre-LeakyReLU scores, valid on the mask
  Matrix alpha;      // N × N attention, zero off the mask
  Matrix pre_relu;   // N × d_out
  Matrix adjacency;
  // Borrowed from the forward call; must outlive the cache and stay unchanged
  // until backward has run.
  const GraphAttentionParams* params = nullptr;
};

struct GraphAttentionResult {
  Matrix output;  // N × d_out
  Matrix alpha;
  GraphAttentionCache cache;
};

struct GraphAttentionGrads {
  Matrix d_input;
  GraphAttentionParams d_params;
};

// `adjacency` must pass validate_adjacency.
GraphAttentionResult graph_attention_forward(const Matrix& nodes, const Matrix& adjacency,
                                             const GraphAttentionParams& params);

// graph_attention_forward with the all-ones adjacency.
GraphAttentionResult self_attention_forward(const Matrix& nodes,
                                            const GraphAttentionParams& params);

// Fully connected additive attention written directly, with no mask handling.
// Independent of graph_attention_forward; used to cross-check the degenerate case.
Matrix dense_additive_attention(const Matrix& nodes, const GraphAttentionParams& params);

GraphAttentionGrads graph_attention_backward(const GraphAttentionCache& cache,
                                             const Matrix& d_output);
// Adds parameter gradients into `grads` and returns the input gradient.
Matrix graph_attention_backward_accumulate(const GraphAttentionCache& cache,
                                           const Matrix& d_output, GraphAttentionParams& grads);

}  // namespace attnlab
