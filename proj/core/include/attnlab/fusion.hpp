#pragma once

#include <string_view>
#include <utility>
#include <vector>

#include "attnlab/context_example.hpp"
#include "attnlab/graph_attention.hpp"
#include "attnlab/matrix.hpp"
#include "attnlab/params.hpp"

namespace attnlab {

// Which tokens feed which entity node. A token may belong to 0, 1 or many entities.
struct SpanAssignment {
  std::size_t token_count = 0;
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // half-open [start, end)
  std::vector<std::vector<std::size_t>> token_entities;

  std::size_t node_count() const noexcept { return spans.size(); }

  // Throws ValidationError for empty or out-of-range spans.
  static SpanAssignment from_spans(std::size_t token_count,
                                   std::vector<std::pair<std::size_t, std::size_t>> spans);
  static SpanAssignment from_example(const ContextExample& example);
};

// Node i = [mean of its token rows | elementwise max of its token rows], width 2d.
Matrix tok2graph_meanmax(const Matrix& tokens, const SpanAssignment& assignment);
// Gradient w.r.t. `tokens`; max ties route to the first (lowest-index) token.
Matrix tok2graph_backward(const Matrix& tokens, const SpanAssignment& assignment,
                          const Matrix& d_nodes);

struct Graph2DocCache {
  Matrix joined;  // L × (d + w): [token | mean of covering node rows]
  Matrix pre_relu;
  const Matrix* mix = nullptr;  // borrowed, like GraphAttentionCache::params
  std::size_t token_dim = 0;
};

struct Graph2DocResult {
  Matrix output;
  Graph2DocCache cache;
};

struct Graph2DocGrads {
  Matrix d_tokens;
  Matrix d_nodes;
  Matrix d_mix;
};

// out_t = ReLU([C_t | summary_t] · mix), summary_t the mean of the node rows
// whose spans cover t (zero when none do). mix is (d + w) × d.
Graph2DocResult graph2doc(const Matrix& tokens, const Matrix& nodes,
                          const SpanAssignment& assignment, const Matrix& mix);
Graph2DocGrads graph2doc_backward(const Graph2DocCache& cache, const SpanAssignment& assignment,
                                  const Matrix& d_output);
// Adds the mix gradient into `d_mix`; the returned d_mix is left empty.
Graph2DocGrads graph2doc_backward_accumulate(const Graph2DocCache& cache,
                                             const SpanAssignment& assignment,
                                             const Matrix& d_output, Matrix& d_mix);

enum class AttentionMode {
  graph,  // mask by the entity graph adjacency
  self,   // fully connected
};

AttentionMode parse_attention_mode(std::string_view name);

struct FusionHopParams {
  GraphAttentionParams attention;  // 2d → node_dim
  Matrix mix;                      // (d + node_dim) × d

  ParamList parameters();
};

struct FusionParams {
  std::vector<FusionHopParams> hops;

  std::size_t hop_count() const noexcept { return hops.size(); }
  ParamList parameters();

  static FusionParams init(std::size_t token_dim, std::size_t node_dim, std::size_t hop_count,
                           SeededRng& rng, double leaky_slope = 0.2);
  static FusionParams zeros_like(const FusionParams& p);
};

struct FusionHopCache {
  Matrix tokens_in;
  GraphAttentionCache attention;
  Graph2DocCache doc;
};

struct FusionCache {
  SpanAssignment assignment;
  std::vector<FusionHopCache> hops;
};

struct FusionResult {
  Matrix output;              // C_T
  std::vector<Matrix> alpha;  // one attention matrix per hop
  FusionCache cache;
};

struct FusionGrads {
  Matrix d_tokens;
  FusionParams d_params;
};

// For each hop: pool tokens into nodes, attend over the graph (or fully
// connected), project back into tokens. `adjacency` is ignored in self mode.
FusionResult fusion_block_forward(const Matrix& tokens, const Matrix& adjacency,
                                  const SpanAssignment& assignment, const FusionParams& params,
                                  AttentionMode mode);
FusionGrads fusion_block_backward(const FusionCache& cache, const Matrix& d_output);
// Adds parameter gradients into `grads` and returns the token gradient.
Matrix fusion_block_backward_accumulate(const FusionCache& cache, const Matrix& d_output,
                                        FusionParams& grads);

}  // namespace attnlab
