#include "attnlab/fusion.hpp"

#include <cmath>
#include <string>

#include "attnlab/errors.hpp"
#include "attnlab/ops.hpp"

namespace attnlab {

SpanAssignment SpanAssignment::from_spans(std::size_t token_count,
                                          std::vector<std::pair<std::size_t, std::size_t>> spans) {
  SpanAssignment a;
  a.token_count = token_count;
  a.spans = std::move(spans);
  a.token_entities.assign(token_count, {});
  for (std::size_t e = 0; e < a.spans.size(); ++e) {
    const auto [start, end] = a.spans[e];
    if (end <= start) throw ValidationError("entity " + std::to_string(e) + " has an empty span");
    if (end > token_count) {
      throw ValidationError("entity " + std::to_string(e) + " span ends past token " +
                            std::to_string(token_count));
    }
    for (std::size_t t = start; t < end; ++t) a.token_entities[t].push_back(e);
  }
  return a;
}

SpanAssignment SpanAssignment::from_example(const ContextExample& example) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  spans.reserve(example.entity_spans.size());
  for (const auto& e : example.entity_spans) spans.emplace_back(e.start, e.end);
  return from_spans(example.tokens.size(), std::move(spans));
}

namespace {

void require_tokens(const Matrix& tokens, const SpanAssignment& a, const char* what) {
  if (tokens.rows() != a.token_count) {
    throw ShapeError(std::string(what) + ": " + std::to_string(tokens.rows()) +
                     " token rows, assignment expects " + std::to_string(a.token_count));
  }
}

}  // namespace

Matrix tok2graph_meanmax(const Matrix& tokens, const SpanAssignment& a) {
  require_tokens(tokens, a, "tok2graph");
  const std::size_t d = tokens.cols();
  Matrix nodes(a.node_count(), 2 * d);
  for (std::size_t e = 0; e < a.node_count(); ++e) {
    const auto [start, end] = a.spans[e];
    auto out = nodes.row(e);
    auto first = tokens.row(start);
    for (std::size_t k = 0; k < d; ++k) out[d + k] = first[k];
    for (std::size_t t = start; t < end; ++t) {
      auto r = tokens.row(t);
      for (std::size_t k = 0; k < d; ++k) {
        out[k] += r[k];
        if (r[k] > out[d + k]) out[d + k] = r[k];
      }
    }
    const double inv = 1.0 / static_cast<double>(end - start);
    for (std::size_t k = 0; k < d; ++k) out[k] *= inv;
  }
  return nodes;
}

Matrix tok2graph_backward(const Matrix& tokens, const SpanAssignment& a, const Matrix& d_nodes) {
  require_tokens(tokens, a, "tok2graph backward");
  const std::size_t d = tokens.cols();
  if (d_nodes.rows() != a.node_count() || d_nodes.cols() != 2 * d) {
    throw StateError("tok2graph backward: cotangent " + d_nodes.shape_string());
  }
  Matrix d_tokens(tokens.rows(), d);
  for (std::size_t e = 0; e < a.node_count(); ++e) {
    const auto [start, end] = a.spans[e];
    auto g = d_nodes.row(e);
    const double inv = 1.0 / static_cast<double>(end - start);
    for (std::size_t t = start; t < end; ++t) {
      auto dt = d_tokens.row(t);
      for (std::size_t k = 0; k < d; ++k) dt[k] += g[k] * inv;
    }
    for (std::size_t k = 0; k < d; ++k) {
      std::size_t best = start;
      for (std::size_t t = start + 1; t < end; ++t) {
        if (tokens(t, k) > tokens(best, k)) best = t;
      }
      d_tokens(best, k) += g[d + k];
    }
  }
  return d_tokens;
}

Graph2DocResult graph2doc(const Matrix& tokens, const Matrix& nodes, const SpanAssignment& a,
                          const Matrix& mix) {
  require_tokens(tokens, a, "graph2doc");
  if (nodes.rows() != a.node_count()) {
    throw ShapeError("graph2doc: " + std::to_string(nodes.rows()) + " node rows for " +
                     std::to_string(a.node_count()) + " entities");
  }
  const std::size_t d = tokens.cols(), w = nodes.cols();
  if (mix.rows() != d + w) {
    throw ShapeError("graph2doc: mix has " + std::to_string(mix.rows()) + " rows, expected " +
                     std::to_string(d + w));
  }
  Graph2DocResult res;
  Graph2DocCache& c = res.cache;
  c.token_dim = d;
  c.mix = &mix;
  c.joined = Matrix(tokens.rows(), d + w);
  for (std::size_t t = 0; t < tokens.rows(); ++t) {
    auto out = c.joined.row(t);
    auto src = tokens.row(t);
    std::copy(src.begin(), src.end(), out.begin());
    const auto& owners = a.token_entities[t];
    if (owners.empty()) continue;
    const double inv = 1.0 / static_cast<double>(owners.size());
    for (std::size_t e : owners) {
      auto nr = nodes.row(e);
      for (std::size_t k = 0; k < w; ++k) out[d + k] += nr[k];
    }
    for (std::size_t k = 0; k < w; ++k) out[d + k] *= inv;
  }
  c.pre_relu = matmul(c.joined, mix);
  res.output = c.pre_relu;
  for (double& v : res.output.values()) v = relu(v);
  return res;
}

Graph2DocGrads graph2doc_backward(const Graph2DocCache& c, const SpanAssignment& a,
                                  const Matrix& d_output) {
  if (c.mix == nullptr) throw StateError("graph2doc backward: cache has no mix");
  Matrix d_mix(c.mix->rows(), c.mix->cols());
  Graph2DocGrads g = graph2doc_backward_accumulate(c, a, d_output, d_mix);
  g.d_mix = std::move(d_mix);
  return g;
}

Graph2DocGrads graph2doc_backward_accumulate(const Graph2DocCache& c, const SpanAssignment& a,
                                             const Matrix& d_output, Matrix& d_mix) {
  if (c.mix == nullptr) throw StateError("graph2doc backward: cache has no mix");
  if (d_output.rows() != c.pre_relu.rows() || d_output.cols() != c.pre_relu.cols()) {
    throw StateError("graph2doc backward: cotangent " + d_output.shape_string() +
                     " vs output " + c.pre_relu.shape_string());
  }
  Matrix d_pre = d_output;
  {
    auto dp = d_pre.values();
    auto pre = c.pre_relu.values();
    for (std::size_t i = 0; i < dp.size(); ++i) {
      if (!(pre[i] > 0.0)) dp[i] = 0.0;
    }
  }
  Graph2DocGrads g;
  matmul_tn_acc(c.joined, d_pre, d_mix);
  Matrix d_joined = matmul_nt(d_pre, *c.mix);
  const std::size_t d = c.token_dim, w = c.joined.cols() - d;
  g.d_tokens = slice_cols(d_joined, 0, d);
  g.d_nodes = Matrix(a.node_count(), w);
  for (std::size_t t = 0; t < a.token_count; ++t) {
    const auto& owners = a.token_entities[t];
    if (owners.empty()) continue;
    const double inv = 1.0 / static_cast<double>(owners.size());
    auto src = d_joined.row(t).subspan(d, w);
    for (std::size_t e : owners) {
      auto dn = g.d_nodes.row(e);
      for (std::size_t k = 0; k < w; ++k) dn[k] += src[k] * inv;
    }
  }
  return g;
}

AttentionMode parse_attention_mode(std::string_view name) {
  if (name == "graph") return AttentionMode::graph;
  if (name == "self") return AttentionMode::self;
  throw UsageError("unknown attention mode '" + std::string(name) + "'");
}

ParamList FusionHopParams::parameters() {
  ParamList out;
  append_params(out, "attention", attention.parameters());
  out.push_back({"mix", &mix});
  return out;
}

ParamList FusionParams::parameters() {
  ParamList out;
  for (std::size_t t = 0; t < hops.size(); ++t) {
    append_params(out, "hop" + std::to_string(t), hops[t].parameters());
  }
  return out;
}

FusionParams FusionParams::init(std::size_t token_dim, std::size_t node_dim,
                                std::size_t hop_count, SeededRng& rng, double leaky_slope) {
  FusionParams p;
  for (std::size_t t = 0; t < hop_count; ++t) {
    FusionHopParams hop;
    hop.attention = GraphAttentionParams::init(2 * token_dim, node_dim, rng, leaky_slope);
    hop.mix = rng.normal_matrix(token_dim + node_dim, token_dim,
                                std::sqrt(2.0 / static_cast<double>(token_dim + node_dim)));
    p.hops.push_back(std::move(hop));
  }
  return p;
}

FusionParams FusionParams::zeros_like(const FusionParams& p) {
  FusionParams z;
  for (const auto& hop : p.hops) {
    z.hops.push_back({GraphAttentionParams::zeros_like(hop.attention),
                      Matrix(hop.mix.rows(), hop.mix.cols())});
  }
  return z;
}

FusionResult fusion_block_forward(const Matrix& tokens, const Matrix& adjacency,
                                  const SpanAssignment& assignment, const FusionParams& params,
                                  AttentionMode mode) {
  if (params.hop_count() < 1) throw ValidationError("fusion block needs at least one hop");
  require_tokens(tokens, assignment, "fusion block");
  FusionResult res;
  res.cache.assignment = assignment;
  Matrix current = tokens;
  for (const auto& hop : params.hops) {
    FusionHopCache hc;
    hc.tokens_in = current;
    Matrix nodes = tok2graph_meanmax(current, assignment);
    GraphAttentionResult attn = mode == AttentionMode::graph
                                    ? graph_attention_forward(nodes, adjacency, hop.attention)
                                    : self_attention_forward(nodes, hop.attention);
    Graph2DocResult doc = graph2doc(current, attn.output, assignment, hop.mix);
    res.alpha.push_back(std::move(attn.alpha));
    hc.attention = std::move(attn.cache);
    hc.doc = std::move(doc.cache);
    current = std::move(doc.output);
    res.cache.hops.push_back(std::move(hc));
  }
  res.output = std::move(current);
  return res;
}

FusionGrads fusion_block_backward(const FusionCache& cache, const Matrix& d_output) {
  if (cache.hops.empty()) throw StateError("fusion backward: empty cache");
  FusionGrads g;
  for (const auto& hc : cache.hops) {
    if (hc.attention.params == nullptr || hc.doc.mix == nullptr) {
      throw StateError("fusion backward: cache has no parameters");
    }
    g.d_params.hops.push_back({GraphAttentionParams::zeros_like(*hc.attention.params),
                               Matrix(hc.doc.mix->rows(), hc.doc.mix->cols())});
  }
  g.d_tokens = fusion_block_backward_accumulate(cache, d_output, g.d_params);
  return g;
}

Matrix fusion_block_backward_accumulate(const FusionCache& cache, const Matrix& d_output,
                                        FusionParams& grads) {
  if (cache.hops.empty()) throw StateError("fusion backward: empty cache");
  if (grads.hop_count() != cache.hops.size()) {
    throw StateError("fusion backward: gradient hop count does not match the cache");
  }
  Matrix d_current = d_output;
  for (std::size_t t = cache.hops.size(); t-- > 0;) {
    const FusionHopCache& hc = cache.hops[t];
    Graph2DocGrads dg =
        graph2doc_backward_accumulate(hc.doc, cache.assignment, d_current, grads.hops[t].mix);
    const Matrix d_nodes =
        graph_attention_backward_accumulate(hc.attention, dg.d_nodes, grads.hops[t].attention);
    Matrix d_tokens = tok2graph_backward(hc.tokens_in, cache.assignment, d_nodes);
    d_tokens += dg.d_tokens;
    d_current = std::move(d_tokens);
  }
  return d_current;
}

}  // namespace attnlab
