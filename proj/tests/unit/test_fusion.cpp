#include <gtest/gtest.h>

#include <random>

#include "attnlab/errors.hpp"
#include "attnlab/fusion.hpp"
#include "attnlab/gradcheck.hpp"
#include "attnlab/ops.hpp"
#include "attnlab/rng.hpp"
#include "oracles.hpp"

using namespace attnlab;

namespace {

using Spans = std::vector<std::pair<std::size_t, std::size_t>>;

double weighted_sum(const Matrix& out, const Matrix& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out.values()[i] * r.values()[i];
  return s;
}

}  // namespace

TEST(Tok2Graph, Examples) {
  const Matrix c = Matrix::from_rows({{1, 3}, {2, 2}, {-1, 4}});
  const auto single = tok2graph_meanmax(c, SpanAssignment::from_spans(3, {{2, 3}}));
  EXPECT_EQ(single, Matrix::from_rows({{-1, 4, -1, 4}}));
  const auto pair = tok2graph_meanmax(c, SpanAssignment::from_spans(3, {{0, 2}}));
  EXPECT_EQ(pair, Matrix::from_rows({{1.5, 2.5, 2, 3}}));
}

TEST(Tok2Graph, WidthMaxAboveMeanAndOracle) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SeededRng rng(seed);
    const std::size_t L = 10, d = 1 + seed % 5;
    const Matrix c = rng.normal_matrix(L, d, 1.0);
    Spans spans;
    for (std::size_t e = 0; e < 4; ++e) {
      const std::size_t s = rng.below(L);
      spans.emplace_back(s, s + 1 + rng.below(L - s));
    }
    const Matrix nodes = tok2graph_meanmax(c, SpanAssignment::from_spans(L, spans));
    ASSERT_EQ(nodes.cols(), 2 * d);
    EXPECT_LE(max_abs_diff(nodes, oracle::meanmax(c, spans)), 1e-15);
    for (std::size_t e = 0; e < 4; ++e) {
      for (std::size_t k = 0; k < d; ++k) EXPECT_GE(nodes(e, d + k), nodes(e, k) - 1e-15);
    }
  }
}

TEST(Tok2Graph, InvariantToRowOrderInsideSpan) {
  const Matrix c = Matrix::from_rows({{1, 3}, {2, 2}, {-1, 4}, {0.25, -7}});
  const Matrix swapped = Matrix::from_rows({{1, 3}, {0.25, -7}, {-1, 4}, {2, 2}});
  const auto a = SpanAssignment::from_spans(4, {{1, 4}});
  EXPECT_LE(max_abs_diff(tok2graph_meanmax(c, a), tok2graph_meanmax(swapped, a)), 1e-15);
}

TEST(Tok2Graph, Errors) {
  EXPECT_THROW(SpanAssignment::from_spans(3, {{1, 1}}), ValidationError);
  EXPECT_THROW(SpanAssignment::from_spans(3, {{2, 4}}), ValidationError);
  EXPECT_THROW(tok2graph_meanmax(Matrix(2, 2), SpanAssignment::from_spans(3, {{0, 1}})), ShapeError);
}

TEST(Graph2Doc, ZeroNodesAndIdentityMix) {
  const Matrix c = Matrix::from_rows({{1, -2}, {-3, 4}, {5, 0.5}});
  Matrix mix(2 + 3, 2);
  mix(0, 0) = mix(1, 1) = 1.0;
  const auto a = SpanAssignment::from_spans(3, {{0, 2}, {1, 3}});
  const auto r = graph2doc(c, Matrix(2, 3), a, mix);
  EXPECT_EQ(r.output, Matrix::from_rows({{1, 0}, {0, 4}, {5, 0.5}}));
}

TEST(Graph2Doc, SummaryIsMeanOfCoveringNodes) {
  const Matrix c(4, 1);
  const Matrix nodes = Matrix::from_rows({{2, 4}, {6, -8}});
  const auto a = SpanAssignment::from_spans(4, {{0, 2}, {1, 3}});
  // mix passes the summary through unchanged; ReLU clips negatives.
  Matrix mix(3, 2);
  mix(1, 0) = mix(2, 1) = 1.0;
  const auto r = graph2doc(c, nodes, a, mix);
  EXPECT_EQ(r.output, Matrix::from_rows({{2, 4}, {4, 0}, {6, 0}, {0, 0}}));
  // The joined input carries the raw summary before the mix.
  EXPECT_EQ(r.cache.joined(1, 2), -2.0);
}

TEST(Graph2Doc, MatchesLoopOracle) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SeededRng rng(100 + seed);
    const std::size_t L = 9, d = 3, w = 4;
    Spans spans{{0, 3}, {2, 5}, {4, 5}, {7, 9}};
    const Matrix c = rng.normal_matrix(L, d, 1.0), nodes = rng.normal_matrix(4, w, 1.0);
    const Matrix mix = rng.normal_matrix(d + w, 5, 1.0);
    const auto r = graph2doc(c, nodes, SpanAssignment::from_spans(L, spans), mix);
    EXPECT_LE(max_abs_diff(r.output, oracle::graph2doc(c, nodes, spans, mix)), 1e-14);
    for (double v : r.output.values()) EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(Graph2Doc, NonEntityTokensIgnoreNodes) {
  SeededRng rng(3);
  const Matrix c = rng.normal_matrix(5, 2, 1.0), mix = rng.normal_matrix(6, 2, 1.0);
  const auto a = SpanAssignment::from_spans(5, {{1, 3}});
  const auto r1 = graph2doc(c, rng.normal_matrix(1, 4, 1.0), a, mix);
  const auto r2 = graph2doc(c, rng.normal_matrix(1, 4, 1.0), a, mix);
  for (std::size_t t : {0u, 3u, 4u}) {
    for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(r1.output(t, k), r2.output(t, k));
  }
}

TEST(Graph2Doc, Errors) {
  const auto a = SpanAssignment::from_spans(3, {{0, 1}});
  EXPECT_THROW(graph2doc(Matrix(3, 2), Matrix(2, 4), a, Matrix(6, 2)), ShapeError);
  EXPECT_THROW(graph2doc(Matrix(3, 2), Matrix(1, 4), a, Matrix(5, 2)), ShapeError);
  const auto r = graph2doc(Matrix(3, 2), Matrix(1, 4), a, Matrix(6, 2));
  EXPECT_THROW(graph2doc_backward(r.cache, a, Matrix(2, 2)), StateError);
}

TEST(FusionBlock, OneHopIsManualComposition) {
  SeededRng rng(4);
  const Matrix c = rng.normal_matrix(8, 3, 1.0);
  const auto a = SpanAssignment::from_spans(8, {{0, 2}, {3, 4}, {5, 8}});
  const Matrix adj = Matrix::from_rows({{1, 1, 0}, {1, 1, 1}, {0, 1, 1}});
  const auto p = FusionParams::init(3, 4, 1, rng);
  const auto r = fusion_block_forward(c, adj, a, p, AttentionMode::graph);
  const Matrix nodes = tok2graph_meanmax(c, a);
  const auto attn = graph_attention_forward(nodes, adj, p.hops[0].attention);
  const auto doc = graph2doc(c, attn.output, a, p.hops[0].mix);
  EXPECT_EQ(r.output, doc.output);
  ASSERT_EQ(r.alpha.size(), 1u);
  EXPECT_EQ(r.alpha[0], attn.alpha);
}

TEST(FusionBlock, AllOnesGraphEqualsSelfAttentionBitwise) {
  for (std::size_t hops = 1; hops <= 3; ++hops) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      SeededRng rng(1000 * hops + seed);
      const Matrix c = rng.normal_matrix(10, 4, 1.0);
      const auto a = SpanAssignment::from_spans(10, {{0, 2}, {2, 3}, {4, 7}, {6, 10}});
      const auto p = FusionParams::init(4, 5, hops, rng);
      const auto g = fusion_block_forward(c, Matrix::ones(4, 4), a, p, AttentionMode::graph);
      const auto s = fusion_block_forward(c, Matrix::identity(4), a, p, AttentionMode::self);
      EXPECT_EQ(g.output, s.output);
      for (std::size_t t = 0; t < hops; ++t) EXPECT_EQ(g.alpha[t], s.alpha[t]);
    }
  }
}

TEST(FusionBlock, ZeroHopsRejected) {
  const auto a = SpanAssignment::from_spans(2, {{0, 1}});
  EXPECT_THROW(fusion_block_forward(Matrix(2, 2), Matrix::ones(1, 1), a, FusionParams{},
                                    AttentionMode::graph),
               ValidationError);
  EXPECT_THROW(parse_attention_mode("dense"), UsageError);
}

TEST(FusionBlock, GradientsMatchFiniteDifferences) {
  // 12 tokens, 3 entities, one token shared by two spans.
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 6 && seed < 200; ++seed) {
    SeededRng rng(2000 + seed);
    Matrix c = rng.normal_matrix(12, 3, 1.0);
    const auto a = SpanAssignment::from_spans(12, {{0, 3}, {2, 6}, {8, 11}});
    const Matrix adj = Matrix::from_rows({{1, 1, 0}, {1, 1, 1}, {0, 1, 1}});
    const auto mode = seed % 2 == 0 ? AttentionMode::graph : AttentionMode::self;
    auto p = FusionParams::init(3, 4, 2, rng);
    const Matrix weights = rng.normal_matrix(12, 3, 1.0);
    const auto r = fusion_block_forward(c, adj, a, p, mode);
    bool kink = false;
    for (const auto& hop : r.cache.hops) {
      for (double v : hop.doc.pre_relu.values()) kink = kink || std::abs(v) < 1e-4;
      for (double v : hop.attention.pre_relu.values()) kink = kink || std::abs(v) < 1e-4;
      for (std::size_t i = 0; i < hop.attention.logits.rows(); ++i) {
        for (std::size_t j = 0; j < hop.attention.logits.cols(); ++j) {
          if (hop.attention.adjacency(i, j) != 0.0) {
            kink = kink || std::abs(hop.attention.logits(i, j)) < 1e-4;
          }
        }
      }
    }
    if (kink) continue;
    ++checked;
    auto g = fusion_block_backward(r.cache, weights);
    const auto loss = [&] { return weighted_sum(fusion_block_forward(c, adj, a, p, mode).output, weights); };
    auto params = p.parameters();
    auto grads = g.d_params.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto res = check_tensor_gradient(params[i].name, loss, *params[i].value,
                                             *grads[i].value, 1e-6, 1e-3);
      EXPECT_LE(res.relative_error, 1e-4) << params[i].name;
    }
    EXPECT_LE(check_tensor_gradient("tokens", loss, c, g.d_tokens, 1e-6, 1e-3).relative_error, 1e-4);
  }
  EXPECT_EQ(checked, 6);
}
