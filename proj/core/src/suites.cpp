#include "attnlab/suites.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "attnlab/errors.hpp"
#include "attnlab/fusion.hpp"
#include "attnlab/gradcheck.hpp"
#include "attnlab/graph_attention.hpp"
#include "attnlab/ops.hpp"
#include "attnlab/rng.hpp"
#include "attnlab/transformer.hpp"

namespace attnlab {

namespace {

std::size_t draw(SeededRng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

Matrix random_adjacency(std::size_t n, double p, SeededRng& rng) {
  Matrix a = Matrix::identity(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (rng.bernoulli(p)) a(i, j) = a(j, i) = 1.0;
    }
  }
  return a;
}

// Random spans over [0, L) that may overlap; every node has at least one token.
SpanAssignment random_spans(std::size_t tokens, std::size_t nodes, SeededRng& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (std::size_t i = 0; i < nodes; ++i) {
    const std::size_t start = rng.below(tokens);
    const std::size_t len = draw(rng, 1, std::min<std::size_t>(3, tokens - start));
    spans.emplace_back(start, start + len);
  }
  return SpanAssignment::from_spans(tokens, std::move(spans));
}

double sum_product(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "sum_product");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
  return s;
}

bool near_kink(const Matrix& m, double margin) {
  return std::any_of(m.values().begin(), m.values().end(),
                     [&](double x) { return std::abs(x) < margin; });
}

bool near_kink_masked(const Matrix& logits, const Matrix& mask, double margin) {
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (mask.values()[i] != 0.0 && std::abs(logits.values()[i]) < margin) return true;
  }
  return false;
}

// True when two tokens of a span are within margin in some column. Pairs of
// exact zeros are ReLU-clamped outputs that stay clamped under perturbation.
bool near_max_tie(const Matrix& tokens, const SpanAssignment& a, double margin) {
  for (const auto& [start, end] : a.spans) {
    for (std::size_t k = 0; k < tokens.cols(); ++k) {
      for (std::size_t s = start; s < end; ++s) {
        for (std::size_t t = s + 1; t < end; ++t) {
          const double a = tokens(s, k), b = tokens(t, k);
          if (a == 0.0 && b == 0.0) continue;
          if (std::abs(a - b) < margin) return true;
        }
      }
    }
  }
  return false;
}

struct Tensor {
  std::string name;
  Matrix* value;
  const Matrix* analytic;
};

void check_tensors(ComponentGradients& out, const std::vector<Tensor>& tensors,
                   const std::function<double()>& loss, const GradientOptions& o) {
  for (const auto& t : tensors) {
    const TensorCheck c =
        check_tensor_gradient(t.name, loss, *t.value, *t.analytic, o.eps, o.norm_floor);
    if (!(c.relative_error <= out.max_relative_error)) {
      out.max_relative_error = c.relative_error;
      out.worst_tensor = c.name;
    }
  }
}

ComponentGradients graph_attention_gradients(const GradientOptions& o, SeededRng rng) {
  ComponentGradients out;
  out.component = "graph_attention";
  while (out.instances < o.instances) {
    const std::size_t n = draw(rng, 2, 8), din = draw(rng, 2, 6), dout = draw(rng, 2, 6);
    Matrix h = rng.normal_matrix(n, din, 1.0);
    Matrix adj = random_adjacency(n, 0.5, rng);
    GraphAttentionParams p = GraphAttentionParams::init(din, dout, rng);
    Matrix r = rng.normal_matrix(n, dout, 1.0);
    const auto fwd = graph_attention_forward(h, adj, p);
    if (near_kink(fwd.cache.pre_relu, o.kink_margin) ||
        near_kink_masked(fwd.cache.logits, adj, o.kink_margin)) {
      ++out.redrawn;
      continue;
    }
    const auto g = graph_attention_backward(fwd.cache, r);
    auto loss = [&] { return sum_product(graph_attention_forward(h, adj, p).output, r); };
    check_tensors(out,
                  {{"input", &h, &g.d_input},
                   {"proj", &p.proj, &g.d_params.proj},
                   {"attn_vec", &p.attn_vec, &g.d_params.attn_vec}},
                  loss, o);
    ++out.instances;
  }
  return out;
}

ComponentGradients graph2doc_gradients(const GradientOptions& o, SeededRng rng) {
  ComponentGradients out;
  out.component = "graph2doc";
  while (out.instances < o.instances) {
    const std::size_t L = draw(rng, 3, 10), n = draw(rng, 1, 5);
    const std::size_t d = draw(rng, 2, 5), w = draw(rng, 2, 6);
    const SpanAssignment a = random_spans(L, n, rng);
    Matrix tokens = rng.normal_matrix(L, d, 1.0);
    Matrix nodes = rng.normal_matrix(n, w, 1.0);
    Matrix mix = rng.normal_matrix(d + w, d, 0.5);
    Matrix r = rng.normal_matrix(L, d, 1.0);
    const auto fwd = graph2doc(tokens, nodes, a, mix);
    if (near_kink(fwd.cache.pre_relu, o.kink_margin)) {
      ++out.redrawn;
      continue;
    }
    const auto g = graph2doc_backward(fwd.cache, a, r);
    auto loss = [&] { return sum_product(graph2doc(tokens, nodes, a, mix).output, r); };
    check_tensors(out,
                  {{"tokens", &tokens, &g.d_tokens},
                   {"nodes", &nodes, &g.d_nodes},
                   {"mix", &mix, &g.d_mix}},
                  loss, o);
    ++out.instances;
  }
  return out;
}

ComponentGradients fusion_gradients(const GradientOptions& o, SeededRng rng) {
  ComponentGradients out;
  out.component = "fusion_block";
  while (out.instances < o.instances) {
    const std::size_t L = draw(rng, 3, 8), n = draw(rng, 2, 4);
    const std::size_t d = draw(rng, 2, 4), w = draw(rng, 2, 4);
    const AttentionMode mode = out.instances % 2 == 0 ? AttentionMode::graph : AttentionMode::self;
    const SpanAssignment a = random_spans(L, n, rng);
    Matrix adj = random_adjacency(n, 0.5, rng);
    Matrix tokens = rng.normal_matrix(L, d, 1.0);
    FusionParams p = FusionParams::init(d, w, 2, rng);
    Matrix r = rng.normal_matrix(L, d, 1.0);
    const auto fwd = fusion_block_forward(tokens, adj, a, p, mode);
    bool kink = false;
    for (const auto& hop : fwd.cache.hops) {
      kink = kink || near_kink(hop.attention.pre_relu, o.kink_margin) ||
             near_kink_masked(hop.attention.logits, hop.attention.adjacency, o.kink_margin) ||
             near_kink(hop.doc.pre_relu, o.kink_margin) ||
             near_max_tie(hop.tokens_in, a, o.kink_margin);
    }
    if (kink) {
      ++out.redrawn;
      continue;
    }
    const auto g = fusion_block_backward(fwd.cache, r);
    auto loss = [&] {
      return sum_product(fusion_block_forward(tokens, adj, a, p, mode).output, r);
    };
    FusionParams grads = g.d_params;
    ParamList values = p.parameters();
    ParamList analytic = grads.parameters();
    std::vector<Tensor> tensors{{"tokens", &tokens, &g.d_tokens}};
    for (std::size_t i = 0; i < values.size(); ++i) {
      tensors.push_back({values[i].name, values[i].value, analytic[i].value});
    }
    check_tensors(out, tensors, loss, o);
    ++out.instances;
  }
  return out;
}

ComponentGradients transformer_gradients(const GradientOptions& o, SeededRng rng) {
  ComponentGradients out;
  out.component = "transformer";
  while (out.instances < o.instances) {
    TransformerConfig cfg;
    cfg.model_dim = 8;
    cfg.num_heads = 2;
    cfg.ffn_dim = 12;
    cfg.num_layers = 2;
    cfg.norm = out.instances % 2 == 0 ? NormPlacement::post : NormPlacement::pre;
    const std::size_t L = draw(rng, 2, 6);
    std::optional<std::vector<bool>> padded;
    if (out.instances % 3 == 2) {
      padded = std::vector<bool>(L, false);
      (*padded)[L - 1] = true;
    }
    TransformerParams p = TransformerParams::init(cfg, rng);
    for (auto& layer : p.layers) {
      // Non-trivial gains and biases so their gradients are exercised.
      for (Matrix* m : {&layer.ln1_gain, &layer.ln2_gain}) *m += rng.normal_matrix(1, 8, 0.2);
      for (Matrix* m : {&layer.ln1_bias, &layer.ln2_bias, &layer.bq, &layer.bk, &layer.bv,
                        &layer.bo, &layer.b2}) {
        *m = rng.normal_matrix(1, 8, 0.1);
      }
      layer.b1 = rng.normal_matrix(1, 12, 0.1);
    }
    Matrix x = rng.normal_matrix(L, 8, 1.0);
    Matrix r = rng.normal_matrix(L, 8, 1.0);
    const auto fwd = transformer_forward(x, p, padded);
    bool kink = false;
    for (const auto& layer : fwd.cache.layers) {
      kink = kink || near_kink(layer.hidden_pre, o.kink_margin);
    }
    if (kink) {
      ++out.redrawn;
      continue;
    }
    const auto g = transformer_backward(fwd.cache, r);
    auto loss = [&] { return sum_product(transformer_forward(x, p, padded).output, r); };
    TransformerParams grads = g.d_params;
    ParamList values = p.parameters();
    ParamList analytic = grads.parameters();
    std::vector<Tensor> tensors{{"input", &x, &g.d_input}};
    for (std::size_t i = 0; i < values.size(); ++i) {
      tensors.push_back({values[i].name, values[i].value, analytic[i].value});
    }
    check_tensors(out, tensors, loss, o);
    ++out.instances;
  }
  return out;
}

}  // namespace

EquivalenceReport run_equivalence_suite(const EquivalenceOptions& o) {
  if (o.instances == 0 || o.max_nodes == 0 || o.max_dim == 0) {
    throw ValidationError("equivalence suite needs at least one instance, node and dimension");
  }
  EquivalenceReport rep;
  rep.tolerance = o.tolerance;
  SeededRng root(o.seed);
  for (std::size_t i = 0; i < o.instances; ++i) {
    SeededRng rng = root.split(static_cast<std::uint64_t>(i));
    const std::size_t n = draw(rng, 1, o.max_nodes);
    const std::size_t din = draw(rng, 1, o.max_dim);
    // Every fourth instance uses the unprojected form (proj = identity).
    const bool literal = i % 4 == 0;
    const std::size_t dout = literal ? din : draw(rng, 1, o.max_dim);
    GraphAttentionParams p = GraphAttentionParams::init(din, dout, rng);
    if (literal) p.proj = Matrix::identity(din);
    const Matrix h = rng.normal_matrix(n, din, 1.0);

    const Matrix self = self_attention_forward(h, p).output;
    const Matrix full = graph_attention_forward(h, Matrix::ones(n, n), p).output;
    if (!(self == full)) ++rep.bitwise_mismatches;
    rep.max_independent_deviation =
        std::max(rep.max_independent_deviation, max_abs_diff(self, dense_additive_attention(h, p)));

    if (i % 10 == 0) {
      ++rep.fusion_instances;
      const std::size_t L = n + draw(rng, 0, 8);
      const SpanAssignment a = random_spans(L, n, rng);
      const std::size_t hops = draw(rng, 1, 3);
      const FusionParams fp = FusionParams::init(din, dout, hops, rng);
      const Matrix tokens = rng.normal_matrix(L, din, 1.0);
      const auto s = fusion_block_forward(tokens, Matrix::ones(n, n), a, fp, AttentionMode::self);
      const auto g = fusion_block_forward(tokens, Matrix::ones(n, n), a, fp, AttentionMode::graph);
      if (!(s.output == g.output)) ++rep.fusion_mismatches;
    }
    ++rep.instances;
  }
  return rep;
}

nlohmann::json to_json(const EquivalenceReport& r) {
  return {{"instances", r.instances},
          {"bitwise_mismatches", r.bitwise_mismatches},
          {"fusion_instances", r.fusion_instances},
          {"fusion_mismatches", r.fusion_mismatches},
          {"max_independent_deviation", r.max_independent_deviation},
          {"tolerance", r.tolerance},
          {"passed", r.passed()}};
}

GradientReport run_gradient_suite(const GradientOptions& o) {
  if (o.instances == 0) throw ValidationError("gradient suite needs at least one instance");
  GradientReport rep;
  rep.tolerance = o.tolerance;
  SeededRng root(o.seed);
  rep.components.push_back(graph_attention_gradients(o, root.split("graph_attention")));
  rep.components.push_back(graph2doc_gradients(o, root.split("graph2doc")));
  rep.components.push_back(fusion_gradients(o, root.split("fusion_block")));
  rep.components.push_back(transformer_gradients(o, root.split("transformer")));
  return rep;
}

nlohmann::json to_json(const GradientReport& r) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : r.components) {
    comps.push_back({{"component", c.component},
                     {"instances", c.instances},
                     {"redrawn", c.redrawn},
                     {"max_relative_error", c.max_relative_error},
                     {"worst_tensor", c.worst_tensor}});
  }
  return {{"components", comps}, {"tolerance", r.tolerance}, {"passed", r.passed()}};
}

}  // namespace attnlab
