#include "attnlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "attnlab/checkpoint.hpp"
#include "attnlab/entity_graph.hpp"
#include "attnlab/errors.hpp"
#include "attnlab/ops.hpp"

namespace attnlab {

namespace {
constexpr std::size_t kNoSentence = static_cast<std::size_t>(-1);
}

Vocabulary Vocabulary::build(const std::vector<LabeledExample>& examples) {
  std::set<std::string> seen;
  for (const auto& ex : examples) seen.insert(ex.example.tokens.begin(), ex.example.tokens.end());
  return from_tokens(std::vector<std::string>(seen.begin(), seen.end()));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  v.tokens_.push_back("<unk>");
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  for (auto& t : tokens) {
    if (t == "<unk>") continue;
    v.index_[t] = v.tokens_.size();
    v.tokens_.push_back(std::move(t));
  }
  return v;
}

std::size_t Vocabulary::lookup(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? unknown : it->second;
}

EncodedExample encode_example(const LabeledExample& labeled, const Vocabulary& vocab,
                              const ExperimentConfig& config) {
  const ContextExample& ex = labeled.example;
  EntityGraph graph = build_graph(ex, config.mention_match);
  EncodedExample out;
  out.id = ex.id;
  out.answer = labeled.answer_node;
  out.density = density(graph);
  out.adjacency = config.adjacency_override == AdjacencyOverride::all_ones
                      ? Matrix::ones(graph.n, graph.n)
                      : std::move(graph.adjacency);
  out.assignment = SpanAssignment::from_example(ex);
  const std::size_t L = ex.tokens.size();
  out.token_ids.reserve(L);
  for (const auto& t : ex.tokens) out.token_ids.push_back(vocab.lookup(t));
  out.query_token.assign(L, false);
  const auto& q = ex.entity_spans.at(labeled.query_node);
  for (std::size_t t = q.start; t < q.end; ++t) out.query_token[t] = true;
  out.sentence_of_token.assign(L, kNoSentence);
  for (std::size_t s = 0; s < ex.sentence_spans.size(); ++s) {
    const auto& span = ex.sentence_spans[s];
    for (std::size_t t = span.start; t < span.end; ++t) out.sentence_of_token[t] = s;
    out.sentence_sizes.push_back(span.end - span.start);
  }
  return out;
}

ParamList ModelParams::parameters(Variant variant) {
  ParamList out{{"encoder.embedding", &embedding},
                {"encoder.query_flag", &query_flag},
                {"encoder.context_mix", &context_mix},
                {"readout.scorer", &scorer}};
  if (variant == Variant::graph_attention || variant == Variant::self_attention) {
    append_params(out, "fusion", fusion.parameters());
  } else if (variant == Variant::transformer) {
    append_params(out, "transformer", transformer.parameters());
  }
  return out;
}

ModelParams ModelParams::init(const ExperimentConfig& cfg, std::size_t vocab_size,
                              SeededRng& rng) {
  const std::size_t d = cfg.hidden_dim;
  ModelParams p;
  SeededRng enc = rng.split("encoder");
  p.embedding = enc.normal_matrix(vocab_size, d, cfg.embedding_scale);
  p.query_flag = enc.normal_matrix(1, d, cfg.embedding_scale);
  p.context_mix = enc.normal_matrix(d, d, std::sqrt(1.0 / static_cast<double>(d)));
  SeededRng readout = rng.split("readout");
  p.scorer = readout.normal_matrix(1, 2 * d, std::sqrt(1.0 / static_cast<double>(2 * d)));
  SeededRng block = rng.split("block");
  if (cfg.variant == Variant::graph_attention || cfg.variant == Variant::self_attention) {
    p.fusion = FusionParams::init(d, d, cfg.hops, block, cfg.leaky_slope);
  } else if (cfg.variant == Variant::transformer) {
    TransformerConfig tc;
    tc.model_dim = d;
    tc.num_heads = cfg.num_heads;
    tc.ffn_dim = cfg.ffn_dim;
    tc.num_layers = cfg.hops;
    tc.norm = cfg.norm;
    p.transformer = TransformerParams::init(tc, block);
  }
  return p;
}

ModelParams ModelParams::zeros_like(const ModelParams& p) {
  ModelParams z;
  z.embedding = Matrix(p.embedding.rows(), p.embedding.cols());
  z.query_flag = Matrix(p.query_flag.rows(), p.query_flag.cols());
  z.context_mix = Matrix(p.context_mix.rows(), p.context_mix.cols());
  z.scorer = Matrix(p.scorer.rows(), p.scorer.cols());
  z.fusion = FusionParams::zeros_like(p.fusion);
  if (!p.transformer.layers.empty()) z.transformer = TransformerParams::zeros_like(p.transformer);
  return z;
}

ForwardPass model_forward(const Model& model, const EncodedExample& ex) {
  const ModelParams& p = model.params;
  const std::size_t L = ex.token_ids.size();
  const std::size_t d = p.embedding.cols();
  const std::size_t S = ex.sentence_sizes.size();
  ForwardPass fp;

  fp.token_inputs = Matrix(L, d);
  fp.sentence_means = Matrix(S, d);
  for (std::size_t t = 0; t < L; ++t) {
    auto x = fp.token_inputs.row(t);
    auto e = p.embedding.row(ex.token_ids[t]);
    std::copy(e.begin(), e.end(), x.begin());
    if (ex.query_token[t]) {
      auto q = p.query_flag.row(0);
      for (std::size_t k = 0; k < d; ++k) x[k] += q[k];
    }
    const std::size_t s = ex.sentence_of_token[t];
    if (s == kNoSentence) continue;
    auto m = fp.sentence_means.row(s);
    const double inv = 1.0 / static_cast<double>(ex.sentence_sizes[s]);
    for (std::size_t k = 0; k < d; ++k) m[k] += x[k] * inv;
  }
  const Matrix context = matmul(fp.sentence_means, p.context_mix);
  fp.encoded = fp.token_inputs;
  for (std::size_t t = 0; t < L; ++t) {
    const std::size_t s = ex.sentence_of_token[t];
    if (s == kNoSentence) continue;
    auto c = fp.encoded.row(t);
    auto src = context.row(s);
    for (std::size_t k = 0; k < d; ++k) c[k] += src[k];
  }

  switch (model.config.variant) {
    case Variant::graph_attention:
    case Variant::self_attention: {
      const AttentionMode mode = model.config.variant == Variant::graph_attention
                                     ? AttentionMode::graph
                                     : AttentionMode::self;
      FusionResult fr =
          fusion_block_forward(fp.encoded, ex.adjacency, ex.assignment, p.fusion, mode);
      fp.reasoned = std::move(fr.output);
      fp.fusion_alpha = std::move(fr.alpha);
      fp.fusion = std::move(fr.cache);
      break;
    }
    case Variant::transformer: {
      TransformerResult tr = transformer_forward(fp.encoded, p.transformer);
      fp.reasoned = std::move(tr.output);
      fp.transformer_traces = std::move(tr.traces);
      fp.transformer = std::move(tr.cache);
      break;
    }
    case Variant::none:
      fp.reasoned = fp.encoded;
      break;
  }

  fp.nodes = tok2graph_meanmax(fp.reasoned, ex.assignment);
  const std::size_t n = fp.nodes.rows();
  fp.logits.assign(n, 0.0);
  auto w = p.scorer.row(0);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = fp.nodes.row(i);
    double s = 0.0;
    for (std::size_t k = 0; k < r.size(); ++k) s += w[k] * r[k];
    fp.logits[i] = s;
  }
  const auto probs = softmax_row(fp.logits);
  fp.loss = -std::log(probs.at(ex.answer));
  fp.prediction = static_cast<std::size_t>(
      std::max_element(fp.logits.begin(), fp.logits.end()) - fp.logits.begin());
  return fp;
}

void model_backward(const Model& model, const EncodedExample& ex, const ForwardPass& fp,
                    ModelParams& g) {
  const ModelParams& p = model.params;
  const std::size_t d = p.embedding.cols();
  const std::size_t n = fp.nodes.rows();

  std::vector<double> d_logits = softmax_row(fp.logits);
  d_logits[ex.answer] -= 1.0;

  Matrix d_nodes(n, 2 * d);
  auto w = p.scorer.row(0);
  auto dw = g.scorer.row(0);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = fp.nodes.row(i);
    auto dr = d_nodes.row(i);
    for (std::size_t k = 0; k < 2 * d; ++k) {
      dw[k] += d_logits[i] * r[k];
      dr[k] = d_logits[i] * w[k];
    }
  }
  Matrix d_reasoned = tok2graph_backward(fp.reasoned, ex.assignment, d_nodes);

  Matrix d_encoded;
  switch (model.config.variant) {
    case Variant::graph_attention:
    case Variant::self_attention: {
      d_encoded = fusion_block_backward_accumulate(*fp.fusion, d_reasoned, g.fusion);
      break;
    }
    case Variant::transformer: {
      d_encoded = transformer_backward_accumulate(*fp.transformer, d_reasoned, g.transformer);
      break;
    }
    case Variant::none:
      d_encoded = std::move(d_reasoned);
      break;
  }

  // C0_t = x_t + mean_s(x) · context_mix
  const std::size_t S = ex.sentence_sizes.size();
  Matrix d_context(S, d);
  for (std::size_t t = 0; t < d_encoded.rows(); ++t) {
    const std::size_t s = ex.sentence_of_token[t];
    if (s == kNoSentence) continue;
    auto dc = d_context.row(s);
    auto src = d_encoded.row(t);
    for (std::size_t k = 0; k < d; ++k) dc[k] += src[k];
  }
  matmul_tn_acc(fp.sentence_means, d_context, g.context_mix);
  const Matrix d_means = matmul_nt(d_context, p.context_mix);

  for (std::size_t t = 0; t < d_encoded.rows(); ++t) {
    auto dx = d_encoded.row(t);  // reused as dL/dx_t
    const std::size_t s = ex.sentence_of_token[t];
    auto de = g.embedding.row(ex.token_ids[t]);
    if (s != kNoSentence) {
      const double inv = 1.0 / static_cast<double>(ex.sentence_sizes[s]);
      auto dm = d_means.row(s);
      for (std::size_t k = 0; k < d; ++k) dx[k] += dm[k] * inv;
    }
    for (std::size_t k = 0; k < d; ++k) de[k] += dx[k];
    if (ex.query_token[t]) {
      auto dq = g.query_flag.row(0);
      for (std::size_t k = 0; k < d; ++k) dq[k] += dx[k];
    }
  }
}

AttentionTrace transformer_trace(const EncodedExample& ex, const ForwardPass& pass) {
  if (pass.transformer_traces.empty()) {
    throw DomainError("attention traces are only recorded for the transformer variant");
  }
  AttentionTrace t;
  t.example_id = ex.id;
  t.layers = pass.transformer_traces;
  t.entity_mask.assign(ex.token_ids.size(), false);
  for (const auto& [start, end] : ex.assignment.spans) {
    for (std::size_t i = start; i < end; ++i) t.entity_mask[i] = true;
  }
  return t;
}

nlohmann::json model_metadata(const Model& model) {
  return {{"experiment", model.config.to_json()}, {"vocabulary", model.vocab.tokens()}};
}

void save_model(const std::filesystem::path& path, Model& model) {
  save_checkpoint(path, model.params.parameters(model.config.variant), model_metadata(model));
}

Model load_model(const std::filesystem::path& path) {
  const nlohmann::json manifest = read_checkpoint_manifest(path);
  Model model;
  try {
    const auto& meta = manifest.at("metadata");
    KeyValueConfig kv;
    for (const auto& [k, v] : meta.at("experiment").items()) {
      if (k == "quantiles") {
        std::string csv;
        for (const auto& q : v) csv += (csv.empty() ? "" : ",") + q.dump();
        kv.set(k, csv);
      } else if (v.is_string()) {
        kv.set(k, v.get<std::string>());
      } else {
        kv.set(k, v.dump());
      }
    }
    model.config = ExperimentConfig::from_config(kv);
    auto tokens = meta.at("vocabulary").get<std::vector<std::string>>();
    model.vocab = Vocabulary::from_tokens(std::move(tokens));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, path.string() + ": bad checkpoint metadata: " + e.what());
  }
  SeededRng rng(model.config.seed);
  model.params = ModelParams::init(model.config, model.vocab.size(), rng);
  checkpoint_from_json(manifest, model.params.parameters(model.config.variant));
  return model;
}

}  // namespace attnlab
