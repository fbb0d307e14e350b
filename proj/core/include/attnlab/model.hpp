#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "attnlab/attention_trace.hpp"
#include "attnlab/config.hpp"
#include "attnlab/fusion.hpp"
#include "attnlab/matrix.hpp"
#include "attnlab/params.hpp"
#include "attnlab/synthetic.hpp"
#include "attnlab/transformer.hpp"

namespace attnlab {

// Sorted token list; id 0 is reserved for unknown tokens.
class Vocabulary {
 public:
  static constexpr std::size_t unknown = 0;

  static Vocabulary build(const std::vector<LabeledExample>& examples);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const noexcept { return tokens_.size(); }
  std::size_t lookup(const std::string& token) const;
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t> index_;
};

// Everything the model needs from one labeled example, precomputed once.
struct EncodedExample {
  std::string id;
  std::vector<std::size_t> token_ids;
  std::vector<bool> query_token;
  std::vector<std::size_t> sentence_of_token;  // npos outside every sentence
  std::vector<std::size_t> sentence_sizes;
  SpanAssignment assignment;
  Matrix adjacency;
  double density = 0.0;  // of the rule-built graph, before any override
  std::size_t answer = 0;
};

EncodedExample encode_example(const LabeledExample& example, const Vocabulary& vocab,
                              const ExperimentConfig& config);

// Token encoder (embedding + query marker + sentence context), the reasoning
// block of the chosen variant, and a linear scorer over mean-max node states.
struct ModelParams {
  Matrix embedding;    // V × d
  Matrix query_flag;   // 1 × d, added to tokens of the query mention
  Matrix context_mix;  // d × d, maps the sentence mean into each token
  Matrix scorer;       // 1 × 2d
  FusionParams fusion;
  TransformerParams transformer;

  ParamList parameters(Variant variant);
  static ModelParams init(const ExperimentConfig& config, std::size_t vocab_size, SeededRng& rng);
  static ModelParams zeros_like(const ModelParams& p);
};

struct Model {
  ExperimentConfig config;
  Vocabulary vocab;
  ModelParams params;
};

struct ForwardPass {
  std::vector<double> logits;  // one per entity node
  double loss = 0.0;
  std::size_t prediction = 0;

  // Intermediates for backward.
  Matrix token_inputs;  // x before sentence context
  Matrix sentence_means;
  Matrix encoded;  // C0
  Matrix reasoned;  // C_T
  Matrix nodes;
  std::optional<FusionCache> fusion;
  std::optional<TransformerCache> transformer;
  std::vector<Matrix> fusion_alpha;
  std::vector<std::vector<Matrix>> transformer_traces;
};

ForwardPass model_forward(const Model& model, const EncodedExample& example);

// Adds the gradient of the cross-entropy loss to `grads`.
void model_backward(const Model& model, const EncodedExample& example, const ForwardPass& pass,
                    ModelParams& grads);

// Token-level attention trace of the transformer variant; DomainError otherwise.
AttentionTrace transformer_trace(const EncodedExample& example, const ForwardPass& pass);

nlohmann::json model_metadata(const Model& model);
void save_model(const std::filesystem::path& path, Model& model);
Model load_model(const std::filesystem::path& path);

}  // namespace attnlab
