#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "attnlab/config.hpp"
#include "attnlab/context_example.hpp"
#include "attnlab/entity_graph.hpp"

namespace attnlab {

// A context plus the 2-hop question over it: start from the query node,
// cross the bridge entity's sentence, land on the answer node.
struct LabeledExample {
  ContextExample example;
  std::size_t query_node = 0;
  std::size_t answer_node = 0;

  bool operator==(const LabeledExample&) const = default;
};

// Each context has a query sentence {q, b, dead ends}, a bridge sentence
// {b, a} and distractor sentences whose mentions never reach q. Sentence
// order and in-sentence order are shuffled. `split` picks an independent
// stream ("train", "test", ...) so splits never share draws.
// Throws GenerationError when the entity pool cannot keep mentions unique.
std::vector<LabeledExample> generate_synthetic(const SyntheticTaskConfig& config,
                                               const std::string& split, std::size_t count);

// Empty when the example has the 2-hop property: over the graph with mentions
// of one entity merged, the answer's entity is the only one at shortest
// distance 2 from the query's entity. Otherwise a description of the failure.
std::string two_hop_violation(const LabeledExample& example,
                              MentionMatch match = MentionMatch::normalized);

// JSONL: a ContextExample object with extra keys query_node and answer_node.
nlohmann::json to_json(const LabeledExample& example);
LabeledExample labeled_example_from_json(const nlohmann::json& j);
void write_labeled_jsonl(const std::filesystem::path& path,
                         const std::vector<LabeledExample>& examples);
std::vector<LabeledExample> read_labeled_jsonl(const std::filesystem::path& path);

}  // namespace attnlab
