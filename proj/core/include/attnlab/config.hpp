#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "attnlab/entity_graph.hpp"
#include "attnlab/transformer.hpp"

namespace attnlab {

// Flat `key = value` file. '#' starts a comment, values may be double-quoted.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text, const std::string& source = "<config>");
  static KeyValueConfig from_file(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  // "key=value"; throws UsageError when there is no '='.
  void apply_override(std::string_view assignment);

  bool contains(const std::string& key) const { return entries_.count(key) > 0; }
  std::optional<std::string> get(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_count(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // UsageError listing any key not in `allowed`.
  void require_known(const std::set<std::string>& allowed) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

struct SyntheticTaskConfig {
  std::size_t num_examples = 5000;
  std::size_t num_test_examples = 1000;
  std::size_t num_entities_pool = 20;
  // Upper bound on sentences per context; each context draws its count
  // uniformly from [sentences_per_context - sentence_jitter, sentences_per_context].
  std::size_t sentences_per_context = 5;
  std::size_t sentence_jitter = 2;
  std::size_t entities_per_sentence = 2;  // per distractor sentence
  std::size_t distractor_count = 1;       // extra dead-end entities beside the query
  std::size_t fillers_per_sentence = 0;
  std::size_t filler_vocab = 20;
  double collision_rate = 0.25;  // chance a distractor sentence reuses an earlier distractor mention
  std::uint64_t seed = 20201;

  void validate() const;
  static SyntheticTaskConfig from_config(const KeyValueConfig& kv);
  nlohmann::json to_json() const;
};

enum class Variant { graph_attention, self_attention, transformer, none };

Variant parse_variant(std::string_view name);
std::string to_string(Variant v);

enum class AdjacencyOverride { none, all_ones };

struct ExperimentConfig {
  Variant variant = Variant::graph_attention;
  std::size_t hops = 2;  // fusion hops, or transformer layers
  std::size_t hidden_dim = 300;
  double learning_rate = 2e-4;
  std::size_t epochs = 30;
  std::size_t batch_size = 24;
  std::uint64_t seed = 7;

  std::size_t num_heads = 4;
  std::size_t ffn_dim = 600;
  NormPlacement norm = NormPlacement::post;
  double leaky_slope = 0.2;
  AdjacencyOverride adjacency_override = AdjacencyOverride::none;
  MentionMatch mention_match = MentionMatch::normalized;
  double embedding_scale = 0.3;

  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  std::vector<double> quantiles{0.2, 0.4, 0.6, 0.8, 1.0};
  bool eval_each_epoch = false;

  // Pass/fail thresholds for the variant comparison.
  double min_accuracy = 0.90;
  double max_gap = 0.05;
  double max_bin_gap = 0.07;
  double max_baseline_accuracy = 0.55;

  void validate() const;
  static ExperimentConfig from_config(const KeyValueConfig& kv);
  nlohmann::json to_json() const;
};

// Every key understood by SyntheticTaskConfig and ExperimentConfig.
const std::set<std::string>& known_config_keys();

}  // namespace attnlab
