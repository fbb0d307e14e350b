#include "attnlab/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "attnlab/density.hpp"
#include "attnlab/errors.hpp"

namespace attnlab {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::string unquote(std::string v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text, const std::string& source) {
  KeyValueConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ParseError(line_no, source + ": expected key = value");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw ParseError(line_no, source + ": empty key");
    cfg.entries_[key] = unquote(trim(std::string_view(body).substr(eq + 1)));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void KeyValueConfig::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw UsageError("override '" + std::string(assignment) + "' is not key=value");
  }
  const std::string key = trim(assignment.substr(0, eq));
  if (key.empty()) throw UsageError("override with empty key");
  entries_[key] = unquote(trim(assignment.substr(eq + 1)));
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    double out = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "': '" + *v + "' is not a number");
  }
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  auto [end, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc{} || end != v->data() + v->size()) {
    throw UsageError("config key '" + key + "': '" + *v + "' is not a non-negative integer");
  }
  return out;
}

std::size_t KeyValueConfig::get_count(const std::string& key, std::size_t fallback) const {
  return static_cast<std::size_t>(get_u64(key, fallback));
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw UsageError("config key '" + key + "': '" + *v + "' is not a boolean");
}

void KeyValueConfig::require_known(const std::set<std::string>& allowed) const {
  std::string unknown;
  for (const auto& [k, _] : entries_) {
    if (!allowed.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
  }
  if (!unknown.empty()) throw UsageError("unknown config key(s): " + unknown);
}

void SyntheticTaskConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v < 1) throw ValidationError(std::string("synthetic config: ") + name + " must be >= 1");
  };
  positive(num_examples, "num_examples");
  positive(num_test_examples, "num_test_examples");
  positive(num_entities_pool, "num_entities_pool");
  positive(entities_per_sentence, "entities_per_sentence");
  positive(filler_vocab, "filler_vocab");
  if (sentences_per_context < 2) {
    throw ValidationError("synthetic config: sentences_per_context must be >= 2");
  }
  if (sentence_jitter > sentences_per_context - 2) {
    throw ValidationError("synthetic config: sentence_jitter leaves fewer than 2 sentences");
  }
  if (!(collision_rate >= 0.0 && collision_rate <= 1.0)) {
    throw ValidationError("synthetic config: collision_rate must lie in [0, 1]");
  }
}

SyntheticTaskConfig SyntheticTaskConfig::from_config(const KeyValueConfig& kv) {
  SyntheticTaskConfig c;
  c.num_examples = kv.get_count("num_examples", c.num_examples);
  c.num_test_examples = kv.get_count("num_test_examples", c.num_test_examples);
  c.num_entities_pool = kv.get_count("num_entities_pool", c.num_entities_pool);
  c.sentences_per_context = kv.get_count("sentences_per_context", c.sentences_per_context);
  c.sentence_jitter = kv.get_count("sentence_jitter", c.sentence_jitter);
  c.entities_per_sentence = kv.get_count("entities_per_sentence", c.entities_per_sentence);
  c.distractor_count = kv.get_count("distractor_count", c.distractor_count);
  c.fillers_per_sentence = kv.get_count("fillers_per_sentence", c.fillers_per_sentence);
  c.filler_vocab = kv.get_count("filler_vocab", c.filler_vocab);
  c.collision_rate = kv.get_double("collision_rate", c.collision_rate);
  c.seed = kv.get_u64("data_seed", c.seed);
  c.validate();
  return c;
}

nlohmann::json SyntheticTaskConfig::to_json() const {
  return {{"num_examples", num_examples},
          {"num_test_examples", num_test_examples},
          {"num_entities_pool", num_entities_pool},
          {"sentences_per_context", sentences_per_context},
          {"sentence_jitter", sentence_jitter},
          {"entities_per_sentence", entities_per_sentence},
          {"distractor_count", distractor_count},
          {"fillers_per_sentence", fillers_per_sentence},
          {"filler_vocab", filler_vocab},
          {"collision_rate", collision_rate},
          {"data_seed", seed}};
}

Variant parse_variant(std::string_view name) {
  if (name == "graph_attention") return Variant::graph_attention;
  if (name == "self_attention") return Variant::self_attention;
  if (name == "transformer") return Variant::transformer;
  if (name == "none") return Variant::none;
  throw UsageError("unknown variant '" + std::string(name) + "'");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::graph_attention: return "graph_attention";
    case Variant::self_attention: return "self_attention";
    case Variant::transformer: return "transformer";
    case Variant::none: return "none";
  }
  return "unknown";
}

void ExperimentConfig::validate() const {
  if (hops < 1) throw ValidationError("experiment config: hops must be >= 1");
  if (hidden_dim < 1) throw ValidationError("experiment config: hidden_dim must be >= 1");
  if (!(learning_rate > 0.0)) throw ValidationError("experiment config: learning_rate must be > 0");
  if (epochs < 1) throw ValidationError("experiment config: epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("experiment config: batch_size must be >= 1");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) {
    throw ValidationError("experiment config: leaky_slope must lie in (0, 1)");
  }
  if (variant == Variant::transformer &&
      (num_heads == 0 || hidden_dim % num_heads != 0)) {
    throw ValidationError("experiment config: num_heads must divide hidden_dim");
  }
  if (!(embedding_scale > 0.0)) {
    throw ValidationError("experiment config: embedding_scale must be > 0");
  }
}

ExperimentConfig ExperimentConfig::from_config(const KeyValueConfig& kv) {
  ExperimentConfig c;
  c.variant = parse_variant(kv.get_string("variant", to_string(c.variant)));
  c.hops = kv.get_count("hops", c.hops);
  c.hidden_dim = kv.get_count("hidden_dim", c.hidden_dim);
  c.learning_rate = kv.get_double("learning_rate", c.learning_rate);
  c.epochs = kv.get_count("epochs", c.epochs);
  c.batch_size = kv.get_count("batch_size", c.batch_size);
  c.seed = kv.get_u64("seed", c.seed);
  c.num_heads = kv.get_count("num_heads", c.num_heads);
  c.ffn_dim = kv.get_count("ffn_dim", c.ffn_dim);
  c.norm = parse_norm_placement(kv.get_string("norm", "post"));
  c.leaky_slope = kv.get_double("leaky_slope", c.leaky_slope);
  const std::string override_name = kv.get_string("adjacency_override", "none");
  if (override_name == "none") {
    c.adjacency_override = AdjacencyOverride::none;
  } else if (override_name == "all_ones") {
    c.adjacency_override = AdjacencyOverride::all_ones;
  } else {
    throw UsageError("unknown adjacency_override '" + override_name + "'");
  }
  c.mention_match = parse_mention_match(kv.get_string("mention_match", "normalized"));
  c.embedding_scale = kv.get_double("embedding_scale", c.embedding_scale);
  c.adam_beta1 = kv.get_double("adam_beta1", c.adam_beta1);
  c.adam_beta2 = kv.get_double("adam_beta2", c.adam_beta2);
  c.adam_eps = kv.get_double("adam_eps", c.adam_eps);
  if (auto q = kv.get("quantiles")) c.quantiles = parse_quantiles(*q);
  c.eval_each_epoch = kv.get_bool("eval_each_epoch", c.eval_each_epoch);
  c.min_accuracy = kv.get_double("min_accuracy", c.min_accuracy);
  c.max_gap = kv.get_double("max_gap", c.max_gap);
  c.max_bin_gap = kv.get_double("max_bin_gap", c.max_bin_gap);
  c.max_baseline_accuracy = kv.get_double("max_baseline_accuracy", c.max_baseline_accuracy);
  c.validate();
  return c;
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"variant", to_string(variant)},
          {"hops", hops},
          {"hidden_dim", hidden_dim},
          {"learning_rate", learning_rate},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"seed", seed},
          {"num_heads", num_heads},
          {"ffn_dim", ffn_dim},
          {"norm", norm == NormPlacement::post ? "post" : "pre"},
          {"leaky_slope", leaky_slope},
          {"adjacency_override",
           adjacency_override == AdjacencyOverride::none ? "none" : "all_ones"},
          {"mention_match", mention_match == MentionMatch::normalized ? "normalized" : "exact"},
          {"embedding_scale", embedding_scale},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"adam_eps", adam_eps},
          {"quantiles", quantiles}};
}

const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys = {
      // synthetic task
      "num_examples", "num_test_examples", "num_entities_pool", "sentences_per_context",
      "sentence_jitter", "entities_per_sentence", "distractor_count", "fillers_per_sentence",
      "filler_vocab", "collision_rate", "data_seed",
      // experiment
      "variant", "hops", "hidden_dim", "learning_rate", "epochs", "batch_size", "seed",
      "num_heads", "ffn_dim", "norm", "leaky_slope", "adjacency_override", "mention_match",
      "embedding_scale", "adam_beta1", "adam_beta2", "adam_eps", "quantiles", "eval_each_epoch",
      "min_accuracy", "max_gap", "max_bin_gap", "max_baseline_accuracy",
      // checks and probe
      "equivalence_instances", "gradcheck_instances", "gradcheck_eps", "probe_direction",
      "probe_rank_by", "export_traces"};
  return keys;
}

}  // namespace attnlab
