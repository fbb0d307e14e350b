#include "attnlab/synthetic.hpp"

#include <algorithm>
#include <deque>
#include <fstream>

#include "attnlab/errors.hpp"
#include "attnlab/rng.hpp"
#include "attnlab/text.hpp"

namespace attnlab {

namespace {

std::string entity_token(std::size_t id) { return "ent" + std::to_string(id); }
std::string filler_token(std::size_t id) { return "w" + std::to_string(id); }

struct PlannedSentence {
  std::vector<std::size_t> entities;  // pool ids
};

// Distinct pool ids, first `count` of a partial Fisher-Yates shuffle.
std::vector<std::size_t> draw_distinct(SeededRng& rng, std::size_t pool, std::size_t count) {
  std::vector<std::size_t> ids(pool);
  for (std::size_t i = 0; i < pool; ++i) ids[i] = i;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(count);
  return ids;
}

LabeledExample generate_one(const SyntheticTaskConfig& cfg, SeededRng rng, const std::string& id) {
  const std::size_t sentences =
      cfg.sentences_per_context - static_cast<std::size_t>(rng.below(cfg.sentence_jitter + 1));
  const std::size_t distractor_sentences = sentences - 2;
  const std::size_t needed =
      3 + cfg.distractor_count + distractor_sentences * cfg.entities_per_sentence;
  if (needed > cfg.num_entities_pool) {
    throw GenerationError("entity pool of " + std::to_string(cfg.num_entities_pool) +
                          " cannot hold " + std::to_string(needed) +
                          " distinct mentions per context");
  }
  const std::vector<std::size_t> ids = draw_distinct(rng, cfg.num_entities_pool, needed);
  const std::size_t q = ids[0], b = ids[1], a = ids[2];
  std::size_t next = 3;

  std::vector<PlannedSentence> plan;
  PlannedSentence query_sentence{{q, b}};
  for (std::size_t i = 0; i < cfg.distractor_count; ++i) query_sentence.entities.push_back(ids[next++]);
  plan.push_back(std::move(query_sentence));
  plan.push_back({{b, a}});

  std::vector<std::size_t> distractor_mentions;
  for (std::size_t s = 0; s < distractor_sentences; ++s) {
    PlannedSentence ps;
    for (std::size_t k = 0; k < cfg.entities_per_sentence; ++k) ps.entities.push_back(ids[next++]);
    // Reuse an earlier distractor mention: a decoy bridge that never reaches q.
    if (s > 0 && rng.bernoulli(cfg.collision_rate)) {
      const std::size_t reuse =
          distractor_mentions[static_cast<std::size_t>(rng.below(distractor_mentions.size()))];
      ps.entities[static_cast<std::size_t>(rng.below(ps.entities.size()))] = reuse;
    }
    distractor_mentions.insert(distractor_mentions.end(), ps.entities.begin(), ps.entities.end());
    plan.push_back(std::move(ps));
  }

  std::vector<std::size_t> order(plan.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(std::span<std::size_t>(order));

  LabeledExample out;
  out.example.id = id;
  auto& ex = out.example;
  bool found_query = false, found_answer = false;
  for (std::size_t position = 0; position < order.size(); ++position) {
    const std::size_t plan_index = order[position];
    const PlannedSentence& ps = plan[plan_index];
    // Slots: entity ids first, then fillers (marked with npos), shuffled together.
    std::vector<std::size_t> slots = ps.entities;
    const std::size_t filler_mark = static_cast<std::size_t>(-1);
    slots.insert(slots.end(), cfg.fillers_per_sentence, filler_mark);
    rng.shuffle(std::span<std::size_t>(slots));

    const std::size_t start = ex.tokens.size();
    for (std::size_t slot : slots) {
      if (slot == filler_mark) {
        ex.tokens.push_back(filler_token(static_cast<std::size_t>(rng.below(cfg.filler_vocab))));
        continue;
      }
      const std::size_t t = ex.tokens.size();
      ex.tokens.push_back(entity_token(slot));
      if (plan_index == 0 && slot == q) {
        out.query_node = ex.entity_spans.size();
        found_query = true;
      }
      if (plan_index == 1 && slot == a) {
        out.answer_node = ex.entity_spans.size();
        found_answer = true;
      }
      ex.entity_spans.push_back({t, t + 1, entity_token(slot), position});
    }
    ex.tokens.push_back(".");
    ex.sentence_spans.push_back({start, ex.tokens.size()});
  }
  if (!found_query || !found_answer) throw GenerationError(id + ": lost query or answer entity");
  return out;
}

}  // namespace

std::vector<LabeledExample> generate_synthetic(const SyntheticTaskConfig& config,
                                               const std::string& split, std::size_t count) {
  config.validate();
  const SeededRng root = SeededRng(config.seed).split(split);
  std::vector<LabeledExample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(generate_one(config, root.split(static_cast<std::uint64_t>(i)),
                               split + "-" + std::to_string(i)));
  }
  return out;
}

nlohmann::json to_json(const LabeledExample& ex) {
  nlohmann::json j = to_json(ex.example);
  j["query_node"] = ex.query_node;
  j["answer_node"] = ex.answer_node;
  return j;
}

LabeledExample labeled_example_from_json(const nlohmann::json& j) {
  LabeledExample ex;
  ex.example = context_example_from_json(j);
  validate(ex.example);
  try {
    ex.query_node = j.at("query_node").get<std::size_t>();
    ex.answer_node = j.at("answer_node").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("labels: ") + e.what());
  }
  const std::size_t n = ex.example.entity_spans.size();
  if (ex.query_node >= n || ex.answer_node >= n) {
    throw ValidationError(ex.example.id + ": query/answer node out of range");
  }
  return ex;
}

void write_labeled_jsonl(const std::filesystem::path& path,
                         const std::vector<LabeledExample>& examples) {
  std::string body;
  for (const auto& ex : examples) body += to_json(ex).dump() + "\n";
  write_text_file(path, body);
}

std::vector<LabeledExample> read_labeled_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, "cannot open " + path.string());
  std::vector<LabeledExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(labeled_example_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, e.what());
    } catch (const ValidationError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

std::string two_hop_violation(const LabeledExample& ex, MentionMatch match) {
  const EntityGraph g = build_graph(ex.example, match);
  if (ex.query_node >= g.n || ex.answer_node >= g.n) return "label out of range";
  // Entity id per node: first node carrying the same mention.
  std::vector<std::size_t> entity(g.n);
  for (std::size_t i = 0; i < g.n; ++i) {
    entity[i] = i;
    for (std::size_t j = 0; j < i; ++j) {
      if (g.mentions[j] == g.mentions[i]) {
        entity[i] = entity[j];
        break;
      }
    }
  }
  constexpr std::size_t unreached = static_cast<std::size_t>(-1);
  std::vector<std::size_t> dist(g.n, unreached);
  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < g.n; ++i) {
    if (entity[i] == entity[ex.query_node]) {
      dist[i] = 0;
      queue.push_back(i);
    }
  }
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    for (std::size_t v = 0; v < g.n; ++v) {
      if (g.adjacency(u, v) == 0.0 || dist[v] != unreached) continue;
      // Mentions of one entity share a distance.
      for (std::size_t w = 0; w < g.n; ++w) {
        if (entity[w] == entity[v] && dist[w] == unreached) {
          dist[w] = dist[u] + 1;
          queue.push_back(w);
        }
      }
    }
  }
  if (dist[ex.answer_node] != 2) {
    return "answer at distance " +
           (dist[ex.answer_node] == unreached ? std::string("inf")
                                              : std::to_string(dist[ex.answer_node]));
  }
  for (std::size_t i = 0; i < g.n; ++i) {
    if (dist[i] == 2 && entity[i] != entity[ex.answer_node]) {
      return "second entity '" + g.mentions[i] + "' at distance 2";
    }
  }
  return {};
}

}  // namespace attnlab
