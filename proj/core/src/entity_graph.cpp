#include "attnlab/entity_graph.hpp"

#include <cctype>

#include "attnlab/errors.hpp"

namespace attnlab {

MentionMatch parse_mention_match(std::string_view name) {
  if (name == "normalized") return MentionMatch::normalized;
  if (name == "exact") return MentionMatch::exact;
  throw UsageError("unknown mention match mode '" + std::string(name) + "'");
}

std::string normalize_mention(std::string_view mention) {
  std::string out;
  out.reserve(mention.size());
  bool pending_space = false;
  for (unsigned char c : mention) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

EntityGraph build_graph(const ContextExample& example, MentionMatch match) {
  validate(example);
  EntityGraph g;
  g.n = example.entity_spans.size();
  g.adjacency = Matrix(g.n, g.n);
  g.mentions.reserve(g.n);
  for (const auto& e : example.entity_spans) {
    g.mentions.push_back(match == MentionMatch::normalized ? normalize_mention(e.mention)
                                                           : e.mention);
  }
  for (std::size_t i = 0; i < g.n; ++i) {
    g.adjacency(i, i) = 1.0;
    for (std::size_t j = i + 1; j < g.n; ++j) {
      const bool same_mention = g.mentions[i] == g.mentions[j];
      const bool same_sentence =
          example.entity_spans[i].sentence_index == example.entity_spans[j].sentence_index;
      if (same_mention || same_sentence) {
        g.adjacency(i, j) = 1.0;
        g.adjacency(j, i) = 1.0;
      }
    }
  }
  return g;
}

void validate_adjacency(const Matrix& a) {
  if (a.rows() != a.cols()) throw ShapeError("adjacency must be square, got " + a.shape_string());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    if (a(i, i) != 1.0) {
      throw ValidationError("adjacency diagonal entry " + std::to_string(i) +
                            " is not 1 (empty neighbourhood)");
    }
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double v = a(i, j);
      if (v != 0.0 && v != 1.0) {
        throw ValidationError("adjacency entry (" + std::to_string(i) + ", " + std::to_string(j) +
                              ") is not binary");
      }
      if (v != a(j, i)) {
        throw ValidationError("adjacency is not symmetric at (" + std::to_string(i) + ", " +
                              std::to_string(j) + ")");
      }
    }
  }
}

double density(const Matrix& adjacency) {
  if (adjacency.empty()) return 0.0;
  std::size_t ones = 0;
  for (double v : adjacency.values()) ones += v == 1.0 ? 1 : 0;
  return static_cast<double>(ones) / static_cast<double>(adjacency.size());
}

nlohmann::json to_json(const EntityGraph& g) {
  nlohmann::json adj = nlohmann::json::array();
  for (std::size_t i = 0; i < g.n; ++i) {
    std::vector<int> row(g.n);
    for (std::size_t j = 0; j < g.n; ++j) row[j] = g.adjacency(i, j) == 1.0 ? 1 : 0;
    adj.push_back(row);
  }
  return {{"n", g.n}, {"mentions", g.mentions}, {"adjacency", adj}, {"density", density(g)}};
}

}  // namespace attnlab
