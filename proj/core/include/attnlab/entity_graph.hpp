#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "attnlab/context_example.hpp"
#include "attnlab/matrix.hpp"

namespace attnlab {

enum class MentionMatch {
  normalized,  // case-fold, trim, collapse internal whitespace
  exact,
};

MentionMatch parse_mention_match(std::string_view name);

// ASCII case-fold + trim + collapse runs of whitespace to one space.
std::string normalize_mention(std::string_view mention);

// Nodes are entity spans in input order. adjacency is symmetric, binary and
// has a unit diagonal, so every node is its own neighbour.
struct EntityGraph {
  std::size_t n = 0;
  std::vector<std::string> mentions;
  Matrix adjacency;
};

// Edge (i, j) iff the two mentions match or both sit in the same sentence.
EntityGraph build_graph(const ContextExample& example,
                        MentionMatch match = MentionMatch::normalized);

// Throws ValidationError unless `adjacency` is square, 0/1, symmetric with ones on the diagonal.
void validate_adjacency(const Matrix& adjacency);

// Fraction of ones over the full n×n matrix, diagonal included.
double density(const Matrix& adjacency);
inline double density(const EntityGraph& g) { return density(g.adjacency); }

nlohmann::json to_json(const EntityGraph& g);

}  // namespace attnlab
