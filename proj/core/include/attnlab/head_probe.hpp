#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "attnlab/attention_trace.hpp"
#include "attnlab/matrix.hpp"

namespace attnlab {

// Which side of the attention matrix is grouped by the entity mask.
enum class ScoreDirection {
  incoming,  // columns: weight received by entity tokens (keys)
  outgoing,  // rows: weight sent by entity tokens (queries)
};

enum class ScoreNormalization {
  column_mean,  // mean per entity column minus mean per non-entity column
  raw_sum,      // plain sums, no correction for how many tokens each group has
};

ScoreDirection parse_score_direction(std::string_view name);
ScoreNormalization parse_score_normalization(std::string_view name);

struct HeadScoreOptions {
  ScoreDirection direction = ScoreDirection::incoming;
  ScoreNormalization normalization = ScoreNormalization::column_mean;
};

// Entity-focus score of one head. The mask needs at least one entity and
// one non-entity token, otherwise DomainError.
double head_entity_score(const Matrix& attention, const std::vector<bool>& entity_mask,
                         const HeadScoreOptions& options = {});

struct HeadRank {
  std::size_t layer = 0;
  std::size_t head = 0;
  double score_colmean = 0.0;
  double score_rawsum = 0.0;
  std::size_t rank = 0;  // 1-based
};

// Mean score per head over all traces, best first. Ties go to the lower
// (layer, head). `rank_by` picks which of the two scores orders the list.
std::vector<HeadRank> rank_heads(std::span<const AttentionTrace> traces,
                                 ScoreDirection direction = ScoreDirection::incoming,
                                 ScoreNormalization rank_by = ScoreNormalization::column_mean);

// Column `target` of the attention matrix: how much every token attends to it.
std::vector<double> attention_to_token(const Matrix& attention, std::size_t target);

// Columns: layer,head,score_colmean,score_rawsum,rank
std::string head_report_csv(const std::vector<HeadRank>& ranks);
nlohmann::json head_report_json(const std::vector<HeadRank>& ranks);

}  // namespace attnlab
