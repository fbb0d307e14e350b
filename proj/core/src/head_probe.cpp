#include "attnlab/head_probe.hpp"

#include <algorithm>
#include <cmath>

#include "attnlab/errors.hpp"
#include "attnlab/text.hpp"

namespace attnlab {

ScoreDirection parse_score_direction(std::string_view name) {
  if (name == "incoming" || name == "columns") return ScoreDirection::incoming;
  if (name == "outgoing" || name == "rows") return ScoreDirection::outgoing;
  throw UsageError("unknown score direction '" + std::string(name) + "'");
}

ScoreNormalization parse_score_normalization(std::string_view name) {
  if (name == "colmean" || name == "column_mean") return ScoreNormalization::column_mean;
  if (name == "rawsum" || name == "raw_sum") return ScoreNormalization::raw_sum;
  throw UsageError("unknown score normalization '" + std::string(name) + "'");
}

double head_entity_score(const Matrix& a, const std::vector<bool>& mask,
                         const HeadScoreOptions& options) {
  const std::size_t L = mask.size();
  if (a.rows() != L || a.cols() != L) {
    throw ShapeError("head_entity_score: attention " + a.shape_string() + " vs mask length " +
                     std::to_string(L));
  }
  const auto entities = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  if (entities == 0 || entities == L) {
    throw DomainError("head_entity_score: mask needs both entity and non-entity tokens");
  }
  // Total absolute weight per grouped index (column for incoming, row for outgoing).
  std::vector<double> total(L, 0.0);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < L; ++j) {
      total[options.direction == ScoreDirection::incoming ? j : i] += std::abs(a(i, j));
    }
  }
  if (options.normalization == ScoreNormalization::raw_sum) {
    double ent = 0.0, non = 0.0;
    for (std::size_t c = 0; c < L; ++c) (mask[c] ? ent : non) += total[c];
    return ent - non;
  }
  // Mean over all (entity, non-entity) pairs of the difference. Equal to the
  // difference of group means, and exactly 0 when every total is the same.
  double diff = 0.0;
  for (std::size_t e = 0; e < L; ++e) {
    if (!mask[e]) continue;
    for (std::size_t n = 0; n < L; ++n) {
      if (!mask[n]) diff += total[e] - total[n];
    }
  }
  return diff / (static_cast<double>(entities) * static_cast<double>(L - entities));
}

namespace {

// Order-independent mean: summing sorted values makes the result invariant
// to the order the traces arrive in.
double sorted_mean(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

std::vector<HeadRank> rank_heads(std::span<const AttentionTrace> traces, ScoreDirection direction,
                                 ScoreNormalization rank_by) {
  if (traces.empty()) throw DomainError("rank_heads: no traces");
  const std::size_t layers = traces.front().layer_count();
  const std::size_t heads = traces.front().head_count();
  for (const auto& t : traces) {
    bool same = t.layer_count() == layers;
    for (std::size_t l = 0; same && l < layers; ++l) same = t.layers[l].size() == heads;
    if (!same) {
      throw ValidationError("rank_heads: trace " + t.example_id + " has a different head layout");
    }
  }

  std::vector<HeadRank> out;
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t h = 0; h < heads; ++h) {
      std::vector<double> colmean, rawsum;
      colmean.reserve(traces.size());
      rawsum.reserve(traces.size());
      for (const auto& t : traces) {
        colmean.push_back(head_entity_score(t.layers[l][h], t.entity_mask,
                                            {direction, ScoreNormalization::column_mean}));
        rawsum.push_back(head_entity_score(t.layers[l][h], t.entity_mask,
                                           {direction, ScoreNormalization::raw_sum}));
      }
      out.push_back({l, h, sorted_mean(std::move(colmean)), sorted_mean(std::move(rawsum)), 0});
    }
  }
  auto key = [rank_by](const HeadRank& r) {
    return rank_by == ScoreNormalization::column_mean ? r.score_colmean : r.score_rawsum;
  };
  std::stable_sort(out.begin(), out.end(), [&](const HeadRank& x, const HeadRank& y) {
    if (key(x) != key(y)) return key(x) > key(y);
    if (x.layer != y.layer) return x.layer < y.layer;
    return x.head < y.head;
  });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = i + 1;
  return out;
}

std::vector<double> attention_to_token(const Matrix& a, std::size_t target) {
  if (target >= a.cols()) {
    throw DomainError("attention_to_token: target " + std::to_string(target) +
                      " out of range for length " + std::to_string(a.cols()));
  }
  std::vector<double> col(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) col[i] = a(i, target);
  return col;
}

std::string head_report_csv(const std::vector<HeadRank>& ranks) {
  std::string out = "layer,head,score_colmean,score_rawsum,rank\n";
  for (const auto& r : ranks) {
    out += std::to_string(r.layer) + "," + std::to_string(r.head) + "," +
           format_double(r.score_colmean) + "," + format_double(r.score_rawsum) + "," +
           std::to_string(r.rank) + "\n";
  }
  return out;
}

nlohmann::json head_report_json(const std::vector<HeadRank>& ranks) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : ranks) {
    out.push_back({{"layer", r.layer},
                   {"head", r.head},
                   {"score_colmean", r.score_colmean},
                   {"score_rawsum", r.score_rawsum},
                   {"rank", r.rank}});
  }
  return out;
}

}  // namespace attnlab
