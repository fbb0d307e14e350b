#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "attnlab/matrix.hpp"

namespace attnlab {

// Attention maps of one example: layers[layer][head] is L×L and row-stochastic.
struct AttentionTrace {
  std::string example_id;
  std::vector<std::vector<Matrix>> layers;
  std::vector<bool> entity_mask;  // true where the token lies in an entity span

  std::size_t length() const noexcept { return entity_mask.size(); }
  std::size_t layer_count() const noexcept { return layers.size(); }
  std::size_t head_count() const noexcept { return layers.empty() ? 0 : layers.front().size(); }
};

// Throws ValidationError if shapes disagree or a row sum is off by more than `tolerance`.
void validate(const AttentionTrace& trace, double tolerance = 1e-6);

// {"example_id", "entity_mask": [bool], "layers": [[ [[row], ...], ...], ...]}
// Matrices are arrays of rows; a flat row-major array of length L·L is also accepted.
nlohmann::json to_json(const AttentionTrace& trace);
AttentionTrace attention_trace_from_json(const nlohmann::json& j);

std::vector<AttentionTrace> read_trace_jsonl(const std::filesystem::path& path);
void write_trace_jsonl(const std::filesystem::path& path, const std::vector<AttentionTrace>& traces);

}  // namespace attnlab
