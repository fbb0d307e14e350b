#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace attnlab {

// Half-open token range [start, end).
struct SentenceSpan {
  std::size_t start = 0;
  std::size_t end = 0;

  bool operator==(const SentenceSpan&) const = default;
};

struct EntitySpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string mention;
  std::size_t sentence_index = 0;

  bool operator==(const EntitySpan&) const = default;
};

// One annotated context: tokens, sentence boundaries and entity mentions.
struct ContextExample {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<SentenceSpan> sentence_spans;
  std::vector<EntitySpan> entity_spans;

  bool operator==(const ContextExample&) const = default;
};

// Throws ValidationError naming the offending sentence or entity span.
void validate(const ContextExample& example);

// Parse one JSON object; throws ValidationError on missing/mistyped keys.
ContextExample context_example_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ContextExample& example);

// Reads one ContextExample per non-blank line. Errors are ParseError with
// the 1-based line number. Examples are validated.
std::vector<ContextExample> read_context_jsonl(const std::filesystem::path& path);
void write_context_jsonl(const std::filesystem::path& path,
                         const std::vector<ContextExample>& examples);

}  // namespace attnlab
