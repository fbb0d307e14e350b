#include "attnlab/context_example.hpp"

#include <fstream>
#include <string>

#include "attnlab/errors.hpp"
#include "attnlab/text.hpp"

namespace attnlab {

namespace {

std::string span_label(std::size_t index, const EntitySpan& s) {
  return "entity span " + std::to_string(index) + " [" + std::to_string(s.start) + ", " +
         std::to_string(s.end) + ") '" + s.mention + "'";
}

template <typename T>
T require_key(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw ValidationError(std::string("missing key '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("key '") + key + "': " + e.what());
  }
}

}  // namespace

void validate(const ContextExample& ex) {
  const std::size_t n_tokens = ex.tokens.size();
  for (std::size_t i = 0; i < ex.sentence_spans.size(); ++i) {
    const auto& s = ex.sentence_spans[i];
    const std::string label = "sentence span " + std::to_string(i) + " [" +
                              std::to_string(s.start) + ", " + std::to_string(s.end) + ")";
    if (s.start > s.end || s.end > n_tokens) {
      throw ValidationError(ex.id + ": " + label + " is outside [0, " + std::to_string(n_tokens) +
                            "]");
    }
    if (i > 0 && s.start < ex.sentence_spans[i - 1].end) {
      throw ValidationError(ex.id + ": " + label + " overlaps or precedes the previous sentence");
    }
  }
  for (std::size_t i = 0; i < ex.entity_spans.size(); ++i) {
    const auto& e = ex.entity_spans[i];
    if (e.end <= e.start) throw ValidationError(ex.id + ": " + span_label(i, e) + " is empty");
    if (e.sentence_index >= ex.sentence_spans.size()) {
      throw ValidationError(ex.id + ": " + span_label(i, e) + " refers to missing sentence " +
                            std::to_string(e.sentence_index));
    }
    const auto& s = ex.sentence_spans[e.sentence_index];
    if (e.start < s.start || e.end > s.end) {
      throw ValidationError(ex.id + ": " + span_label(i, e) + " is not inside sentence " +
                            std::to_string(e.sentence_index));
    }
  }
}

ContextExample context_example_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("expected a JSON object");
  ContextExample ex;
  ex.id = require_key<std::string>(j, "id");
  ex.tokens = require_key<std::vector<std::string>>(j, "tokens");
  auto sentences = require_key<std::vector<std::vector<std::size_t>>>(j, "sentence_spans");
  for (const auto& s : sentences) {
    if (s.size() != 2) throw ValidationError("sentence span must be [start, end]");
    ex.sentence_spans.push_back({s[0], s[1]});
  }
  const auto entities = require_key<nlohmann::json>(j, "entity_spans");
  if (!entities.is_array()) throw ValidationError("entity_spans must be an array");
  for (const auto& e : entities) {
    EntitySpan span;
    span.start = require_key<std::size_t>(e, "start");
    span.end = require_key<std::size_t>(e, "end");
    span.mention = require_key<std::string>(e, "mention");
    span.sentence_index = require_key<std::size_t>(e, "sentence_index");
    ex.entity_spans.push_back(std::move(span));
  }
  return ex;
}

nlohmann::json to_json(const ContextExample& ex) {
  nlohmann::json j;
  j["id"] = ex.id;
  j["tokens"] = ex.tokens;
  auto sentences = nlohmann::json::array();
  for (const auto& s : ex.sentence_spans) sentences.push_back({s.start, s.end});
  j["sentence_spans"] = sentences;
  auto entities = nlohmann::json::array();
  for (const auto& e : ex.entity_spans) {
    entities.push_back({{"start", e.start},
                        {"end", e.end},
                        {"mention", e.mention},
                        {"sentence_index", e.sentence_index}});
  }
  j["entity_spans"] = entities;
  return j;
}

std::vector<ContextExample> read_context_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, "cannot open " + path.string());
  std::vector<ContextExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto ex = context_example_from_json(nlohmann::json::parse(line));
      validate(ex);
      out.push_back(std::move(ex));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, e.what());
    } catch (const ValidationError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

void write_context_jsonl(const std::filesystem::path& path,
                         const std::vector<ContextExample>& examples) {
  std::string body;
  for (const auto& ex : examples) body += to_json(ex).dump() + "\n";
  write_text_file(path, body);
}

}  // namespace attnlab
