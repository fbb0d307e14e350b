#include "attnlab/attention_trace.hpp"

#include <cmath>
#include <fstream>

#include "attnlab/errors.hpp"
#include "attnlab/text.hpp"

namespace attnlab {

void validate(const AttentionTrace& trace, double tolerance) {
  const std::size_t L = trace.length();
  const std::size_t heads = trace.head_count();
  for (std::size_t l = 0; l < trace.layers.size(); ++l) {
    if (trace.layers[l].size() != heads) {
      throw ValidationError(trace.example_id + ": layer " + std::to_string(l) +
                            " has a different head count");
    }
    for (std::size_t h = 0; h < heads; ++h) {
      const Matrix& a = trace.layers[l][h];
      const std::string where = trace.example_id + ": layer " + std::to_string(l) + " head " +
                                std::to_string(h);
      if (a.rows() != L || a.cols() != L) {
        throw ValidationError(where + " is " + a.shape_string() + ", mask length " +
                              std::to_string(L));
      }
      for (std::size_t i = 0; i < L; ++i) {
        double sum = 0.0;
        for (double v : a.row(i)) sum += v;
        if (!(std::abs(sum - 1.0) <= tolerance)) {
          throw ValidationError(where + " row " + std::to_string(i) + " sums to " +
                                format_double(sum));
        }
      }
    }
  }
}

nlohmann::json to_json(const AttentionTrace& trace) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : trace.layers) {
    nlohmann::json heads = nlohmann::json::array();
    for (const auto& a : layer) {
      nlohmann::json rows = nlohmann::json::array();
      for (std::size_t i = 0; i < a.rows(); ++i) {
        rows.push_back(std::vector<double>(a.row(i).begin(), a.row(i).end()));
      }
      heads.push_back(std::move(rows));
    }
    layers.push_back(std::move(heads));
  }
  return {{"example_id", trace.example_id},
          {"entity_mask", trace.entity_mask},
          {"layers", layers}};
}

AttentionTrace attention_trace_from_json(const nlohmann::json& j) {
  AttentionTrace t;
  try {
    t.example_id = j.at("example_id").get<std::string>();
    t.entity_mask = j.at("entity_mask").get<std::vector<bool>>();
    const std::size_t L = t.entity_mask.size();
    for (const auto& layer : j.at("layers")) {
      std::vector<Matrix> heads;
      for (const auto& head : layer) {
        std::vector<double> flat;
        flat.reserve(L * L);
        for (const auto& item : head) {
          if (item.is_array()) {
            for (const auto& v : item) flat.push_back(v.get<double>());
          } else {
            flat.push_back(item.get<double>());
          }
        }
        if (flat.size() != L * L) {
          throw ValidationError(t.example_id + ": attention matrix has " +
                                std::to_string(flat.size()) + " entries, expected " +
                                std::to_string(L * L));
        }
        heads.emplace_back(L, L, std::move(flat));
      }
      t.layers.push_back(std::move(heads));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("attention trace: ") + e.what());
  }
  validate(t);
  return t;
}

std::vector<AttentionTrace> read_trace_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, "cannot open " + path.string());
  std::vector<AttentionTrace> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(attention_trace_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, e.what());
    } catch (const ValidationError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

void write_trace_jsonl(const std::filesystem::path& path,
                       const std::vector<AttentionTrace>& traces) {
  std::string body;
  for (const auto& t : traces) body += to_json(t).dump() + "\n";
  write_text_file(path, body);
}

}  // namespace attnlab
