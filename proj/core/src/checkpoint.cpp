#include "attnlab/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "attnlab/errors.hpp"
#include "attnlab/text.hpp"

namespace attnlab {

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(kAlphabet[(v >> 6) & 63]);
    out.push_back(kAlphabet[v & 63]);
  }
  const std::size_t rest = bytes.size() - i;
  if (rest > 0) {
    std::uint32_t v = bytes[i] << 16;
    if (rest == 2) v |= bytes[i + 1] << 8;
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(rest == 2 ? kAlphabet[(v >> 6) & 63] : '=');
    out.push_back('=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw ParseError(0, "base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::array<int, 4> q{};
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        q[k] = 0;
        ++pad;
        continue;
      }
      if (pad > 0) throw ParseError(0, "base64 padding in the middle of a quantum");
      q[k] = decode_char(c);
      if (q[k] < 0) throw ParseError(0, "invalid base64 character");
    }
    const std::uint32_t v = (q[0] << 18) | (q[1] << 12) | (q[2] << 6) | q[3];
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(v >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

std::string encode_f64_le(std::span<const double> values) {
  std::vector<std::uint8_t> bytes(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return base64_encode(bytes);
}

std::vector<double> decode_f64_le(std::string_view base64) {
  const auto bytes = base64_decode(base64);
  if (bytes.size() % 8 != 0) throw ParseError(0, "f64 payload length is not a multiple of 8");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

nlohmann::json checkpoint_to_json(const ParamList& params, const nlohmann::json& metadata) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& p : params) {
    tensors.push_back({{"name", p.name},
                       {"rows", p.value->rows()},
                       {"cols", p.value->cols()},
                       {"dtype", "f64le"},
                       {"data", encode_f64_le(p.value->values())}});
  }
  return {{"format", "attnlab-checkpoint"},
          {"version", 1},
          {"metadata", metadata},
          {"tensors", tensors}};
}

nlohmann::json checkpoint_from_json(const nlohmann::json& manifest, const ParamList& params) {
  try {
    if (manifest.value("format", "") != "attnlab-checkpoint") {
      throw ParseError(0, "not an attnlab checkpoint");
    }
    if (manifest.value("version", 0) != 1) throw ParseError(0, "unsupported checkpoint version");
    std::map<std::string, const nlohmann::json*> by_name;
    for (const auto& t : manifest.at("tensors")) by_name[t.at("name").get<std::string>()] = &t;
    for (const auto& p : params) {
      auto it = by_name.find(p.name);
      if (it == by_name.end()) throw ParseError(0, "checkpoint lacks tensor '" + p.name + "'");
      const auto& t = *it->second;
      if (t.value("dtype", "") != "f64le") throw ParseError(0, p.name + ": unsupported dtype");
      const auto rows = t.at("rows").get<std::size_t>();
      const auto cols = t.at("cols").get<std::size_t>();
      if (rows != p.value->rows() || cols != p.value->cols()) {
        throw ParseError(0, p.name + ": checkpoint shape " + std::to_string(rows) + "x" +
                                std::to_string(cols) + " vs expected " +
                                p.value->shape_string());
      }
      auto values = decode_f64_le(t.at("data").get<std::string>());
      *p.value = Matrix(rows, cols, std::move(values));
    }
    return manifest.value("metadata", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, std::string("malformed checkpoint: ") + e.what());
  } catch (const ShapeError& e) {
    throw ParseError(0, std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const ParamList& params,
                     const nlohmann::json& metadata) {
  write_text_file(path, checkpoint_to_json(params, metadata).dump() + "\n");
}

nlohmann::json read_checkpoint_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, path.string() + ": " + e.what());
  }
}

}  // namespace attnlab
