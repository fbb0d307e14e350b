#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "attnlab/params.hpp"

namespace attnlab {

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

// Little-endian IEEE-754 binary64 payload for `values`.
std::string encode_f64_le(std::span<const double> values);
std::vector<double> decode_f64_le(std::string_view base64);

// {"format": "attnlab-checkpoint", "version": 1, "metadata": {...},
//  "tensors": [{"name", "rows", "cols", "dtype": "f64le", "data": base64}]}
nlohmann::json checkpoint_to_json(const ParamList& params, const nlohmann::json& metadata);

// Fills every tensor in `params` from `manifest`, matching by name and
// checking shapes. Returns the metadata object. Throws ParseError.
nlohmann::json checkpoint_from_json(const nlohmann::json& manifest, const ParamList& params);

void save_checkpoint(const std::filesystem::path& path, const ParamList& params,
                     const nlohmann::json& metadata);
nlohmann::json read_checkpoint_manifest(const std::filesystem::path& path);

}  // namespace attnlab
