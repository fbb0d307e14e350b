#pragma once

#include <filesystem>
#include <string>

namespace attnlab {

// Shortest round-trip decimal form; identical bytes for identical doubles.
std::string format_double(double v);

// Writes `content` to `path`, creating parent directories.
void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace attnlab
