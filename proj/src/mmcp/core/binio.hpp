#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mmcp {

// Raw little-endian array files. All multi-byte payloads on disk are
// little-endian regardless of host order.

void write_f32_le(const std::filesystem::path& path, const std::vector<float>& values);
// Fails with FormatError (naming the file and the expected byte count) when the
// file is missing, truncated, or oversized.
std::vector<float> read_f32_le(const std::filesystem::path& path, std::size_t expected_count);

void write_f64_le(const std::filesystem::path& path, const std::vector<double>& values);
std::vector<double> read_f64_le(const std::filesystem::path& path, std::size_t expected_count);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace mmcp
