#include "mmcp/core/binio.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "mmcp/core/errors.hpp"

namespace mmcp {
namespace {

template <typename T>
void write_le(const std::filesystem::path& path, const std::vector<T>& values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  static_assert(std::endian::native == std::endian::little,
                "payload byte order assumes a little-endian host");
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(T)));
  if (!out) throw FormatError("short write: " + path.string());
}

template <typename T>
std::vector<T> read_le(const std::filesystem::path& path, std::size_t expected_count) {
  const std::size_t expected_bytes = expected_count * sizeof(T);
  std::error_code ec;
  const auto actual = std::filesystem::file_size(path, ec);
  if (ec) {
    throw FormatError("missing array file: " + path.string() + " (expected " +
                      std::to_string(expected_bytes) + " bytes)");
  }
  if (actual != expected_bytes) {
    throw FormatError("array file " + path.string() + " has " + std::to_string(actual) +
                      " bytes, expected " + std::to_string(expected_bytes));
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open for reading: " + path.string());
  std::vector<T> values(expected_count);
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(expected_bytes));
  if (static_cast<std::size_t>(in.gcount()) != expected_bytes) {
    throw FormatError("short read: " + path.string() + " (expected " +
                      std::to_string(expected_bytes) + " bytes)");
  }
  return values;
}

}  // namespace

void write_f32_le(const std::filesystem::path& path, const std::vector<float>& values) {
  write_le(path, values);
}

std::vector<float> read_f32_le(const std::filesystem::path& path, std::size_t expected_count) {
  return read_le<float>(path, expected_count);
}

void write_f64_le(const std::filesystem::path& path, const std::vector<double>& values) {
  write_le(path, values);
}

std::vector<double> read_f64_le(const std::filesystem::path& path, std::size_t expected_count) {
  return read_le<double>(path, expected_count);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  out << text;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open for reading: " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace mmcp
