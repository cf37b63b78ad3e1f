#pragma once

#include <filesystem>
#include <string>

#include "mmcp/world/world.hpp"

namespace mmcp::world {

// On-disk layout:
//   <root>/manifest.json            dataset-level metadata
//   <root>/seq_0000/manifest.json   per-sequence metadata and array table
//   <root>/seq_0000/rgb.f32 ...     little-endian float32 payloads
//
// Readers validate the manifest and every payload size before returning any
// array, and throw FormatError naming the offending file on a mismatch.
// write(read(x)) is byte-identical to write(x).

void write_sequence(const SequenceRecord& rec, const std::filesystem::path& dir);
SequenceRecord read_sequence(const std::filesystem::path& dir);

void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

std::string sequence_dir_name(int index);

}  // namespace mmcp::world
