#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace seqstate {

// Writes to a sibling temporary file and renames it into place, so readers
// never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

std::string read_file(const std::filesystem::path& path);

// 64-bit FNV-1a digest, rendered as 16 hex digits. Used to tie run
// artifacts to the exact cohort file they were trained on.
std::string fnv1a_hex(const std::string& bytes);

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace seqstate
