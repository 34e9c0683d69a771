#pragma once

#include <filesystem>
#include <string_view>

namespace sepdiff {

/// Writes `bytes` to `path` via a sibling temporary file and a rename, so
/// readers never observe a partial file. Throws IoError.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Whole file contents; throws IoError naming the path.
std::string read_file(const std::filesystem::path& path);

}  // namespace sepdiff
