#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace hashpose {

/// Writes to a sibling temp file, then renames over `path`. Creates parent
/// directories as needed.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

/// HASHPOSE_OUTPUT_ROOT, or "runs" when unset.
std::filesystem::path output_root();

}  // namespace hashpose
